"""Base rings: Z/p^n, the divided-power ring S at finite precision, the
quotient k[u]/u^{ep}, and O_K/p^n presented as W_n[u]/(E).

An element of S is stored in the divided basis ``u^i / q(i)!`` with
``q(i) = i // e``; keeping ``N`` basis elements and reducing coefficients
mod ``p^n`` gives the working truncation.  Every index set that is closed
upwards (``i >= N``) spans an ideal, so truncated products and Frobenius
images are exact.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    InvalidRingParams,
    NotDivisible,
    NotInFiltration,
    ParamsMismatch,
    ParseError,
    UnsupportedFiltrationDepth,
)
from .linalg import MAX_MODULUS, FlatLattice


def vp(x: int, p: int) -> int:
    """p-adic valuation of a nonzero integer."""
    x = abs(int(x))
    if x == 0:
        raise ValueError("valuation of zero")
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


def vp_factorial(m: int, p: int) -> int:
    v, pk = 0, p
    while pk <= m:
        v += m // pk
        pk *= p
    return v


def residue(x, p: int, n: int) -> int:
    """Image of an integer or p-integral fraction in Z/p^n."""
    q = p**n
    if isinstance(x, Fraction):
        if x.denominator % p == 0:
            raise NotDivisible(f"{x} is not p-integral")
        return x.numerator * pow(x.denominator, -1, q) % q
    return int(x) % q


def signed(x: int, q: int) -> int:
    x %= q
    return x - q if x > q // 2 else x


def _is_prime(p: int) -> bool:
    return p >= 2 and all(p % k for k in range(2, math.isqrt(p) + 1))


@dataclass(frozen=True)
class RingParams:
    """Base data: odd prime p, Eisenstein E of degree e, precision (p^n, u^N).

    ``E_coeffs`` lists the integer coefficients of E from the constant term up
    to the leading 1.
    """

    p: int
    e: int
    E_coeffs: tuple
    n: int
    N: int

    def __post_init__(self):
        object.__setattr__(self, "E_coeffs", tuple(int(c) for c in self.E_coeffs))
        p, e = self.p, self.e
        if not _is_prime(p) or p == 2:
            raise InvalidRingParams(f"p must be an odd prime, got {p}")
        if e < 1:
            raise InvalidRingParams("e must be at least 1")
        E = self.E_coeffs
        if len(E) != e + 1 or E[-1] != 1:
            raise InvalidRingParams("E must be monic of degree e")
        if any(c % p for c in E[:-1]):
            raise InvalidRingParams("E is not Eisenstein: a non-leading coefficient is a unit")
        if E[0] % (p * p) == 0:
            raise InvalidRingParams("E is not Eisenstein: constant term divisible by p^2")
        if self.n < 1:
            raise InvalidRingParams("n must be at least 1")
        if p**self.n >= MAX_MODULUS:
            raise InvalidRingParams(f"p^n = {p}^{self.n} exceeds the supported modulus")
        if self.N < e * p:
            raise InvalidRingParams(f"N must be at least e*p = {e * p}")

    @classmethod
    def standard(cls, p: int, e: int, n: int, N: int) -> "RingParams":
        """Parameters for E = u^e - p."""
        return cls(p, e, (-p,) + (0,) * (e - 1) + (1,), n, N)

    @property
    def q(self) -> int:
        return self.p**self.n

    @property
    def F_coeffs(self) -> tuple:
        """Integer coefficients of F with E = u^e - p F."""
        return tuple(-c // self.p for c in self.E_coeffs[:-1])

    def qi(self, i: int) -> int:
        return i // self.e

    def with_precision(self, n: Optional[int] = None, N: Optional[int] = None) -> "RingParams":
        return RingParams(self.p, self.e, self.E_coeffs, self.n if n is None else n, self.N if N is None else N)

    def gamma_bound(self) -> int:
        """Index beyond which every gamma_i(E) vanishes in the truncation."""
        p, e = self.p, self.e
        return math.ceil(self.N / e) + math.ceil(self.n * (p - 1) / (p - 2)) + 1

    def to_json(self) -> dict:
        return {"p": self.p, "e": self.e, "E_coeffs": list(self.E_coeffs), "n": self.n, "N": self.N}


@lru_cache(maxsize=None)
def _tables(params: RingParams):
    return _RingTables(params)


class _RingTables:
    """Cached structure constants of one truncation."""

    def __init__(self, params: RingParams):
        self.params = params
        p, e, N, q = params.p, params.e, params.N, params.q
        fact = [math.factorial(k) for k in range((N - 1) // e * 2 + 2)]
        self.qfact = [fact[i // e] for i in range(N)]
        C = np.zeros((N, N), dtype=np.int64)
        for i in range(N):
            qi = i // e
            for j in range(N - i):
                C[i, j] = (fact[(i + j) // e] // (fact[qi] * fact[j // e])) % q
        self.mult = C
        phi_src, phi_dst, phi_fac = [], [], []
        for i in range(N):
            if p * i < N:
                phi_src.append(i)
                phi_dst.append(p * i)
                phi_fac.append((fact[(p * i) // e] // fact[i // e]) % q)
        self.phi_src = np.array(phi_src, dtype=np.int64)
        self.phi_dst = np.array(phi_dst, dtype=np.int64)
        self.phi_fac = np.array(phi_fac, dtype=np.int64)
        self.monodromy = np.array([(-i) % q for i in range(N)], dtype=np.int64)


class DividedSeries:
    """Element ``sum w_i u^i/q(i)!`` of S modulo ``(p^n, u^N)``."""

    __slots__ = ("ring", "coeffs")

    def __init__(self, ring: RingParams, coeffs):
        self.ring = ring
        c = np.zeros(ring.N, dtype=np.int64)
        arr = np.asarray(coeffs, dtype=object).ravel()
        k = min(len(arr), ring.N)
        c[:k] = [int(x) % ring.q for x in arr[:k]]
        self.coeffs = c

    @classmethod
    def _raw(cls, ring: RingParams, arr: np.ndarray) -> "DividedSeries":
        out = cls.__new__(cls)
        out.ring = ring
        out.coeffs = arr
        return out

    # constructors -----------------------------------------------------
    @classmethod
    def zero(cls, ring):
        return cls._raw(ring, np.zeros(ring.N, dtype=np.int64))

    @classmethod
    def constant(cls, ring, c):
        out = cls.zero(ring)
        out.coeffs[0] = residue(c, ring.p, ring.n)
        return out

    @classmethod
    def one(cls, ring):
        return cls.constant(ring, 1)

    @classmethod
    def basis(cls, ring, i: int, w=1):
        """``w * u^i / q(i)!``."""
        out = cls.zero(ring)
        if i < ring.N:
            out.coeffs[i] = residue(w, ring.p, ring.n)
        return out

    @classmethod
    def u_power(cls, ring, i: int, w=1):
        """``w * u^i`` (an integer multiple of the divided monomial)."""
        if i >= ring.N:
            return cls.zero(ring)
        return cls.basis(ring, i, residue(w, ring.p, ring.n) * math.factorial(i // ring.e))

    @classmethod
    def from_poly(cls, ring, coeffs: Sequence) -> "DividedSeries":
        """From a polynomial in u with integer or p-integral rational coefficients.

        The divided coefficient is ``a_i * q(i)!``; it must be p-integral,
        which fails for instance for ``u/p``.
        """
        out = np.zeros(ring.N, dtype=np.int64)
        for i, a in enumerate(coeffs):
            if i >= ring.N:
                break
            if a:
                w = Fraction(a) * math.factorial(i // ring.e)
                out[i] = residue(w, ring.p, ring.n)
        return cls._raw(ring, out)

    @classmethod
    def E(cls, ring):
        return cls.from_poly(ring, ring.E_coeffs)

    @classmethod
    def F(cls, ring):
        return cls.from_poly(ring, ring.F_coeffs)

    @classmethod
    def gamma_E(cls, ring, i: int) -> "DividedSeries":
        return _gamma_E(ring, i)

    @classmethod
    def c(cls, ring) -> "DividedSeries":
        """The unit phi_1(E), at precision n-1."""
        return phi1(cls.E(ring))

    # arithmetic -------------------------------------------------------
    def _check(self, other: "DividedSeries") -> None:
        if self.ring != other.ring:
            raise ParamsMismatch(f"{self.ring} vs {other.ring}")

    def _coerce(self, other) -> "DividedSeries":
        if isinstance(other, DividedSeries):
            self._check(other)
            return other
        if isinstance(other, (int, np.integer, Fraction)):
            return DividedSeries.constant(self.ring, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return DividedSeries._raw(self.ring, (self.coeffs + other.coeffs) % self.ring.q)

    __radd__ = __add__

    def __neg__(self):
        return DividedSeries._raw(self.ring, (-self.coeffs) % self.ring.q)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return DividedSeries._raw(self.ring, (self.coeffs - other.coeffs) % self.ring.q)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, np.integer, Fraction)):
            return DividedSeries._raw(self.ring, (self.coeffs * residue(other, self.ring.p, self.ring.n)) % self.ring.q)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return DividedSeries._raw(self.ring, _mul_arrays(self.ring, self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = DividedSeries.one(self.ring)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = DividedSeries.constant(self.ring, other)
        if not isinstance(other, DividedSeries):
            return NotImplemented
        return self.ring == other.ring and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.ring, self.coeffs.tobytes()))

    def __repr__(self):
        return f"DividedSeries({format_series(self)})"

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def is_unit(self) -> bool:
        return self.coeffs[0] % self.ring.p != 0

    def valuation(self) -> int:
        """Largest t with every coefficient divisible by p^t (n for zero)."""
        p, n = self.ring.p, self.ring.n
        nz = self.coeffs[self.coeffs != 0]
        if nz.size == 0:
            return n
        return min(vp(int(x), p) for x in nz)

    def divide_by_p(self, k: int = 1) -> "DividedSeries":
        """Exact division by p^k; the result lives at precision n - k."""
        p = self.ring.p
        if np.any(self.coeffs % (p**k)):
            raise NotDivisible(f"element not divisible by p^{k}")
        ring = self.ring.with_precision(n=self.ring.n - k)
        return DividedSeries._raw(ring, (self.coeffs // (p**k)) % ring.q)

    def with_precision(self, n: Optional[int] = None, N: Optional[int] = None) -> "DividedSeries":
        """Image under the projection to a coarser truncation."""
        ring = self.ring.with_precision(n, N)
        if ring.n > self.ring.n or ring.N > self.ring.N:
            raise ValueError("cannot refine precision")
        return DividedSeries._raw(ring, self.coeffs[: ring.N] % ring.q)

    def lift(self, ring: RingParams) -> "DividedSeries":
        """Same integer coefficients viewed in a finer truncation."""
        return DividedSeries(ring, self.coeffs.tolist())

    def inverse(self) -> "DividedSeries":
        if not self.is_unit():
            raise NotDivisible("element is not a unit")
        q = self.ring.q
        y = DividedSeries.constant(self.ring, pow(int(self.coeffs[0]), -1, q))
        for _ in range(2 * (self.ring.N.bit_length() + self.ring.n.bit_length()) + 4):
            ny = y * (2 - self * y)
            if ny == y:
                break
            y = ny
        assert (self * y) == 1
        return y

    def evaluate_poly_in_u(self) -> list[Fraction]:
        """Coefficients as a rational polynomial in u (integer coefficient lifts)."""
        tab = _tables(self.ring)
        return [Fraction(int(w), tab.qfact[i]) for i, w in enumerate(self.coeffs)]


def _mul_arrays(ring: RingParams, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    tab = _tables(ring)
    q, N = ring.q, ring.N
    out = np.zeros(N, dtype=np.int64)
    nz = np.nonzero(a)[0]
    if len(nz) > len(np.nonzero(b)[0]):
        a, b = b, a
        nz = np.nonzero(a)[0]
    for i in nz:
        row = (tab.mult[i, : N - i] * int(a[i])) % q
        out[i:] = (out[i:] + row * b[: N - i]) % q
    return out


def multiplication_matrix(ring: RingParams, x: DividedSeries) -> np.ndarray:
    """Matrix M with ``(y * x).coeffs == y.coeffs @ M`` (mod p^n)."""
    tab = _tables(ring)
    q, N = ring.q, ring.N
    M = np.zeros((N, N), dtype=np.int64)
    for j in np.nonzero(x.coeffs)[0]:
        w = int(x.coeffs[j])
        for i in range(N - j):
            M[i, i + j] = (M[i, i + j] + tab.mult[i, j] * w) % q
    return M


def monomial_multiples(ring: RingParams, v: np.ndarray) -> np.ndarray:
    """Rows ``v * u^j/q(j)!`` for all j < N (v a coefficient vector of S)."""
    tab = _tables(ring)
    q, N = ring.q, ring.N
    rows = np.zeros((N, N), dtype=np.int64)
    for j in range(N):
        rows[j, j:] = (tab.mult[: N - j, j] * v[: N - j]) % q
    return rows


def frobenius(x: DividedSeries) -> DividedSeries:
    """phi(u^i/q(i)!) = u^{pi}/q(i)!, i.e. ``q(pi)!/q(i)!`` times the divided monomial at pi."""
    tab = _tables(x.ring)
    out = np.zeros(x.ring.N, dtype=np.int64)
    out[tab.phi_dst] = (x.coeffs[tab.phi_src] * tab.phi_fac) % x.ring.q
    return DividedSeries._raw(x.ring, out)


def phi1(x: DividedSeries) -> DividedSeries:
    """phi/p on Fil^1 S; the result has p-precision n - 1."""
    if not fil_membership(x, 1):
        raise NotInFiltration("phi_1 is only defined on Fil^1 S")
    return frobenius(x).divide_by_p(1)


def phi_r(x: DividedSeries, r: int) -> DividedSeries:
    """phi/p^r on Fil^r S (r <= p - 1); the result has p-precision n - r."""
    if not fil_membership(x, r):
        raise NotInFiltration(f"element is not in Fil^{r} S")
    return frobenius(x).divide_by_p(r)


def monodromy_N(x: DividedSeries) -> DividedSeries:
    """The derivation N = -u d/du: N(u^i/q(i)!) = -i u^i/q(i)!."""
    tab = _tables(x.ring)
    return DividedSeries._raw(x.ring, (x.coeffs * tab.monodromy) % x.ring.q)


# gamma_i(E) and the filtration ------------------------------------------

@lru_cache(maxsize=None)
def _gamma_E(ring: RingParams, i: int) -> DividedSeries:
    N = ring.N
    # E^i over Z truncated at degree N
    poly = [1]
    E = list(ring.E_coeffs)
    for _ in range(i):
        new = [0] * min(len(poly) + len(E) - 1, N)
        for a, ca in enumerate(poly):
            if ca:
                for b, cb in enumerate(E):
                    if a + b < N:
                        new[a + b] += ca * cb
        poly = new
    fi = math.factorial(i)
    return DividedSeries.from_poly(ring, [Fraction(c, fi) for c in poly])


def fil_generators(ring: RingParams, r: int) -> list[DividedSeries]:
    """Generators gamma_i(E), r <= i, of Fil^r S that survive the truncation.

    Beyond ``ring.gamma_bound()`` every gamma_i(E) vanishes mod (p^n, u^N).
    """
    if r < 0:
        raise ValueError("filtration index must be nonnegative")
    if r >= ring.p:
        raise UnsupportedFiltrationDepth(f"Fil^{r} with r >= p = {ring.p} is not supported")
    if r == 0:
        return [DividedSeries.one(ring)]
    out = []
    for i in range(r, ring.gamma_bound() + 1):
        g = _gamma_E(ring, i)
        if not g.is_zero():
            out.append(g)
    return out


@lru_cache(maxsize=None)
def fil_lattice(ring: RingParams, r: int) -> FlatLattice:
    """Fil^r S in the truncation, as a flattened Z/p^n-lattice of rank N."""
    gens = [g.coeffs for g in fil_generators(ring, r)]
    return FlatLattice.span(ring.p, ring.n, ring.N, gens, closure=lambda v: monomial_multiples(ring, v))


def fil_membership(x: DividedSeries, r: int, witness: bool = False):
    """Whether x lies in Fil^r S (up to the truncation).

    With ``witness=True`` return the coefficient vector on the Howell rows of
    :func:`fil_lattice` (``None`` when not a member).
    """
    lat = fil_lattice(x.ring, r)
    if witness:
        return lat.solve(x.coeffs)
    return lat.contains(x.coeffs)


def sigma_lattice(ring: RingParams) -> FlatLattice:
    """The truncation of W[[u, u^{ep}/p]] inside S."""
    return _sigma_lattice(ring)


@lru_cache(maxsize=None)
def _sigma_lattice(ring: RingParams) -> FlatLattice:
    p, e, N = ring.p, ring.e, ring.N
    rows = []
    for b in range(N // (e * p) + 1):
        for a in range(N - e * p * b):
            j = a + e * p * b
            w = Fraction(math.factorial(j // e), p**b)
            v = np.zeros(N, dtype=np.int64)
            v[j] = residue(w, p, ring.n)
            rows.append(v)
    return FlatLattice.span(p, ring.n, N, rows)


def sigma_membership(x: DividedSeries) -> bool:
    return sigma_lattice(x.ring).contains(x.coeffs)


# O_K / p^n ---------------------------------------------------------------

class OKElem:
    """Element of O_K/p^n = W_n[u]/(E), stored by its e coefficients in pi."""

    __slots__ = ("ring", "coeffs")

    def __init__(self, ring: RingParams, coeffs):
        self.ring = ring
        c = np.zeros(ring.e, dtype=np.int64)
        arr = list(coeffs)
        if len(arr) > ring.e:
            arr = _reduce_mod_E(ring, [int(a) for a in arr])
        for k, a in enumerate(arr):
            c[k] = residue(a, ring.p, ring.n)
        self.coeffs = c

    @classmethod
    def pi_power(cls, ring, k: int) -> "OKElem":
        return cls(ring, [0] * k + [1]) if k < ring.e else cls(ring, _reduce_mod_E(ring, [0] * k + [1]))

    def __add__(self, other):
        return OKElem(self.ring, (self.coeffs + _ok(self.ring, other).coeffs) % self.ring.q)

    __radd__ = __add__

    def __sub__(self, other):
        return OKElem(self.ring, (self.coeffs - _ok(self.ring, other).coeffs) % self.ring.q)

    def __neg__(self):
        return OKElem(self.ring, (-self.coeffs) % self.ring.q)

    def __mul__(self, other):
        other = _ok(self.ring, other)
        prod = np.convolve(self.coeffs.astype(object), other.coeffs.astype(object))
        return OKElem(self.ring, _reduce_mod_E(self.ring, [int(x) for x in prod]))

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, int):
            other = _ok(self.ring, other)
        return isinstance(other, OKElem) and self.ring == other.ring and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def __repr__(self):
        return f"OKElem({[signed(int(c), self.ring.q) for c in self.coeffs]})"

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def valuation(self) -> int:
        """pi-adic valuation (e*n for zero, the precision cap)."""
        e, p, n = self.ring.e, self.ring.p, self.ring.n
        best = e * n
        for k, x in enumerate(self.coeffs):
            if x:
                best = min(best, e * vp(int(x), p) + k)
        return best

    def truncate(self, K: int) -> "OKElem":
        """Reduction modulo pi^K."""
        e, p = self.ring.e, self.ring.p
        out = []
        for k, x in enumerate(self.coeffs):
            m = max(0, -((k - K) // e))  # ceil((K - k)/e)
            out.append(int(x) % (p**m) if m else 0)
        return OKElem(self.ring, out)


def _ok(ring, x) -> OKElem:
    if isinstance(x, OKElem):
        if x.ring != ring:
            raise ParamsMismatch("O_K elements over different rings")
        return x
    return OKElem(ring, [x])


def _reduce_mod_E(ring: RingParams, poly: list) -> list:
    e, q = ring.e, ring.q
    F = [int(f) for f in ring.F_coeffs]
    poly = [int(a) for a in poly]
    p = ring.p
    for k in range(len(poly) - 1, e - 1, -1):
        a = poly[k]
        if a:
            poly[k] = 0
            # u^k = u^{k-e} * p F(u)
            for j, f in enumerate(F):
                poly[k - e + j] += a * p * f
    return [x % q for x in poly[:e]] + [0] * max(0, e - len(poly))


@lru_cache(maxsize=None)
def _f_pi_images(ring: RingParams) -> np.ndarray:
    """Row i: coefficients of f_pi(u^i/q(i)!) in O_K/p^n."""
    p, e, n, N = ring.p, ring.e, ring.n, ring.N
    F = OKElem(ring, ring.F_coeffs)
    out = np.zeros((N, e), dtype=np.int64)
    Fpow = OKElem(ring, [1])
    for qq in range(N // e + 1):
        # p^q / q! is p-integral
        num_v = qq - vp_factorial(qq, p)
        if num_v < n:
            unit = math.factorial(qq) // p ** vp_factorial(qq, p)
            scal = p**num_v * pow(unit, -1, ring.q) % ring.q
            base = Fpow * scal
            for r in range(e):
                i = qq * e + r
                if i < N:
                    out[i] = (OKElem.pi_power(ring, r) * base).coeffs
        Fpow = Fpow * F
    return out


def f_pi(x: DividedSeries) -> OKElem:
    """The evaluation u -> pi, S -> O_K/p^n."""
    M = _f_pi_images(x.ring)
    q = x.ring.q
    acc = np.zeros(x.ring.e, dtype=np.int64)
    for i in np.nonzero(x.coeffs)[0]:
        acc = (acc + int(x.coeffs[i]) * M[i]) % q
    return OKElem(x.ring, acc)


# k[u]/u^{ep} ----------------------------------------------------------------

class TildeElem:
    """Element of k[u]/u^{ep} with k = F_p."""

    __slots__ = ("p", "e", "coeffs")

    def __init__(self, p: int, e: int, coeffs=()):
        self.p = p
        self.e = e
        c = np.zeros(e * p, dtype=np.int64)
        arr = list(coeffs)[: e * p]
        c[: len(arr)] = [int(a) % p for a in arr]
        self.coeffs = c

    @classmethod
    def _raw(cls, p, e, arr):
        out = cls.__new__(cls)
        out.p, out.e, out.coeffs = p, e, arr
        return out

    @classmethod
    def monomial(cls, p, e, k, c=1):
        out = cls(p, e)
        if k < e * p:
            out.coeffs[k] = c % p
        return out

    @property
    def size(self) -> int:
        return self.e * self.p

    def _same(self, other):
        if isinstance(other, (int, np.integer)):
            return TildeElem(self.p, self.e, [other])
        if (self.p, self.e) != (other.p, other.e):
            raise ParamsMismatch("elements of different tilde rings")
        return other

    def __add__(self, other):
        other = self._same(other)
        return TildeElem._raw(self.p, self.e, (self.coeffs + other.coeffs) % self.p)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._same(other)
        return TildeElem._raw(self.p, self.e, (self.coeffs - other.coeffs) % self.p)

    def __neg__(self):
        return TildeElem._raw(self.p, self.e, (-self.coeffs) % self.p)

    def __mul__(self, other):
        other = self._same(other)
        m = self.size
        prod = np.convolve(self.coeffs, other.coeffs)[:m] % self.p
        return TildeElem._raw(self.p, self.e, prod)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, (int, np.integer)):
            other = TildeElem(self.p, self.e, [other])
        return isinstance(other, TildeElem) and (self.p, self.e) == (other.p, other.e) and np.array_equal(
            self.coeffs, other.coeffs
        )

    def __hash__(self):
        return hash((self.p, self.e, self.coeffs.tobytes()))

    def __repr__(self):
        return f"TildeElem({format_poly(self.coeffs.tolist(), self.p)})"

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def valuation(self) -> int:
        """u-adic valuation (ep for zero)."""
        nz = np.nonzero(self.coeffs)[0]
        return int(nz[0]) if nz.size else self.size

    def is_unit(self) -> bool:
        return self.coeffs[0] != 0

    def frobenius(self) -> "TildeElem":
        """s(u) -> s(u^p) (coefficients in F_p are Frobenius-fixed)."""
        out = np.zeros(self.size, dtype=np.int64)
        out[:: self.p] = self.coeffs[: self.e]
        return TildeElem._raw(self.p, self.e, out)

    def inverse(self) -> "TildeElem":
        if not self.is_unit():
            raise NotDivisible("not a unit of k[u]/u^{ep}")
        p, m = self.p, self.size
        a0inv = pow(int(self.coeffs[0]), -1, p)
        out = np.zeros(m, dtype=np.int64)
        out[0] = a0inv
        for k in range(1, m):
            s = int(np.dot(self.coeffs[1 : k + 1], out[k - 1 :: -1][:k])) if k else 0
            out[k] = (-s * a0inv) % p
        return TildeElem._raw(p, self.e, out)

    def shift(self, k: int) -> "TildeElem":
        """Multiplication by u^k."""
        out = np.zeros(self.size, dtype=np.int64)
        if k < self.size:
            out[k:] = self.coeffs[: self.size - k]
        return TildeElem._raw(self.p, self.e, out)

    def divide_u(self, k: int) -> "TildeElem":
        """Exact division by u^k; the top k coefficients are unknown and set to 0."""
        if np.any(self.coeffs[:k]):
            raise NotDivisible(f"not divisible by u^{k}")
        out = np.zeros(self.size, dtype=np.int64)
        out[: self.size - k] = self.coeffs[k:]
        return TildeElem._raw(self.p, self.e, out)


def reduce_to_tilde(x: DividedSeries) -> TildeElem:
    """S -> S/(p, Fil^p S) = k[u]/u^{ep}: u^j/q! -> u^j/q! mod p for q < p."""
    ring = x.ring
    p, e = ring.p, ring.e
    out = np.zeros(e * p, dtype=np.int64)
    for j in range(min(e * p, ring.N)):
        f = math.factorial(j // e)
        out[j] = int(x.coeffs[j]) * pow(f, -1, p) % p
    return TildeElem._raw(p, e, out)


def lift_from_tilde(ring: RingParams, t: TildeElem) -> DividedSeries:
    """The polynomial lift sum a_j u^j with a_j in [0, p)."""
    return DividedSeries.from_poly(ring, t.coeffs.tolist())


# literal syntax --------------------------------------------------------------

_TERM = re.compile(
    r"""^\s*(?P<coef>\d+)?\s*(?:\*?\s*(?P<u>u)(?:\s*\^\s*(?P<exp>\d+))?)?\s*(?:/\s*(?P<div>\d+))?\s*$"""
)


def parse_series(ring: RingParams, text: str) -> DividedSeries:
    """Parse ``w*u^i/d`` terms joined by ``+``/``-``, e.g. ``-1 + 2*u^6/6``.

    Each term is read as the rational ``w u^i / d``; it must have p-integral
    divided coefficient ``w q(i)!/d``.
    """
    s = text.replace(" ", "")
    if not s:
        raise ParseError("empty series literal")
    pieces = re.findall(r"[+-]?[^+-]+", s)
    if "".join(pieces) != s:
        raise ParseError(f"cannot parse series literal {text!r}")
    poly: dict[int, Fraction] = {}
    for piece in pieces:
        sign = -1 if piece.startswith("-") else 1
        body = piece.lstrip("+-")
        m = _TERM.match(body)
        if not m or not (m.group("coef") or m.group("u")):
            raise ParseError(f"bad term {piece!r} in {text!r}")
        coef = int(m.group("coef")) if m.group("coef") else 1
        exp = 0
        if m.group("u"):
            exp = int(m.group("exp")) if m.group("exp") else 1
        elif m.group("exp"):
            raise ParseError(f"bad term {piece!r}")
        div = int(m.group("div")) if m.group("div") else 1
        if div == 0:
            raise ParseError("division by zero in literal")
        poly[exp] = poly.get(exp, Fraction(0)) + Fraction(sign * coef, div)
    deg = max(poly) if poly else 0
    coeffs = [poly.get(i, Fraction(0)) for i in range(deg + 1)]
    try:
        return DividedSeries.from_poly(ring, coeffs)
    except NotDivisible as exc:
        raise ParseError(f"literal {text!r} is not an element of S: {exc}") from None


def format_series(x: DividedSeries) -> str:
    """Render with explicit divisors q(i)!, coefficients as signed residues."""
    ring = x.ring
    tab = _tables(ring)
    terms = []
    for i in np.nonzero(x.coeffs)[0]:
        w = signed(int(x.coeffs[i]), ring.q)
        mag = abs(w)
        if i == 0:
            body = str(mag)
        else:
            mono = "u" if i == 1 else f"u^{i}"
            body = mono if mag == 1 else f"{mag}*{mono}"
            if tab.qfact[i] != 1:
                body += f"/{tab.qfact[i]}"
        terms.append(("-" if w < 0 else "+", body))
    if not terms:
        return "0"
    out = ("-" if terms[0][0] == "-" else "") + terms[0][1]
    for sign, body in terms[1:]:
        out += f" {sign} {body}"
    return out


def format_poly(coeffs: Iterable[int], modulus: int, var: str = "u") -> str:
    terms = []
    for i, c in enumerate(coeffs):
        c = signed(int(c), modulus)
        if not c:
            continue
        mono = "" if i == 0 else (var if i == 1 else f"{var}^{i}")
        if not mono:
            body = str(abs(c))
        else:
            body = mono if abs(c) == 1 else f"{abs(c)}*{mono}"
        terms.append(("-" if c < 0 else "+", body))
    if not terms:
        return "0"
    out = ("-" if terms[0][0] == "-" else "") + terms[0][1]
    for sign, body in terms[1:]:
        out += f" {sign} {body}"
    return out
