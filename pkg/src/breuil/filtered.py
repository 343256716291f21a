"""Filtered (phi, N)-modules over Q_p and their strongly divisible lattices.

D has basis e_1..e_d over K_0 = Q_p; rational entries stand for p-adic ones.
Matrices act on rows: row j of ``phi`` holds the coordinates of phi(e_j), so
``v @ phi`` is phi(v).  D_K = K (x) D with K = Q_p[pi]/(E(pi)); a K-element is
a tuple of e rationals (coefficients of 1, pi, ..., pi^{e-1}) and a K-vector a
list of d of them.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BudgetExceeded,
    NonStableSubobject,
    ParamsMismatch,
    PrecisionExhausted,
    UnsupportedFiltrationDepth,
)
from .linalg import FlatLattice
from .rings import DividedSeries, RingParams, _f_pi_images, _tables, residue, vp, vp_factorial
from .smodule import s_multiples, s_span, scalar_mul
from .errors import NotStronglyDivisible
from .strong import StronglyDivisible, filtered_free_basis, s_coordinates

Q = Fraction


# rational linear algebra ---------------------------------------------------

def _frac_rows(rows) -> list[list[Fraction]]:
    return [[Q(x) for x in r] for r in rows]


def rref(rows: Sequence[Sequence]) -> list[list[Fraction]]:
    """Nonzero rows of the reduced row echelon form over Q."""
    m = _frac_rows(rows)
    out: list[list[Fraction]] = []
    if not m:
        return out
    width = len(m[0])
    r = 0
    for c in range(width):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][c]
        m[r] = [x * inv for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        r += 1
        if r == len(m):
            break
    return m[:r]


def rank(rows) -> int:
    return len(rref(rows)) if len(rows) else 0


def nullspace(M: Sequence[Sequence]) -> list[list[Fraction]]:
    """Basis of {x : M x = 0} (column vectors x)."""
    R = rref(M)
    width = len(M[0]) if len(M) else 0
    pivots = []
    for row in R:
        pivots.append(next(i for i, x in enumerate(row) if x != 0))
    free = [c for c in range(width) if c not in pivots]
    basis = []
    for f in free:
        x = [Q(0)] * width
        x[f] = Q(1)
        for row, pc in zip(R, pivots):
            x[pc] = -row[f]
        basis.append(x)
    return basis


def det(M: Sequence[Sequence]) -> Fraction:
    m = _frac_rows(M)
    n = len(m)
    out = Q(1)
    for c in range(n):
        piv = next((i for i in range(c, n) if m[i][c] != 0), None)
        if piv is None:
            return Q(0)
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            out = -out
        out *= m[c][c]
        for i in range(c + 1, n):
            if m[i][c] != 0:
                f = m[i][c] / m[c][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[c])]
    return out


def vp_rational(x: Fraction, p: int) -> int:
    if x == 0:
        raise ValueError("valuation of zero")
    return vp(x.numerator, p) - vp(x.denominator, p)


def mat_vec(v: Sequence, M: Sequence[Sequence]) -> list[Fraction]:
    """Row vector times matrix."""
    return [sum((Q(v[i]) * Q(M[i][j]) for i in range(len(v))), Q(0)) for j in range(len(M[0]))]


def solve_in_span(basis: Sequence[Sequence], v: Sequence) -> Optional[list[Fraction]]:
    """Coefficients c with sum c_i basis_i = v, or None."""
    k = len(basis)
    aug = [[Q(basis[i][j]) for i in range(k)] + [Q(v[j])] for j in range(len(v))]
    R = rref(aug)
    x = [Q(0)] * k
    for row in R:
        pc = next(i for i, a in enumerate(row) if a != 0)
        if pc == k:
            return None
        x[pc] = row[k]
    return x


def charpoly(M: Sequence[Sequence]) -> list[Fraction]:
    """Coefficients (constant first) of det(x I - M), Faddeev-LeVerrier."""
    n = len(M)
    A = _frac_rows(M)
    coeffs = [Q(0)] * (n + 1)
    coeffs[n] = Q(1)
    Mk = [[Q(0)] * n for _ in range(n)]
    for k in range(1, n + 1):
        # Mk = A (M_{k-1} + c_{n-k+1} I)
        prev = [[Mk[i][j] + (coeffs[n - k + 1] if i == j else 0) for j in range(n)] for i in range(n)]
        Mk = [[sum(A[i][t] * prev[t][j] for t in range(n)) for j in range(n)] for i in range(n)]
        coeffs[n - k] = -sum(Mk[i][i] for i in range(n)) / k
    return coeffs


def rational_roots(poly: Sequence[Fraction]) -> list[Fraction]:
    """Distinct rational roots of a polynomial (constant coefficient first)."""
    poly = [Q(c) for c in poly]
    while poly and poly[-1] == 0:
        poly.pop()
    roots = set()
    while len(poly) > 1 and poly[0] == 0:
        poly.pop(0)
        roots.add(Q(0))
    if len(poly) < 2:
        return sorted(roots)
    den = math.lcm(*[Fraction(c).denominator for c in poly])
    ints = [int(c * den) for c in poly]
    a0, an = ints[0], ints[-1]

    def divisors(x):
        x = abs(x)
        return [k for k in range(1, x + 1) if x % k == 0]

    for num in divisors(a0):
        for dd in divisors(an):
            for s in (1, -1):
                cand = Q(s * num, dd)
                if sum(c * cand**i for i, c in enumerate(ints)) == 0:
                    roots.add(cand)
    return sorted(roots)


# K = Q_p[pi]/(E) ----------------------------------------------------------

def k_elem(x, e: int) -> tuple:
    """Coerce a scalar or a coefficient list into a K-element."""
    if isinstance(x, (list, tuple)):
        c = [Q(a) for a in x] + [Q(0)] * (e - len(x))
        if len(c) > e:
            raise ValueError(f"K-element has more than {e} coefficients")
        return tuple(c)
    return (Q(x),) + (Q(0),) * (e - 1)


def k_times_pi(a: tuple, E: Sequence[int]) -> tuple:
    """pi * a, using pi^e = -sum_{k<e} E_k pi^k."""
    e = len(a)
    top = a[-1]
    out = [Q(0)] + list(a[:-1])
    return tuple(out[k] - top * E[k] for k in range(e))


def restrict_scalars(vecs: Sequence[Sequence[tuple]], E: Sequence[int]) -> list[list[Fraction]]:
    """Q-spanning rows (index c*e + k) of the K-span of the given K-vectors."""
    e = len(E) - 1
    rows = []
    for v in vecs:
        cur = [k_elem(x, e) for x in v]
        for _ in range(e):
            rows.append([a for x in cur for a in x])
            cur = [k_times_pi(x, E) for x in cur]
    return rows


def base_change(vecs: Sequence[Sequence], e: int) -> list[list[tuple]]:
    """K_0-vectors viewed as K-vectors."""
    return [[k_elem(x, e) for x in v] for v in vecs]


# filtered (phi, N)-modules --------------------------------------------------

@dataclass
class FilteredPhiN:
    """A filtered (phi, N)-module D over Q_p with filtration on D_K.

    ``fil[i-1]`` spans Fil^i D_K (i = 1..r); Fil^0 D_K = D_K.
    """

    p: int
    E: tuple  # Eisenstein polynomial of pi over Q_p, constant first
    phi: list
    N: list
    fil: list = field(default_factory=list)

    def __post_init__(self):
        self.E = tuple(int(c) for c in self.E)
        self.phi = _frac_rows(self.phi)
        self.N = _frac_rows(self.N)
        e = self.e
        self.fil = [[[k_elem(x, e) for x in v] for v in level] for level in self.fil]
        while self.fil and rank(restrict_scalars(self.fil[-1], self.E)) == 0:
            self.fil.pop()

    @property
    def d(self) -> int:
        return len(self.phi)

    @property
    def e(self) -> int:
        return len(self.E) - 1

    @property
    def r(self) -> int:
        """Largest i with Fil^i D_K nonzero (0 when Fil^1 vanishes)."""
        return len(self.fil)

    def fil_rows(self, i: int) -> list[list[Fraction]]:
        """Q-basis of Fil^i D_K inside Q^{de}."""
        if i <= 0:
            return [[Q(int(j == k)) for j in range(self.d * self.e)] for k in range(self.d * self.e)]
        if i > self.r:
            return []
        return rref(restrict_scalars(self.fil[i - 1], self.E))

    def fil_dim(self, i: int) -> int:
        return len(self.fil_rows(i)) // self.e

    def check(self) -> dict:
        """Structural invariants: phi invertible, N phi = p phi N, flag, r < p - 1."""
        p = self.p
        # N(phi(e_j)) = (phi N)_j and phi(N(e_j)) = (N phi)_j in row convention
        NP = [mat_vec(row, self.N) for row in self.phi]
        PN = [[p * x for x in mat_vec(row, self.phi)] for row in self.N]
        flag = all(
            rank(self.fil_rows(i) + self.fil_rows(i + 1)) == len(self.fil_rows(i))
            for i in range(1, self.r)
        )
        return {
            "phi_invertible": det(self.phi) != 0,
            "N_phi_relation": NP == PN,
            "flag": flag,
            "depth_ok": self.r < p - 1,
        }

    def to_json(self) -> dict:
        def q(x):
            return str(x)
        return {
            "p": self.p,
            "E": list(self.E),
            "phi": [[q(x) for x in r] for r in self.phi],
            "N": [[q(x) for x in r] for r in self.N],
            "fil": [[[[q(a) for a in x] for x in v] for v in level] for level in self.fil],
        }


# Hodge and Newton numbers ---------------------------------------------------

def _restricted_matrix(basis: Sequence[Sequence], M: Sequence[Sequence]) -> list[list[Fraction]]:
    """Matrix of a linear map on span(basis) that preserves it, or raise."""
    out = []
    for b in basis:
        x = solve_in_span(basis, mat_vec(b, M))
        if x is None:
            raise NonStableSubobject("subspace is not stable")
        out.append(x)
    return out


def newton_number(D: FilteredPhiN, basis: Optional[Sequence[Sequence]] = None) -> int:
    """v_p(det phi) on D or on a phi-stable subspace."""
    if basis is None:
        return vp_rational(det(D.phi), D.p)
    return vp_rational(det(_restricted_matrix(basis, D.phi)), D.p)


def hodge_number(D: FilteredPhiN, basis: Optional[Sequence[Sequence]] = None) -> int:
    """sum_i i dim gr^i = sum_{i >= 1} dim Fil^i, for the induced filtration on a subspace."""
    total = 0
    if basis is None:
        return sum(D.fil_dim(i) for i in range(1, D.r + 1))
    sub = rref(restrict_scalars(base_change(basis, D.e), D.E))
    for i in range(1, D.r + 1):
        F = D.fil_rows(i)
        inter = len(F) + len(sub) - rank(F + sub)
        total += inter // D.e
    return total


def hodge_newton(D: FilteredPhiN) -> tuple[int, int]:
    return hodge_number(D), newton_number(D)


def eigenlines(D: FilteredPhiN) -> list[list[Fraction]]:
    """phi- and N-stable lines spanned by eigenvectors with rational eigenvalues."""
    d = D.d
    out = []
    for lam in rational_roots(charpoly(D.phi)):
        shifted = [[D.phi[j][i] - (lam if i == j else 0) for j in range(d)] for i in range(d)]
        for v in nullspace(shifted):
            if rank([v, mat_vec(v, D.N)]) == 1:
                out.append(v)
    return out


def check_stable(D: FilteredPhiN, basis: Sequence[Sequence]) -> None:
    if rank(basis) != len(basis):
        raise NonStableSubobject("subobject basis is not linearly independent")
    for M, name in ((D.phi, "phi"), (D.N, "N")):
        if rank(list(basis) + [mat_vec(b, M) for b in basis]) != len(basis):
            raise NonStableSubobject(f"subspace is not {name}-stable")


def check_wa(D: FilteredPhiN, subobjects: Sequence[Sequence[Sequence]] = (), auto: bool = True) -> dict:
    """Compare Hodge and Newton numbers on D and on the supplied subobjects.

    Each subobject is a basis of a phi- and N-stable subspace of D; unstable
    input raises NonStableSubobject.  With ``auto`` the rational eigenlines of
    phi that are N-stable are probed as well.
    """
    t_H, t_N = hodge_newton(D)
    probes = [(list(b), "supplied") for b in subobjects]
    if auto:
        probes += [([v], "eigenline") for v in eigenlines(D)]
    rows = []
    for basis, source in probes:
        basis = _frac_rows(basis)
        check_stable(D, basis)
        h, n = hodge_number(D, basis), newton_number(D, basis)
        rows.append({"basis": [[str(x) for x in b] for b in basis], "source": source,
                     "t_H": h, "t_N": n, "ok": h <= n})
    return {
        "t_H": t_H,
        "t_N": t_N,
        "endpoints_equal": t_H == t_N,
        "subobjects": rows,
        "weakly_admissible": t_H == t_N and all(r["ok"] for r in rows),
    }


# integral saturation -------------------------------------------------------

def _nullvec_mod_p(rows: list[list[int]], p: int) -> Optional[list[int]]:
    """A nonzero c with sum c_i rows_i = 0 mod p, or None."""
    k = len(rows)
    if k == 0:
        return None
    width = len(rows[0])
    # eliminate on the augmented matrix [rows | I]
    m = [[x % p for x in r] + [int(i == j) for j in range(k)] for i, r in enumerate(rows)]
    r = 0
    for c in range(width):
        piv = next((i for i in range(r, k) if m[i][c]), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = pow(m[r][c], -1, p)
        m[r] = [(x * inv) % p for x in m[r]]
        for i in range(k):
            if i != r and m[i][c]:
                f = m[i][c]
                m[i] = [(a - f * b) % p for a, b in zip(m[i], m[r])]
        r += 1
    if r == k:
        return None
    return m[r][width:]


def saturate(rows: Sequence[Sequence[Fraction]], p: int) -> list[list[int]]:
    """Basis over Z_(p) of (Q-span of rows) intersected with Z_(p)^m.

    Rows are made p-primitive integers, then any relation modulo p is divided
    out until the reductions are independent.
    """
    out = []
    for r in rref(rows):
        den = math.lcm(*[x.denominator for x in r])
        ints = [int(x * den) for x in r]
        g = min((vp(x, p) for x in ints if x), default=0)
        out.append([x // p**g for x in ints])
    while True:
        c = _nullvec_mod_p(out, p)
        if c is None:
            return out
        i = next(j for j, a in enumerate(c) if a)
        comb = [sum(c[j] * out[j][t] for j in range(len(out))) for t in range(len(out[0]))]
        out[i] = [x // p for x in comb]


# the S-module D = S (x) D and its filtration -------------------------------

def _truncation_exponent(ring: RingParams) -> int:
    """pi-adic valuation of f_pi(J_N), the image of the dropped divided monomials
    (capped at e*n, where it vanishes modulo p^n)."""
    p, e, n, N = ring.p, ring.e, ring.n, ring.N
    best = e * n
    i = N
    # v_p(q!) <= q/(p-1), so i - e v_p(q(i)!) >= i (p-2)/(p-1)
    while i * (p - 2) < best * (p - 1):
        best = min(best, i - e * vp_factorial(i // e, p))
        i += 1
    return max(best, 0)


class BigD:
    """S (x) D at precision (p^n, u^N) with Fil^i for 0 <= i <= r + 1.

    Vectors are flattened with index c*N + j; the standard lattice V = S^d is
    the ambient of every FlatLattice here.  Fil^i is stored as Fil^i D
    intersected with V, which suffices since it is stable under p^{-1}.
    """

    def __init__(self, D: FilteredPhiN, ring: RingParams):
        if (ring.p, ring.E_coeffs) != (D.p, D.E):
            raise ParamsMismatch("ring and filtered module use different E")
        if D.r >= D.p - 1:
            raise UnsupportedFiltrationDepth(f"Fil^{D.r} D_K is nonzero, need r < p - 1")
        self.D = D
        self.ring = ring
        self.d = D.d
        self.dim = D.d * ring.N
        self.phi_den = max(0, max((-vp_rational(x, D.p) for row in D.phi for x in row if x != 0), default=0))
        self.trunc = _truncation_exponent(ring)
        self.fil = self._build()

    # linear maps on the flat space --------------------------------------
    @cached_property
    def f_pi_matrix(self) -> np.ndarray:
        """(d N, d e): x -> f_pi(x) in O_K^d with basis pi^k e_c."""
        ring, d, e = self.ring, self.d, self.ring.e
        img = _f_pi_images(ring)
        out = np.zeros((self.dim, d * e), dtype=np.int64)
        for c in range(d):
            out[c * ring.N:(c + 1) * ring.N, c * e:(c + 1) * e] = img
        return out

    @cached_property
    def monodromy_matrix(self) -> np.ndarray:
        """(d N, d N): N_S (x) 1 + 1 (x) N_D."""
        ring, d, NN = self.ring, self.d, self.ring.N
        q = ring.q
        out = np.zeros((self.dim, self.dim), dtype=np.int64)
        mono = _tables(ring).monodromy
        for c in range(d):
            for j in range(NN):
                out[c * NN + j, c * NN + j] = mono[j]
                for k in range(d):
                    if self.D.N[c][k]:
                        out[c * NN + j, k * NN + j] += residue(self.D.N[c][k], ring.p, ring.n)
        return out % q

    @cached_property
    def frobenius_matrix(self) -> np.ndarray:
        """(d N, d N): phi_S (x) p^k phi_D, with p^k clearing the denominators of phi_D."""
        ring, d, NN = self.ring, self.d, self.ring.N
        q, k = ring.q, self.phi_den
        tab = _tables(ring)
        out = np.zeros((self.dim, self.dim), dtype=np.int64)
        num = [[residue(x * Q(ring.p) ** k, ring.p, ring.n) for x in row] for row in self.D.phi]
        for c in range(d):
            for src, dst, fac in zip(tab.phi_src, tab.phi_dst, tab.phi_fac):
                for kk in range(d):
                    if num[c][kk]:
                        out[c * NN + src, kk * NN + dst] = (fac * num[c][kk]) % q
        return out

    # filtration -----------------------------------------------------------
    def _target(self, i: int) -> FlatLattice:
        """(Fil^i D_K intersected with O_K^d) + f_pi(J_N) O_K^d, modulo p^n."""
        ring, d, e = self.ring, self.d, self.ring.e
        q = ring.q
        rows = [[residue(Q(x), ring.p, ring.n) for x in r] for r in saturate(self.D.fil_rows(i), ring.p)]
        for c in range(d):
            for k in range(e):
                a = -(-(self.trunc - k) // e)
                if a < ring.n:
                    v = [0] * (d * e)
                    v[c * e + k] = ring.p ** max(a, 0) % q
                    rows.append(v)
        return FlatLattice.span(ring.p, ring.n, d * e, np.array(rows, dtype=np.int64).reshape(-1, d * e))

    def _build(self) -> list[FlatLattice]:
        ring = self.ring
        levels = [FlatLattice.full(ring.p, ring.n, self.dim)]
        for i in range(1, self.D.r + 2):
            cond_f = self._target(i).preimage(self.f_pi_matrix)
            cond_n = levels[-1].preimage(self.monodromy_matrix)
            levels.append(cond_f.intersection(cond_n))
        return levels

    @property
    def effective_precision(self) -> int:
        """Largest n' <= n with f_pi(J_N) inside p^{n'} O_K: modulo p^{n'} the
        dropped monomials no longer affect membership in Fil^1."""
        return min(self.ring.n, self.trunc // self.ring.e)

    def fil_level(self, i: int) -> FlatLattice:
        return self.fil[min(max(i, 0), len(self.fil) - 1)]

    def check(self) -> dict:
        """E Fil^i in Fil^{i+1}; generators satisfy both defining conditions."""
        ring = self.ring
        E = DividedSeries.E(ring)
        e_ok = all(
            self.fil_level(i + 1).contains(scalar_mul(ring, E, r.reshape(self.d, ring.N)).ravel())
            for i in range(len(self.fil) - 1) for r in self.fil_level(i).rows
        )
        cond = True
        for i in range(1, len(self.fil)):
            tgt = self._target(i)
            for r in self.fil[i].rows:
                cond &= tgt.contains((r @ self.f_pi_matrix) % ring.q)
                cond &= self.fil[i - 1].contains((r @ self.monodromy_matrix) % ring.q)
        return {"E_shifts_filtration": bool(e_ok), "generators_satisfy_conditions": bool(cond)}


# lattices in D ---------------------------------------------------------------

@dataclass(frozen=True)
class SLattice:
    """An S-lattice L of D stored as p^b L inside V = S^d (b is canonical:
    p^b L is not inside pV)."""

    b: int
    lattice: FlatLattice

    @classmethod
    def from_generators(cls, ring: RingParams, d: int, gens, b: int = 0) -> "SLattice":
        """S-span of p^{-b} gens (gens integral, flattened or (d, N))."""
        return _normalize(ring, b, s_span(ring, d, gens))

    @property
    def rows(self) -> np.ndarray:
        return self.lattice.rows

    def normal_form_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.b}:{self.lattice.n}:{self.lattice.dim}:".encode())
        h.update(np.ascontiguousarray(self.rows).tobytes())
        return h.hexdigest()

    def record(self, step: int) -> dict:
        return {
            "step": step,
            "normal_form_hash": self.normal_form_hash(),
            "generator_matrix": self.rows.tolist(),
            "denominator_exponent": self.b,
        }

    def rescaled(self, b: int) -> FlatLattice:
        """p^b L for b >= self.b."""
        return self.lattice.scale(b - self.b) if b != self.b else self.lattice

    def __add__(self, other: "SLattice") -> "SLattice":
        b = max(self.b, other.b)
        lat = self.rescaled(b) + other.rescaled(b)
        ring_p, n = lat.p, lat.n
        return _normalize_flat(ring_p, n, b, lat)


def _normalize_flat(p: int, n: int, b: int, lat: FlatLattice) -> SLattice:
    """Strip the common p-power of an exactly known lattice containing p^h V, h < n."""
    h = lat.containment_exponent()
    t = lat.content()
    if h >= n or t >= n:
        raise PrecisionExhausted(f"lattice is not of full rank modulo p^{n}")
    if t == 0:
        return SLattice(b, lat)
    reduced = FlatLattice.span(p, n - t, lat.dim, (lat.rows // p**t))
    return SLattice(b - t, reduced.lift(n, h - t))


def _normalize(ring: RingParams, b: int, lat: FlatLattice) -> SLattice:
    return _normalize_flat(ring.p, ring.n, b, lat)


def step_lattice(B: BigD, L: SLattice) -> SLattice:
    """The S-span of (phi/p^r)(L intersected with Fil^r D)."""
    ring, r = B.ring, B.D.r
    A = L.lattice.intersection(B.fil_level(r))
    imgs = (A.rows @ B.frobenius_matrix) % ring.q
    span = s_span(ring, B.d, imgs)
    t = span.content()
    if t >= ring.n:
        raise PrecisionExhausted("image of the filtration vanishes at this precision")
    # known modulo p^n before removing t; exact after the Nakayama lift
    reduced = FlatLattice.span(ring.p, ring.n - t, span.dim, span.rows // ring.p**t)
    h = reduced.containment_exponent()
    if h >= ring.n - t:
        raise PrecisionExhausted(
            f"step lost {t} digits and the image needs p^{h}; increase n (now {ring.n})"
        )
    return SLattice(L.b + r + B.phi_den - t, reduced.lift(ring.n, h))


def n_stable(B: BigD, L: SLattice) -> bool:
    imgs = (L.rows @ B.monodromy_matrix) % B.ring.q
    return all(L.lattice.contains(v) for v in imgs)


def phi_stable(B: BigD, L: SLattice) -> bool:
    target = L.lattice.scale(B.phi_den)
    imgs = (L.rows @ B.frobenius_matrix) % B.ring.q
    return all(target.contains(v) for v in imgs)


@dataclass
class IterationResult:
    trace: list  # SLattice N_0, N_1, ...
    i0: int
    C: int
    n_stable: list

    def certificate(self) -> dict:
        return {"i0": self.i0, "C": self.C, "verification": True}

    def records(self) -> list[dict]:
        return [L.record(i) for i, L in enumerate(self.trace)]

    def cycle(self) -> list:
        return self.trace[self.i0:self.i0 + self.C]


def iterate_lattice(B: BigD, M0: SLattice, budget: int = 32) -> IterationResult:
    """Run L -> S.(phi/p^r)(L intersected with Fil^r) from M0 until a lattice repeats."""
    trace = [M0]
    seen = {M0.normal_form_hash(): [0]}
    stable = [n_stable(B, M0)]
    for i in range(1, budget + 1):
        nxt = step_lattice(B, trace[-1])
        trace.append(nxt)
        stable.append(n_stable(B, nxt))
        key = nxt.normal_form_hash()
        for j in seen.get(key, []):
            if trace[j] == nxt:
                return IterationResult(trace, j, i - j, stable)
        seen.setdefault(key, []).append(i)
    raise BudgetExceeded(f"no repeat within {budget} steps", partial=[L.record(i) for i, L in enumerate(trace)])


# the rank-two example with a 2-cycle -----------------------------------------

def ramified_cycle_module(p: int) -> FilteredPhiN:
    """D = Q_p e1 + Q_p e2 over K = Q_p(pi), pi^{p+2} = p, with N = 0,
    phi(e1) = e2, phi(e2) = p e1 and Fil^1 D_K = K (pi e1 + e2)."""
    E = (-p,) + (0,) * (p + 1) + (1,)
    return FilteredPhiN(p, E, [[0, 1], [p, 0]], [[0, 0], [0, 0]], [[[[0, 1], 1]]])


def ramified_cycle_ring(p: int, n: int = 6, N: Optional[int] = None) -> RingParams:
    e = p + 2
    return RingParams.standard(p, e, n, 2 * p * e if N is None else N)


def standard_lattice(ring: RingParams, d: int) -> SLattice:
    """S e_1 + ... + S e_d."""
    I = np.eye(d * ring.N, dtype=np.int64)
    return SLattice.from_generators(ring, d, [I[c * ring.N] for c in range(d)])


def ramified_cycle_expected(ring: RingParams) -> dict:
    """Closed forms of the lattices N_1, N_2, N_3 and of the non-free sum N_2 + N_3.

    N_i = S (e1 + (u^{a_i}/(p w_i)) e2) + S e2, with (a, w) = (p, 1),
    (2p, -1 + u^p + u^{p(p+2)}/p) and (p, 1 - u^{p(p-1)}/(u^{p^2} - 1)
    + u^{p(2p+1)}/(p(u^{p^2} - 1))); the sum is S e1 + S e2 + S (u^p/p) e2.
    """
    p = ring.p
    one = DividedSeries.one(ring)
    u = lambda k, w=1: DividedSeries.u_power(ring, k, w)  # noqa: E731
    w2 = -one + u(p) + DividedSeries.from_poly(ring, [0] * (p * (p + 2)) + [Q(1, p)])
    inv = (u(p * p) - one).inverse()
    w3 = one - u(p * (p - 1)) * inv + DividedSeries.from_poly(ring, [0] * (p * (2 * p + 1)) + [Q(1, p)]) * inv

    def lattice(a: int, w: DividedSeries) -> SLattice:
        g1 = np.zeros((2, ring.N), dtype=np.int64)
        g1[0, 0] = p
        g1[1] = (u(a) * w.inverse()).coeffs
        g2 = np.zeros((2, ring.N), dtype=np.int64)
        g2[1, 0] = p
        return SLattice.from_generators(ring, 2, [g1, g2], b=1)

    g3 = np.zeros((2, ring.N), dtype=np.int64)
    g3[1] = u(p).coeffs
    pseudo = SLattice.from_generators(ring, 2, [p * np.eye(2 * ring.N, dtype=np.int64)[c * ring.N] for c in range(2)] + [g3], b=1)
    return {
        "N1": lattice(p, one),
        "N2": lattice(2 * p, w2),
        "N3": lattice(p, w3),
        "pseudo": pseudo,
        "w2": w2,
        "w3": w3,
    }


# cyclic sums and the strong divisibility verdict -----------------------------

def cyclic_sum(D: FilteredPhiN, C: int) -> FilteredPhiN:
    """D^(C) = D + ... + D with phi(x_1, ..., x_C) = (phi x_C, phi x_1, ..., phi x_{C-1})
    and N, Fil componentwise.  Coordinate a*d + c is e_c in copy a."""
    d, e = D.d, D.e
    size = d * C
    zero = Q(0)
    phi = [[zero] * size for _ in range(size)]
    N = [[zero] * size for _ in range(size)]
    for a in range(C):
        b = (a + 1) % C
        for i in range(d):
            for j in range(d):
                phi[a * d + i][b * d + j] = D.phi[i][j]
                N[a * d + i][a * d + j] = D.N[i][j]
    kzero = (zero,) * e
    fil = []
    for level in D.fil:
        vecs = []
        for a in range(C):
            for v in level:
                w = [kzero] * size
                w[a * d:(a + 1) * d] = v
                vecs.append(w)
        fil.append(vecs)
    return FilteredPhiN(D.p, D.E, phi, N, fil)


def direct_sum(ring: RingParams, d: int, lattices: Sequence[SLattice]) -> SLattice:
    """L_1 + ... + L_C inside D^(C)."""
    C = len(lattices)
    b = max(L.b for L in lattices)
    block = d * ring.N
    rows = []
    for a, L in enumerate(lattices):
        lat = L.rescaled(b)
        for r in lat.rows:
            v = np.zeros(C * block, dtype=np.int64)
            v[a * block:(a + 1) * block] = r
            rows.append(v)
    lat = FlatLattice.span(ring.p, ring.n, C * block, np.array(rows, dtype=np.int64))
    return _normalize(ring, b, lat)


def assemble_DC(D: FilteredPhiN, ring: RingParams, cycle: Sequence[SLattice]) -> tuple[BigD, SLattice]:
    DC = cyclic_sum(D, len(cycle))
    return BigD(DC, ring), direct_sum(ring, D.d, cycle)


def minimal_generator_count(ring: RingParams, L: FlatLattice) -> int:
    """dim over F_p of L / m_S L."""
    rows = [(ring.p * L.rows) % ring.q]
    for y in L.rows:
        rows.append(s_span_rows(ring, y)[1:])
    mL = FlatLattice.span(ring.p, ring.n, L.dim, np.vstack(rows))
    return L.log_size() - mL.log_size()


def s_span_rows(ring: RingParams, y: np.ndarray) -> np.ndarray:
    return s_multiples(ring, y.reshape(-1, ring.N))


def verify_strongly_divisible(B: BigD, L: SLattice) -> dict:
    """The conditions for a (pseudo-)strongly divisible lattice, and freeness."""
    ring, r = B.ring, B.D.r
    q = ring.q
    A = L.lattice.intersection(B.fil_level(r))
    target = L.lattice.scale(r + B.phi_den)
    divisible = all(target.contains(v) for v in (A.rows @ B.frobenius_matrix) % q)
    try:
        generates = step_lattice(B, L) == L
    except PrecisionExhausted:
        generates = False
    gens = minimal_generator_count(ring, L.lattice)
    report = {
        "finite_type": True,
        "full_rank": L.lattice.containment_exponent() < ring.n,
        "phi_stable": phi_stable(B, L),
        "N_stable": n_stable(B, L),
        "phi_divisible": divisible,
        "phi_generates": generates,
        "generators": gens,
        "free": gens == B.d,
    }
    report["pseudo_strongly_divisible"] = all(
        report[k] for k in ("full_rank", "phi_stable", "N_stable", "phi_divisible", "phi_generates")
    )
    report["strongly_divisible"] = report["pseudo_strongly_divisible"] and report["free"]
    return report


def filtered_basis(B: BigD, L: SLattice):
    """A basis of p^b L splitting its intersection with Fil^1 (r = 1 only),
    computed at the effective precision of B."""
    if B.D.r > 1:
        raise UnsupportedFiltrationDepth("split filtrations are only defined for r <= 1")
    n = B.effective_precision
    ring = B.ring.with_precision(n=n)
    lat = L.lattice.with_precision(n)
    fil = L.lattice.intersection(B.fil_level(1)).with_precision(n)
    return filtered_free_basis(ring, B.d, lat, fil)


def strongly_divisible_model(B: BigD, L: SLattice) -> tuple[StronglyDivisible, np.ndarray]:
    """L written in a filtered-free basis (e_i), as the module with
    phi_1(x_i) = G_i, together with the matrix of N_S (x) 1 + 1 (x) N_D in
    that basis (row i is N(e_i)).

    Computed at the effective precision n' of B.  Dividing by p to get
    phi_1 costs 1 + k digits (p^k clears the denominators of phi_D), and
    solving for coordinates costs h more when p^b L only contains p^h V, so
    the model lives at precision n' - 1 - k - h.
    """
    if B.D.r != 1:
        raise UnsupportedFiltrationDepth("filtered-free bases need r = 1")
    fb = filtered_basis(B, L)
    p, D, NN = B.ring.p, B.d, B.ring.N
    n1 = B.effective_precision
    shift = 1 + B.phi_den
    h = L.lattice.with_precision(n1).containment_exponent()
    if n1 - shift - h < 2:
        raise PrecisionExhausted(f"effective precision {n1} is too small for phi_1")
    ring1 = B.ring.with_precision(n=n1)
    low = B.ring.with_precision(n=n1 - shift)
    model = B.ring.with_precision(n=n1 - shift - h)
    frob = B.frobenius_matrix % ring1.q
    mono = B.monodromy_matrix % ring1.q
    E = DividedSeries.E(ring1)
    basis = [b % low.q for b in fb.basis]
    G, Nmat = [], []
    for i, b in enumerate(fb.basis):
        x = scalar_mul(ring1, E, b) if i < fb.d1 else b
        y = (x.ravel() @ frob) % ring1.q
        if np.any(y % p**shift):
            raise NotStronglyDivisible(f"phi(x_{i + 1}) is not divisible by p^{shift}")
        g = s_coordinates(low, basis, ((y // p**shift) % low.q).reshape(D, NN))
        nv = s_coordinates(low, basis, ((b.ravel() @ mono) % low.q).reshape(D, NN))
        if g is None or nv is None:
            raise NotStronglyDivisible("image leaves the lattice")
        G.append(g % model.q)
        Nmat.append(nv % model.q)
    return StronglyDivisible(model, fb.d1, np.array(G, dtype=np.int64)), np.array(Nmat, dtype=np.int64)
