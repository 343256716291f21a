"""Explicit O_K-algebras R_M attached to Breuil modules killed by p.

R_M = O_K[X_1..X_d] / (X_i^p + (pi^{e - r_i}/F(pi)) sum_j a_ij X_j + pi f_i)
where (r_i) and G~ come from an adapted basis.  When G~ only involves powers
of u^p the corrections f_i vanish; otherwise the variables of the Weil
restriction from O_K[pi_1] (pi_1^p = pi) are eliminated by fixed-point
substitution modulo pi^K.
"""

from __future__ import annotations

import itertools
import math
import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import NotClosedFormEligible, PrecisionExhausted
from .rings import RingParams, signed
from .tilde import AdaptedData, TildeModule
from .torsion import S1Module, T_functor

Poly = dict  # exponent tuple -> O_K element (tuple of e ints)


class OKArith:
    """O_K / pi^K with O_K = Z_p[pi]/(E), elements as tuples of e integers."""

    def __init__(self, p: int, E: tuple, K: int):
        self.p = p
        self.E = tuple(int(c) for c in E)
        self.e = len(E) - 1
        self.K = K
        self.digits = -(-K // self.e) + 1
        self.mod = p**self.digits
        self.zero = (0,) * self.e
        self.one = (1,) + (0,) * (self.e - 1)

    def make(self, coeffs) -> tuple:
        c = [int(x) for x in coeffs]
        return self.truncate(self._reduce(c))

    def _reduce(self, c: list) -> list:
        e, E = self.e, self.E
        for k in range(len(c) - 1, e - 1, -1):
            a = c[k]
            if a:
                c[k] = 0
                for j in range(e):
                    c[k - e + j] -= a * E[j]
        c = c[:e] + [0] * (e - len(c))
        return [x % self.mod for x in c]

    def truncate(self, a) -> tuple:
        """Reduce modulo pi^K (the coefficient of pi^k modulo p^{ceil((K-k)/e)})."""
        return self.truncate_to(a, self.K)

    def add(self, a, b) -> tuple:
        return self.truncate([x + y for x, y in zip(a, b)])

    def neg(self, a) -> tuple:
        return self.truncate([-x for x in a])

    def mul(self, a, b) -> tuple:
        prod = [0] * (2 * self.e - 1)
        for i, x in enumerate(a):
            if x:
                for j, y in enumerate(b):
                    if y:
                        prod[i + j] += x * y
        return self.truncate(self._reduce(prod))

    def scalar(self, n: int) -> tuple:
        return self.truncate([n] + [0] * (self.e - 1))

    def pi_power(self, k: int) -> tuple:
        return self.make([0] * k + [1])

    def is_zero(self, a) -> bool:
        return not any(a)

    def valuation(self, a) -> int:
        best = self.K
        for k, x in enumerate(a):
            if x:
                v = 0
                while x % self.p == 0:
                    x //= self.p
                    v += 1
                best = min(best, self.e * v + k)
        return best

    def is_unit(self, a) -> bool:
        return a[0] % self.p != 0

    def inverse(self, a) -> tuple:
        if not self.is_unit(a):
            raise ZeroDivisionError("not a unit of O_K")
        # Newton iteration x <- x (2 - a x)
        x = self.scalar(pow(int(a[0]), -1, self.mod))
        two = self.scalar(2)
        for _ in range(self.K.bit_length() + 2):
            x = self.mul(x, self.add(two, self.neg(self.mul(a, x))))
        return x

    def divide_by_pi(self, a) -> tuple:
        """a / pi for a in pi O_K, computed with pi^{-1} = pi^{e-1} F(pi)^{-1} / p."""
        if self.valuation(a) < 1:
            raise PrecisionExhausted("element is not divisible by pi")
        # pi^e = -sum_{k<e} E_k pi^k = p F(pi)
        F = tuple(-c // self.p for c in self.E[:-1])
        # the product must be formed e digits deeper, or the division by p eats them
        wide = OKArith(self.p, self.E, self.K + self.e)
        t = wide.mul(a, wide.mul(wide.pi_power(self.e - 1), wide.inverse(F)))
        if any(x % self.p for x in t):
            raise PrecisionExhausted("division by pi not exact at this precision")
        out = [x // self.p for x in t]
        # one pi-adic digit of precision is lost
        return self.truncate_to(out, self.K - 1)

    def truncate_to(self, a, K: int) -> tuple:
        out = []
        for k, x in enumerate(a):
            m = max(0, -(-(K - k) // self.e))
            out.append(int(x) % self.p**m if m else 0)
        return tuple(out)

    def signed_str(self, a, var: str = "pi") -> str:
        terms = []
        for k, x in enumerate(a):
            m = max(0, -(-(self.K - k) // self.e))
            s = signed(int(x) % self.p**m, self.p**m) if m else 0
            if s:
                mono = "" if k == 0 else (var if k == 1 else f"{var}^{k}")
                if not mono:
                    terms.append(str(s))
                elif s == 1:
                    terms.append(mono)
                elif s == -1:
                    terms.append("-" + mono)
                else:
                    terms.append(f"{s}*{mono}")
        return " + ".join(terms).replace("+ -", "- ") if terms else "0"


# polynomials over O_K --------------------------------------------------------

def padd(ok: OKArith, a: Poly, b: Poly) -> Poly:
    out = dict(a)
    for m, c in b.items():
        s = ok.add(out.get(m, ok.zero), c)
        if ok.is_zero(s):
            out.pop(m, None)
        else:
            out[m] = s
    return out


def pscale(ok: OKArith, a: Poly, c) -> Poly:
    out = {}
    for m, x in a.items():
        y = ok.mul(x, c)
        if not ok.is_zero(y):
            out[m] = y
    return out


def pmul(ok: OKArith, a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            m = tuple(x + y for x, y in zip(m1, m2))
            s = ok.add(out.get(m, ok.zero), ok.mul(c1, c2))
            if ok.is_zero(s):
                out.pop(m, None)
            else:
                out[m] = s
    return out


def monomial(nvars: int, i: int, k: int = 1) -> tuple:
    return tuple(k if j == i else 0 for j in range(nvars))


# presentations ------------------------------------------------------------------

@dataclass
class AlgebraPresentation:
    """X_i^p + c_i sum_j a_ij X_j + pi f_i, with c_i = pi^{e - r_i}/F(pi).

    Coefficients are kept modulo pi^K (the corrections f_i modulo pi^{K-1}).
    """

    p: int
    E: tuple
    r: tuple
    A: list  # d x d matrix of O_K elements
    f: list  # d polynomials in X_1..X_d with exponents <= p - 1
    K: int
    closed_form: bool = False
    ok: OKArith = field(init=False, repr=False)

    def __post_init__(self):
        self.ok = OKArith(self.p, self.E, self.K)

    @property
    def d(self) -> int:
        return len(self.r)

    @property
    def e(self) -> int:
        return len(self.E) - 1

    def linear_factor(self, i: int) -> tuple:
        ok = self.ok
        F = tuple(-c // self.p for c in self.E[:-1])
        return ok.mul(ok.pi_power(self.e - self.r[i]), ok.inverse(F))

    def equations(self) -> list[Poly]:
        """The d defining polynomials, fully expanded."""
        ok, d = self.ok, self.d
        out = []
        for i in range(d):
            eq = {monomial(d, i, self.p): ok.one}
            c = self.linear_factor(i)
            for j in range(d):
                eq = padd(ok, eq, {monomial(d, j): ok.mul(c, self.A[i][j])})
            eq = padd(ok, eq, pscale(ok, self.f[i], ok.pi_power(1)))
            out.append(eq)
        return out

    def monomial_basis(self) -> list[tuple]:
        return list(itertools.product(range(self.p), repeat=self.d))

    def rank_check(self) -> bool:
        """Each equation is X_i^p plus terms with all exponents below p, so the
        reduced monomials form an O_K-basis of rank p^d."""
        for i, eq in enumerate(self.equations()):
            for m in eq:
                if m == monomial(self.d, i, self.p):
                    continue
                if max(m) >= self.p:
                    return False
        return len(self.monomial_basis()) == self.p**self.d

    def regular_mod_pi(self) -> bool:
        """Modulo pi the equations are X_i^p + lower-degree terms, whose leading
        monomials are pairwise coprime: a Groebner basis of colength p^d."""
        for i, eq in enumerate(self.equations()):
            for m, c in eq.items():
                if m == monomial(self.d, i, self.p):
                    continue
                if c[0] % self.p and sum(m) >= self.p:
                    return False
        return self.rank_check()

    def unit_pattern(self) -> list[bool]:
        """Whether pi^{e - r_i}/F(pi) is a unit; true exactly when r_i = e."""
        return [self.ok.is_unit(self.linear_factor(i)) for i in range(self.d)]

    def A_invertible(self) -> bool:
        """det(a_ij) is a unit of O_K."""
        d, p = self.d, self.p
        M = [[int(self.A[i][j][0]) % p for j in range(d)] for i in range(d)]
        return _det_mod_p(M, p) != 0

    def _poly_str(self, poly: Poly) -> str:
        terms = []
        for m in sorted(poly, reverse=True):
            c = self.ok.signed_str(poly[m])
            mono = "*".join(
                (f"X{k + 1}" if x == 1 else f"X{k + 1}^{x}") for k, x in enumerate(m) if x
            )
            if not mono:
                terms.append(f"({c})")
            elif c == "1":
                terms.append(mono)
            else:
                terms.append(f"({c})*{mono}")
        return " + ".join(terms) if terms else "0"

    def to_text(self) -> str:
        ok, d = self.ok, self.d
        E = " + ".join(
            (f"u^{k}" if c == 1 else f"{c}*u^{k}") if k else str(c)
            for k, c in reversed(list(enumerate(self.E))) if c
        ).replace("+ -", "- ")
        gens = []
        for i in range(d):
            lin = " + ".join(f"({ok.signed_str(self.A[i][j])})*X{j + 1}" for j in range(d)
                             if not ok.is_zero(self.A[i][j])) or "0"
            eq = f"X{i + 1}^{self.p} + pi^{self.e - self.r[i]}/F(pi) * ({lin})"
            if self.f[i]:
                eq += f" + pi*({self._poly_str(self.f[i])})"
            gens.append(eq)
        variables = ", ".join(f"X{i + 1}" for i in range(d))
        return (f"O_K = Z_p[pi]/({E}) with p = {self.p}, modulo pi^{self.K}\n"
                f"R = O_K[{variables}]/(" + ", ".join(gens) + ")")

    def _digits(self, a) -> list:
        out = []
        for x in a:
            x = int(x)
            ds = []
            for _ in range(self.ok.digits):
                ds.append(x % self.p)
                x //= self.p
            out.append(ds)
        return out

    def to_json(self) -> dict:
        def poly_json(poly):
            return [{"exponents": list(m), "coefficient": self._digits(c)} for m, c in sorted(poly.items())]
        return {
            "base": {"p": self.p, "e": self.e, "E": list(self.E), "pi_precision": self.K},
            "variables": [f"X{i + 1}" for i in range(self.d)],
            "r": list(self.r),
            "a": [[self._digits(x) for x in row] for row in self.A],
            "corrections": [poly_json(f) for f in self.f],
            "equations": [poly_json(eq) for eq in self.equations()],
            "closed_form": self.closed_form,
            "coefficient_encoding": "base-p digits of the coefficients of 1, pi, ..., pi^(e-1)",
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _det_mod_p(M: list, p: int) -> int:
    M = [row[:] for row in M]
    n = len(M)
    det = 1
    for c in range(n):
        piv = next((r for r in range(c, n) if M[r][c] % p), None)
        if piv is None:
            return 0
        if piv != c:
            M[c], M[piv] = M[piv], M[c]
            det = -det
        det = det * M[c][c] % p
        inv = pow(M[c][c], -1, p)
        for r in range(c + 1, n):
            f = M[r][c] * inv % p
            M[r] = [(a - f * b) % p for a, b in zip(M[r], M[c])]
    return det % p


# builders ------------------------------------------------------------------------

ModuleLike = Union[S1Module, TildeModule, AdaptedData]


def _adapted(m: ModuleLike) -> AdaptedData:
    if isinstance(m, S1Module):
        m = T_functor(m)
    if isinstance(m, TildeModule):
        return m.adapted()
    return m


def lift_G(ok: OKArith, G: np.ndarray) -> list:
    """G_pi = sum_l pi_1^l G_l with u^{pa + l} -> pi^a pi_1^l, digits lifted to (-p/2, p/2)."""
    p = ok.p
    d = G.shape[0]
    m = G.shape[2]
    blocks = []
    for l in range(p):
        blocks.append([[ok.make([signed(int(G[i, j, p * a + l]) % p, p) for a in range((m - l + p - 1) // p)])
                        for j in range(d)] for i in range(d)])
    return blocks


def closed_form_eligible(G: np.ndarray, p: int) -> bool:
    """Every u-exponent occurring in G~ is divisible by p."""
    idx = np.nonzero(np.asarray(G) % p)
    return bool(np.all(idx[2] % p == 0)) if len(idx) == 3 else True


def build_algebra_closed(m: ModuleLike, ring: RingParams, K: Optional[int] = None) -> AlgebraPresentation:
    """R_M = O_K[X]/(X_i^p + (pi^{e-r_i}/F(pi)) sum_j a_ij X_j) when G~ lies in
    GL_d(k[u^p]/u^{ep}); a_ij is G~ with u^p replaced by pi."""
    data = _adapted(m)
    K = 2 * ring.e + ring.p if K is None else K
    if not closed_form_eligible(data.G, ring.p):
        raise NotClosedFormEligible("G~ involves u-exponents prime to p")
    ok = OKArith(ring.p, ring.E_coeffs, K)
    A = lift_G(ok, data.G)[0]
    return AlgebraPresentation(ring.p, ring.E_coeffs, tuple(data.r), A, [{} for _ in data.r], K, closed_form=True)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for k in range(total + 1):
        for rest in _compositions(total - k, parts - 1):
            yield (k,) + rest


def _multinomial(ks) -> int:
    out, acc = 1, 0
    for k in ks:
        acc += k
        out *= math.comb(acc, k)
    return out


class _Eliminator:
    """Fixed-point elimination of the variables X_{i,l}, l >= 1, of the Weil
    restriction of O_K[pi_1][X_1..X_d]/(X_i^p + c_i sum_j a_ij(pi_1) X_j).

    Writing X_i = sum_l pi_1^l X_{i,l} and collecting powers of pi_1 gives
    equations S_{i,l}.  For l >= 1, S_{i,l}/c_i = G_0 X_l + (other terms) is
    solved for X_l; S_{i,0} gives X_{i,0}^p.  Both are iterated on
    polynomials in the X_{i,0} reduced by the current expression for X_{i,0}^p.
    """

    def __init__(self, ok: OKArith, r: tuple, blocks: list):
        self.ok = ok
        self.p = ok.p
        self.e = ok.e
        self.d = len(r)
        self.r = r
        self.blocks = blocks
        F = tuple(-c // ok.p for c in ok.E[:-1])
        self.c = [ok.mul(ok.pi_power(self.e - ri), ok.inverse(F)) for ri in r]
        self.nv = self.d * self.p
        self._build_equations()

    def var(self, i: int, l: int) -> int:
        return i * self.p + l

    def _build_equations(self) -> None:
        ok, p, d, nv = self.ok, self.p, self.d, self.nv
        # power[i][l]: coefficient of pi_1^l in (sum_l pi_1^l X_{i,l})^p
        # linear[i][l]: coefficient of pi_1^l in sum_j a_ij(pi_1) X_j(pi_1)
        self.power = [[{} for _ in range(p)] for _ in range(d)]
        self.linear = [[{} for _ in range(p)] for _ in range(d)]
        for i in range(d):
            for ks in _compositions(p, p):
                s = sum(l * k for l, k in enumerate(ks))
                mono = [0] * nv
                for l, k in enumerate(ks):
                    mono[self.var(i, l)] = k
                coeff = _multinomial(ks)
                tgt = s % p
                if tgt:
                    coeff //= p  # exact: divided by p = pi^{r_i} / c_i below
                c = ok.mul(ok.scalar(coeff), ok.pi_power(s // p))
                self.power[i][tgt] = padd(ok, self.power[i][tgt], {tuple(mono): c})
            for j in range(d):
                for mm in range(p):
                    a = self.blocks[mm][i][j]
                    if ok.is_zero(a):
                        continue
                    for l in range(p):
                        t = mm + l
                        c = ok.mul(a, ok.pi_power(t // p))
                        self.linear[i][t % p] = padd(ok, self.linear[i][t % p], {monomial(nv, self.var(j, l)): c})

    # substitution ------------------------------------------------------------
    def reduce(self, poly: Poly, P: list) -> Poly:
        """Rewrite X_{i,0}^p -> P_i until every exponent is below p."""
        ok, p = self.ok, self.p
        out: Poly = {}
        work = list(poly.items())
        steps = 0
        while work:
            steps += 1
            if steps > 200000:
                raise PrecisionExhausted("reduction does not terminate at this pi-adic precision")
            m, c = work.pop()
            big = next((i for i, x in enumerate(m) if x >= p), None)
            if big is None:
                s = ok.add(out.get(m, ok.zero), c)
                if ok.is_zero(s):
                    out.pop(m, None)
                else:
                    out[m] = s
                continue
            rest = tuple(x - p if i == big else x for i, x in enumerate(m))
            for m2, c2 in P[big].items():
                cc = ok.mul(c, c2)
                if not ok.is_zero(cc):
                    work.append((tuple(x + y for x, y in zip(rest, m2)), cc))
        return out

    def substitute(self, poly: Poly, Q: list, P: list) -> Poly:
        """Replace X_{i,l} (l >= 1) by Q[i][l] and reduce, giving a polynomial in X_{.,0}."""
        ok, d, p = self.ok, self.d, self.p
        cache: dict = {}

        def qpow(i, l, k):
            key = (i, l, k)
            if key not in cache:
                cache[key] = {tuple([0] * d): ok.one} if k == 0 else self.reduce(pmul(ok, qpow(i, l, k - 1), Q[i][l]), P)
            return cache[key]

        out: Poly = {}
        for m, c in poly.items():
            term = {tuple(m[self.var(i, 0)] for i in range(d)): c}
            for i in range(d):
                for l in range(1, p):
                    k = m[self.var(i, l)]
                    if k:
                        term = pmul(ok, term, qpow(i, l, k))
                        if not term:
                            break
            out = padd(ok, out, term)
        return self.reduce(out, P)

    # iteration ------------------------------------------------------------------
    def run(self, max_iter: Optional[int] = None) -> tuple[list, list]:
        ok, d, p = self.ok, self.d, self.p
        G0 = self.blocks[0]
        G0inv = _mat_inv_ok(ok, G0)
        x0 = [monomial(d, j) for j in range(d)]
        P = [{} for _ in range(d)]
        for i in range(d):
            for j in range(d):
                P[i] = padd(ok, P[i], {x0[j]: ok.neg(ok.mul(self.c[i], G0[i][j]))})
        Q = [[{} for _ in range(p)] for _ in range(d)]
        # static pieces: S_{i,l}/c_i minus G_0 X_l, and S_{i,0} minus X_{i,0}^p
        rest = [[None] * p for _ in range(d)]
        for i in range(d):
            for l in range(1, p):
                poly = padd(ok, pscale(ok, self.power[i][l], ok.pi_power(self.r[i])), self.linear[i][l])
                for j in range(d):
                    poly = padd(ok, poly, {monomial(self.nv, self.var(j, l)): ok.neg(G0[i][j])})
                rest[i][l] = poly
            poly = padd(ok, self.power[i][0], {monomial(self.nv, self.var(i, 0), p): ok.neg(ok.one)})
            rest[i][0] = padd(ok, poly, pscale(ok, self.linear[i][0], self.c[i]))
        limit = max_iter or (4 * ok.K * p + 20)
        for _ in range(limit):
            # Gauss-Seidel sweep: X_l only depends on X_m for m < l up to terms divisible by pi
            oldQ, oldP = [row[:] for row in Q], P
            for l in range(1, p):
                vals = [self.substitute(rest[i][l], Q, P) for i in range(d)]
                for i in range(d):
                    acc: Poly = {}
                    for j in range(d):
                        acc = padd(ok, acc, pscale(ok, vals[j], ok.neg(G0inv[i][j])))
                    Q[i][l] = acc
            P = [pscale(ok, self.substitute(rest[i][0], Q, P), ok.neg(ok.one)) for i in range(d)]
            if Q == oldQ and P == oldP:
                return P, Q
        raise PrecisionExhausted(f"elimination did not stabilise modulo pi^{ok.K}")


def _mat_inv_ok(ok: OKArith, A: list) -> list:
    d = len(A)
    M = [list(row) + [ok.one if i == j else ok.zero for j in range(d)] for i, row in enumerate(A)]
    for c in range(d):
        piv = next((r for r in range(c, d) if ok.is_unit(M[r][c])), None)
        if piv is None:
            raise PrecisionExhausted("G_0 is not invertible over O_K")
        M[c], M[piv] = M[piv], M[c]
        inv = ok.inverse(M[c][c])
        M[c] = [ok.mul(inv, x) for x in M[c]]
        for r in range(d):
            if r != c and not ok.is_zero(M[r][c]):
                f = M[r][c]
                M[r] = [ok.add(x, ok.neg(ok.mul(f, y))) for x, y in zip(M[r], M[c])]
    return [row[d:] for row in M]


def build_algebra_general(m: ModuleLike, ring: RingParams, K: Optional[int] = None) -> AlgebraPresentation:
    """R_M for any G~, with the corrections f_i computed modulo pi^{K-1}."""
    data = _adapted(m)
    K = 2 * ring.e + ring.p if K is None else K
    ok = OKArith(ring.p, ring.E_coeffs, K)
    blocks = lift_G(ok, data.G)
    elim = _Eliminator(ok, tuple(data.r), blocks)
    P, _ = elim.run()
    d = len(data.r)
    A = blocks[0]
    f = []
    for i in range(d):
        # pi f_i = -P_i - c_i sum_j a_ij X_j
        poly = pscale(ok, P[i], ok.neg(ok.one))
        for j in range(d):
            poly = padd(ok, poly, {monomial(d, j): ok.neg(ok.mul(elim.c[i], A[i][j]))})
        fi = {}
        for mono, c in poly.items():
            q = ok.divide_by_pi(c)
            if not ok.is_zero(q):
                fi[mono] = q
        f.append(fi)
    return AlgebraPresentation(ring.p, ring.E_coeffs, tuple(data.r), A, f, K,
                               closed_form=all(not fi for fi in f))
