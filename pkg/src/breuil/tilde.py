"""Modules over k[u]/u^{ep} with a Fil^1 submodule and a semilinear phi_1.

Vectors of a free module of rank d are ``(d, ep)`` integer arrays mod p; a
submodule is stored through the F_p-span of all its u-multiples.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import NotAModObject, NotDivisible, ParamsMismatch
from .linalg import ChainMatrix, FlatLattice, LinearSolver


# polynomial and matrix helpers over k[u]/u^{ep} ------------------------------

def pmul(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    m = a.shape[-1]
    return np.convolve(a, b)[:m] % p


def pshift(a: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros_like(a)
    if k < a.shape[-1]:
        out[..., k:] = a[..., : a.shape[-1] - k]
    return out


def pfrob(a: np.ndarray, p: int) -> np.ndarray:
    """s(u) -> s(u^p) on the last axis."""
    m = a.shape[-1]
    out = np.zeros_like(a)
    k = (m + p - 1) // p
    out[..., ::p] = a[..., :k]
    return out


def pinv(a: np.ndarray, p: int) -> np.ndarray:
    if a[0] % p == 0:
        raise NotDivisible("not a unit of k[u]/u^{ep}")
    m = a.shape[0]
    a0inv = pow(int(a[0]), -1, p)
    out = np.zeros(m, dtype=np.int64)
    out[0] = a0inv
    for k in range(1, m):
        s = int(np.dot(a[1 : k + 1], out[k - 1 :: -1]))
        out[k] = (-s * a0inv) % p
    return out


def pval(a: np.ndarray) -> int:
    nz = np.nonzero(a)[0]
    return int(nz[0]) if nz.size else a.shape[-1]


def vec_val(v: np.ndarray) -> int:
    """u-adic valuation of a vector (min over coordinates)."""
    return min(pval(c) for c in v)


def mat_vec(v: np.ndarray, M: np.ndarray, p: int) -> np.ndarray:
    """Row vector ``v`` (d, m) times matrix ``M`` (d, d', m)."""
    d, dd, m = M.shape
    out = np.zeros((dd, m), dtype=np.int64)
    for i in range(d):
        if np.any(v[i]):
            for j in range(dd):
                out[j] = (out[j] + pmul(v[i], M[i, j], p)) % p
    return out


def mat_mul(A: np.ndarray, B: np.ndarray, p: int) -> np.ndarray:
    return np.array([mat_vec(A[i], B, p) for i in range(A.shape[0])], dtype=np.int64).reshape(
        A.shape[0], B.shape[1], A.shape[2]
    )


def mat_identity(d: int, m: int) -> np.ndarray:
    out = np.zeros((d, d, m), dtype=np.int64)
    for i in range(d):
        out[i, i, 0] = 1
    return out


def mat_inv(A: np.ndarray, p: int) -> np.ndarray:
    """Inverse over the local ring k[u]/u^m (pivots are units)."""
    d, _, m = A.shape
    A = A.copy() % p
    inv = mat_identity(d, m)
    for c in range(d):
        piv = next((r for r in range(c, d) if A[r, c, 0] % p), None)
        if piv is None:
            raise NotDivisible("matrix is not invertible over k[u]/u^{ep}")
        A[[c, piv]] = A[[piv, c]]
        inv[[c, piv]] = inv[[piv, c]]
        s = pinv(A[c, c], p)
        A[c] = np.array([pmul(s, x, p) for x in A[c]])
        inv[c] = np.array([pmul(s, x, p) for x in inv[c]])
        for r in range(d):
            if r != c and np.any(A[r, c]):
                f = A[r, c].copy()
                A[r] = (A[r] - np.array([pmul(f, x, p) for x in A[c]])) % p
                inv[r] = (inv[r] - np.array([pmul(f, x, p) for x in inv[c]])) % p
    return inv


def u_multiples(v: np.ndarray) -> np.ndarray:
    """Flattened rows ``u^k v`` for k < m."""
    d, m = v.shape
    return np.array([pshift(v, k).ravel() for k in range(m)], dtype=np.int64)


# modules ----------------------------------------------------------------------

@dataclass(frozen=True)
class AdaptedData:
    """Basis (rows of ``basis`` in the old coordinates), exponents r and the
    matrix G with phi_1(u^{r_i} e_i) = sum_j G_ij e_j."""

    basis: np.ndarray
    r: tuple
    G: np.ndarray


class TildeModule:
    """Free k[u]/u^{ep}-module of rank d with Fil^1 generators and their phi_1 images."""

    def __init__(self, p: int, e: int, d: int, fil_gens: Sequence, phi1_images: Sequence):
        self.p, self.e, self.d = p, e, d
        self.m = e * p
        self.fil_gens = [np.asarray(g, dtype=np.int64).reshape(d, self.m) % p for g in fil_gens]
        self.phi1_images = [np.asarray(g, dtype=np.int64).reshape(d, self.m) % p for g in phi1_images]
        if len(self.fil_gens) != len(self.phi1_images):
            raise ValueError("one phi_1 image per Fil^1 generator is required")

    # constructors -----------------------------------------------------
    @classmethod
    def from_adapted(cls, p: int, e: int, r: Sequence[int], G: np.ndarray) -> "TildeModule":
        d = len(r)
        m = e * p
        gens = []
        for i, ri in enumerate(r):
            v = np.zeros((d, m), dtype=np.int64)
            v[i, ri] = 1
            gens.append(v)
        G = np.asarray(G, dtype=np.int64).reshape(d, d, m) % p
        return cls(p, e, d, gens, [G[i] for i in range(d)])

    def change_basis(self, P: np.ndarray) -> "TildeModule":
        """Same module written in the basis given by the rows of P."""
        Pinv = mat_inv(P, self.p)
        conv = lambda v: mat_vec(v, Pinv, self.p)
        return TildeModule(self.p, self.e, self.d, [conv(g) for g in self.fil_gens], [conv(g) for g in self.phi1_images])

    # flattened structures --------------------------------------------
    @cached_property
    def _gen_rows(self) -> np.ndarray:
        rows = [u_multiples(g) for g in self.fil_gens]
        return np.vstack(rows) if rows else np.zeros((0, self.d * self.m), dtype=np.int64)

    @cached_property
    def _img_rows(self) -> np.ndarray:
        rows = []
        for img in self.phi1_images:
            for k in range(self.m):
                rows.append(pshift(img, self.p * k).ravel())
        return np.array(rows, dtype=np.int64).reshape(len(rows), self.d * self.m)

    @cached_property
    def _solver(self) -> LinearSolver:
        return LinearSolver(ChainMatrix(self.p, 1, self._gen_rows, ncols=self.d * self.m))

    @cached_property
    def fil_lattice(self) -> FlatLattice:
        return FlatLattice.span(self.p, 1, self.d * self.m, self._gen_rows)

    def span(self, vecs) -> FlatLattice:
        rows = [u_multiples(np.asarray(v).reshape(self.d, self.m)) for v in vecs]
        stack = np.vstack(rows) if rows else np.zeros((0, self.d * self.m), dtype=np.int64)
        return FlatLattice.span(self.p, 1, self.d * self.m, stack)

    def full(self) -> FlatLattice:
        return FlatLattice.full(self.p, 1, self.d * self.m)

    def in_fil(self, v) -> bool:
        return self.fil_lattice.contains(np.asarray(v).ravel())

    def phi1(self, v) -> np.ndarray:
        """phi_1 of a Fil^1 element, by semilinear extension from the generators."""
        x = self._solver.solve(np.asarray(v).ravel())
        if x is None:
            raise NotAModObject("element is not in Fil^1")
        out = (x @ self._img_rows) % self.p
        return out.reshape(self.d, self.m)

    # category checks --------------------------------------------------
    def contains_ue(self) -> bool:
        for i in range(self.d):
            v = np.zeros((self.d, self.m), dtype=np.int64)
            v[i, self.e] = 1
            if not self.in_fil(v):
                return False
        return True

    def well_defined(self) -> bool:
        """Every relation among the generators is sent to zero."""
        K = self._solver.kernel()
        if K.shape[0] == 0:
            return True
        return not np.any((K @ self._img_rows) % self.p)

    def generates(self) -> bool:
        return self.span(self.phi1_images) == self.full()

    def fil_mod_ue_dim(self) -> int:
        """dim_k Fil^1 / u^e Fil^1."""
        F = self.fil_lattice
        shifted = FlatLattice.span(self.p, 1, self.d * self.m, [self._shift_flat(r, self.e) for r in F.rows])
        return F.log_size() - shifted.log_size()

    def _shift_flat(self, row: np.ndarray, k: int) -> np.ndarray:
        return pshift(row.reshape(self.d, self.m), k).ravel()

    def phi1_linearization_bijective(self) -> bool:
        """Id (x) phi_1 : S~ (x)_phi Fil^1 -> M is an isomorphism.

        The source is free of rank d exactly when Fil^1/u^e Fil^1 has
        dimension d*e, and a surjection between free modules of equal rank
        over a finite ring is bijective.
        """
        return self.fil_mod_ue_dim() == self.d * self.e and self.generates()

    def check(self) -> dict:
        return {
            "contains_ue": self.contains_ue(),
            "well_defined": self.well_defined(),
            "phi1_generates": self.generates(),
            "linearization_bijective": self.phi1_linearization_bijective(),
        }

    def is_object(self) -> bool:
        return all(self.check().values())

    # adapted bases ----------------------------------------------------
    def minimal_generators(self) -> list:
        """Greedy lift of a k-basis of Fil^1 / u Fil^1.

        The given generators are tried first, in order, then the Howell rows.
        """
        F = self.fil_lattice
        uF = FlatLattice.span(self.p, 1, self.d * self.m, [self._shift_flat(r, 1) for r in F.rows])
        chosen, acc = [], uF
        for r in [g.ravel() for g in self.fil_gens] + list(F.rows):
            if not acc.contains(r):
                chosen.append(r.reshape(self.d, self.m).copy())
                acc = acc + self.span([r])
        return chosen

    def adapted_basis(self) -> tuple[np.ndarray, tuple]:
        """A basis (e_i) with Fil^1 = <u^{r_i} e_i>, exponents sorted increasingly."""
        if not self.contains_ue() or not self.generates():
            raise NotAModObject("input is not an object of the category")
        p, d = self.p, self.d
        gens = self.minimal_generators()
        if len(gens) != d:
            raise NotAModObject(f"Fil^1 needs {len(gens)} generators, expected {d}")
        bound = d * self.e * d + d
        for _ in range(bound + 1):
            vals = [vec_val(g) for g in gens]
            order = sorted(range(d), key=lambda i: (vals[i], i))
            gens = [gens[i] for i in order]
            vals = [vals[i] for i in order]
            if any(v > self.e for v in vals):
                raise NotAModObject("a generator left u^e M: Fil^1 does not contain u^e M")
            f = [pshift_down(g, v) for g, v in zip(gens, vals)]
            lead = np.array([fi[:, 0] for fi in f], dtype=np.int64) % p
            dep = _first_dependency(lead, p)
            if dep is None:
                basis = np.array(f, dtype=np.int64)
                return basis, tuple(vals)
            j, coeffs = dep
            g = gens[j].copy()
            for l, k in enumerate(coeffs):
                if k:
                    g = (g - k * pshift(gens[l], vals[j] - vals[l])) % p
            gens[j] = g
        raise AssertionError("adapted basis loop exceeded its bound")

    def adapted(self) -> AdaptedData:
        basis, r = self.adapted_basis()
        Pinv = mat_inv(basis, self.p)
        G = []
        for i, ri in enumerate(r):
            img = self.phi1(pshift(basis[i], ri))
            G.append(mat_vec(img, Pinv, self.p))
        return AdaptedData(basis, r, np.array(G, dtype=np.int64).reshape(self.d, self.d, self.m))

    def normal_form(self) -> tuple:
        """Canonical data: Howell form of Fil^1 and the images of its rows."""
        F = self.fil_lattice
        imgs = np.array([self.phi1(r).ravel() for r in F.rows], dtype=np.int64)
        return F.rows.tobytes(), imgs.tobytes()

    def same_as(self, other: "TildeModule") -> bool:
        if (self.p, self.e, self.d) != (other.p, other.e, other.d):
            raise ParamsMismatch("modules over different rings")
        return self.normal_form() == other.normal_form()

    def minimal_exponent(self, v) -> int:
        """Least r with u^r v in Fil^1 (ep if none)."""
        v = np.asarray(v).reshape(self.d, self.m)
        for r in range(self.m + 1):
            if self.in_fil(pshift(v, r)):
                return r
        return self.m


def pshift_down(v: np.ndarray, k: int) -> np.ndarray:
    """Division by u^k, top coefficients set to zero."""
    out = np.zeros_like(v)
    out[..., : v.shape[-1] - k] = v[..., k:]
    return out


def _first_dependency(lead: np.ndarray, p: int):
    """Smallest j whose row lies in the F_p-span of the rows before it."""
    d = lead.shape[0]
    for j in range(1, d):
        prev = lead[:j]
        x = LinearSolver(ChainMatrix(p, 1, prev, ncols=lead.shape[1])).solve(lead[j])
        if x is not None:
            return j, [int(c) for c in x] + [0] * (d - j)
    return None


# Dieudonne data ----------------------------------------------------------------

@dataclass(frozen=True)
class DieudonneData:
    """F and V on M (x) k; row j is the image of e_j (k = F_p so both are linear)."""

    F: np.ndarray
    V: np.ndarray

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    def fv_zero(self, p: int) -> bool:
        return not np.any((self.V @ self.F) % p) and not np.any((self.F @ self.V) % p)

    def f_rank(self, p: int) -> int:
        return FlatLattice.span(p, 1, self.dim, self.F).log_size()


def frobenius_verschiebung(m: TildeModule, c_tilde: np.ndarray) -> DieudonneData:
    """F and V on the special fibre, from an adapted presentation.

    phi(e_j) = c~^{-1} u^{p(e - r_j)} G_j and V(e_j) = sum_i (G^{-1})_{ji} u^{p r_i} e_i,
    then everything is reduced modulo u.
    """
    p = m.p
    ad = m.adapted()
    if not np.any(c_tilde):
        raise NotAModObject("c~ must be a unit")
    Phi, Ver = tilde_frobenius_verschiebung(m.p, m.e, ad.r, ad.G, c_tilde)
    return DieudonneData(Phi[:, :, 0] % p, Ver[:, :, 0] % p)


def tilde_frobenius_verschiebung(p: int, e: int, r: Sequence[int], G: np.ndarray, c_tilde: np.ndarray):
    """Matrices of phi and V over k[u]/u^{ep} (rows are images of basis vectors)."""
    d = len(r)
    cinv = pinv(np.asarray(c_tilde, dtype=np.int64) % p, p)
    Ginv = mat_inv(G, p)
    Phi = np.zeros_like(G)
    Ver = np.zeros_like(G)
    for j in range(d):
        for k in range(d):
            Phi[j, k] = pmul(cinv, pshift(G[j, k], p * (e - r[j])), p)
            Ver[j, k] = pshift(Ginv[j, k], p * r[k])
    return Phi, Ver


def fv_composites_vanish(p: int, Phi: np.ndarray, Ver: np.ndarray) -> bool:
    """F o V = V o F = 0 over k[u]/u^{ep}.

    Row conventions: F(e_j) = sum_k Phi_jk e_k, V(e_j) = sum_i Ver_ji (1 (x) e_i),
    and the linearized F sends s (x) e_i to s F(e_i).
    """
    FV = mat_mul(Ver, Phi, p)
    VF = mat_mul(Phi, Ver, p)
    return not np.any(FV) and not np.any(VF)


# random objects -----------------------------------------------------------------

def random_invertible(p: int, m: int, d: int, rnd, density: float = 0.3) -> np.ndarray:
    """A (d, d, m) matrix over k[u]/u^m whose constant term is invertible mod p."""
    while True:
        A = np.zeros((d, d, m), dtype=np.int64)
        for i in range(d):
            for j in range(d):
                A[i, j, 0] = rnd.randrange(p)
                for k in range(1, m):
                    if rnd.random() < density:
                        A[i, j, k] = rnd.randrange(p)
        if FlatLattice.span(p, 1, d, A[:, :, 0]).log_size() == d:
            return A


def random_adapted(p: int, e: int, d: int, rnd, density: float = 0.3) -> TildeModule:
    """An object given directly in an adapted basis: random r_i in [0, e] and G."""
    r = [rnd.randint(0, e) for _ in range(d)]
    return TildeModule.from_adapted(p, e, r, random_invertible(p, e * p, d, rnd, density))


def random_object(p: int, e: int, d: int, rnd, density: float = 0.3) -> TildeModule:
    """A random adapted object written in a random other basis."""
    m = random_adapted(p, e, d, rnd, density)
    P = random_invertible(p, e * p, d, rnd, density)
    return m.change_basis(np.array([P[i].copy() for i in range(d)]))
