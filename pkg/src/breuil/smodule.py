"""Flattened free S-modules: a vector of S^d at precision (p^n, u^N) is a
``(d, N)`` coefficient array, flattened to length ``d*N`` with index
``c*N + j`` for coordinate c and divided monomial j.
"""

from __future__ import annotations

from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import NotInFiltration
from .linalg import ChainMatrix, FlatLattice, LinearSolver
from .rings import DividedSeries, RingParams, _mul_arrays, _tables, fil_generators, monomial_multiples


def as_vec(ring: RingParams, v, d: int) -> np.ndarray:
    """Coerce a list of DividedSeries / arrays into a ``(d, N)`` array."""
    if isinstance(v, np.ndarray) and v.shape == (d, ring.N):
        return v % ring.q
    out = np.zeros((d, ring.N), dtype=np.int64)
    for c, x in enumerate(v):
        out[c] = x.coeffs if isinstance(x, DividedSeries) else np.asarray(x, dtype=np.int64)
    return out % ring.q


def unit_vec(ring: RingParams, d: int, c: int) -> np.ndarray:
    v = np.zeros((d, ring.N), dtype=np.int64)
    v[c, 0] = 1
    return v


def scalar_mul(ring: RingParams, s, v: np.ndarray) -> np.ndarray:
    sc = s.coeffs if isinstance(s, DividedSeries) else np.asarray(s, dtype=np.int64)
    return np.array([_mul_arrays(ring, sc, row) for row in v], dtype=np.int64)


def vec_frobenius(ring: RingParams, v: np.ndarray) -> np.ndarray:
    tab = _tables(ring)
    out = np.zeros_like(v)
    out[:, tab.phi_dst] = (v[:, tab.phi_src] * tab.phi_fac) % ring.q
    return out


def vec_monodromy(ring: RingParams, v: np.ndarray) -> np.ndarray:
    return (v * _tables(ring).monodromy) % ring.q


def vec_times_matrix(ring: RingParams, v: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Row vector times a ``(d, d', N)`` matrix over S."""
    d, dd, _ = M.shape
    out = np.zeros((dd, ring.N), dtype=np.int64)
    for i in range(d):
        if np.any(v[i]):
            for j in range(dd):
                if np.any(M[i, j]):
                    out[j] = (out[j] + _mul_arrays(ring, v[i], M[i, j])) % ring.q
    return out


def mat_mul(ring: RingParams, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.array([vec_times_matrix(ring, A[i], B) for i in range(A.shape[0])], dtype=np.int64)


def mat_frobenius(ring: RingParams, A: np.ndarray) -> np.ndarray:
    return np.array([vec_frobenius(ring, A[i]) for i in range(A.shape[0])], dtype=np.int64)


def mat_monodromy(ring: RingParams, A: np.ndarray) -> np.ndarray:
    return np.array([vec_monodromy(ring, A[i]) for i in range(A.shape[0])], dtype=np.int64)


def mat_identity(ring: RingParams, d: int) -> np.ndarray:
    return np.array([unit_vec(ring, d, i) for i in range(d)], dtype=np.int64)


def mat_inv(ring: RingParams, A: np.ndarray) -> np.ndarray:
    """Inverse over the local ring S (pivots must be units)."""
    d = A.shape[0]
    A = A.copy() % ring.q
    inv = mat_identity(ring, d)
    for c in range(d):
        piv = next((r for r in range(c, d) if A[r, c, 0] % ring.p), None)
        if piv is None:
            raise ZeroDivisionError("matrix is not invertible over S")
        A[[c, piv]] = A[[piv, c]]
        inv[[c, piv]] = inv[[piv, c]]
        s = DividedSeries._raw(ring, A[c, c].copy()).inverse()
        A[c] = scalar_mul(ring, s, A[c])
        inv[c] = scalar_mul(ring, s, inv[c])
        for r in range(d):
            if r != c and np.any(A[r, c]):
                f = A[r, c].copy()
                A[r] = (A[r] - scalar_mul(ring, f, A[c])) % ring.q
                inv[r] = (inv[r] - scalar_mul(ring, f, inv[c])) % ring.q
    return inv


def s_multiples(ring: RingParams, v: np.ndarray) -> np.ndarray:
    """Flattened rows ``b_j v`` for every divided monomial b_j."""
    d = v.shape[0] if v.ndim == 2 else v.size // ring.N
    v = v.reshape(d, ring.N)
    blocks = [monomial_multiples(ring, v[c]) for c in range(d)]
    return np.hstack(blocks)


def s_span(ring: RingParams, d: int, vecs) -> FlatLattice:
    """S-span of vectors of S^d as a flat lattice."""
    rows = [np.asarray(v, dtype=np.int64).reshape(d * ring.N) for v in vecs]
    return FlatLattice.span(ring.p, ring.n, d * ring.N, rows, closure=lambda r: s_multiples(ring, r))


def fil_s_times_basis(ring: RingParams, d: int, r: int = 1) -> list[np.ndarray]:
    """Generators gamma_i(E) e_c of Fil^r S . S^d."""
    out = []
    for g in fil_generators(ring, r):
        for c in range(d):
            v = np.zeros((d, ring.N), dtype=np.int64)
            v[c] = g.coeffs
            out.append(v)
    return out


class SemilinearMap:
    """A phi-semilinear map on the S-span of generators, given by their images.

    phi_1(b_j g) = phi(b_j) phi_1(g) for every divided monomial b_j; general
    elements are decomposed by solving over Z/p^n.
    """

    def __init__(self, ring: RingParams, d: int, gens: Sequence[np.ndarray], images: Sequence[np.ndarray], d_out: int = None):
        self.ring = ring
        self.d = d
        self.d_out = d if d_out is None else d_out
        self.gens = [np.asarray(g, dtype=np.int64).reshape(d, ring.N) % ring.q for g in gens]
        self.images = [np.asarray(g, dtype=np.int64).reshape(self.d_out, ring.N) % ring.q for g in images]

    @cached_property
    def rows(self) -> np.ndarray:
        ring = self.ring
        if not self.gens:
            return np.zeros((0, self.d * ring.N), dtype=np.int64)
        return np.vstack([s_multiples(ring, g) for g in self.gens])

    @cached_property
    def image_rows(self) -> np.ndarray:
        ring = self.ring
        tab = _tables(ring)
        N = ring.N
        out = np.zeros((len(self.gens) * N, self.d_out * N), dtype=np.int64)
        for k, img in enumerate(self.images):
            mult = s_multiples(ring, img)
            for src, dst, fac in zip(tab.phi_src, tab.phi_dst, tab.phi_fac):
                out[k * N + src] = (mult[dst] * fac) % ring.q
        return out

    @cached_property
    def solver(self) -> LinearSolver:
        ring = self.ring
        return LinearSolver(ChainMatrix(ring.p, ring.n, self.rows, ncols=self.d * ring.N))

    @cached_property
    def domain(self) -> FlatLattice:
        ring = self.ring
        return FlatLattice.span(ring.p, ring.n, self.d * ring.N, self.rows)

    def __call__(self, v) -> np.ndarray:
        x = self.solver.solve(np.asarray(v, dtype=np.int64).ravel())
        if x is None:
            raise NotInFiltration("element outside the domain of phi_1")
        return ((x @ self.image_rows) % self.ring.q).reshape(self.d_out, self.ring.N)

    def relation_images(self) -> np.ndarray:
        """Images of a spanning set of the relations among the flattened generators."""
        K = self.solver.kernel()
        return (K @ self.image_rows) % self.ring.q
