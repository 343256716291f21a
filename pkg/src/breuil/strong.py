"""Strongly divisible modules in a filtered-free basis, the canonical
monodromy operator, and filtered-free bases of lattices."""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import BudgetExceeded, NotStronglyDivisible
from .linalg import ChainMatrix, FlatLattice, LinearSolver
from .presented import PresentedModule, c_inverse, fi_block_module
from .rings import DividedSeries, RingParams, f_pi, fil_lattice, monodromy_N
from .smodule import (
    mat_frobenius,
    mat_inv,
    mat_monodromy,
    mat_mul,
    s_multiples,
    s_span,
    scalar_mul,
)
from .tilde import TildeModule


class StronglyDivisible:
    """Free S-module with basis e_i, Fil^1 = (+)_{i<=d1} Fil^1 S e_i (+) (+)_{i>d1} S e_i
    and phi_1(x_i) = G_i where x_i = E e_i (i <= d1) or e_i (i > d1).

    Results involving phi_1 are meaningful modulo p^{n-1}.
    """

    def __init__(self, ring: RingParams, d1: int, G: np.ndarray):
        self.ring = ring
        self.G = np.asarray(G, dtype=np.int64) % ring.q
        self.d = self.G.shape[0]
        self.d1 = d1
        if not (0 <= d1 <= self.d):
            raise ValueError("d1 out of range")
        const = self.G[:, :, 0] % ring.p
        if FlatLattice.span(ring.p, 1, self.d, const).log_size() != self.d:
            raise NotStronglyDivisible("G is not invertible")

    @cached_property
    def X(self) -> np.ndarray:
        """diag(E, ..., E, 1, ..., 1)."""
        ring = self.ring
        X = np.zeros((self.d, self.d, ring.N), dtype=np.int64)
        E = DividedSeries.E(ring).coeffs
        for i in range(self.d):
            if i < self.d1:
                X[i, i] = E
            else:
                X[i, i, 0] = 1
        return X

    @cached_property
    def frobenius_matrix(self) -> np.ndarray:
        """Rows phi(e_i): c^{-1} G_i for i <= d1, p G_i otherwise."""
        ring = self.ring
        cinv = c_inverse(ring)
        out = np.zeros_like(self.G)
        for i in range(self.d):
            out[i] = scalar_mul(ring, cinv, self.G[i]) if i < self.d1 else (ring.p * self.G[i]) % ring.q
        return out

    @cached_property
    def G_inverse(self) -> np.ndarray:
        return mat_inv(self.ring, self.G)

    def _step(self, Nprev: np.ndarray) -> np.ndarray:
        ring = self.ring
        inner = (mat_monodromy(ring, self.X) + mat_mul(ring, self.X, Nprev)) % ring.q
        rhs = (mat_mul(ring, mat_frobenius(ring, inner), self.frobenius_matrix) - mat_monodromy(ring, self.G)) % ring.q
        return mat_mul(ring, self.G_inverse, rhs)

    def monodromy_construct(self, budget: int = 64, trace: Optional[list] = None) -> np.ndarray:
        """The unique derivation N with N phi_1 = phi N and N(M) ⊂ I M.

        Start from the derivation killing the phi_1(x_i), then impose
        N_k(phi_1(x_i)) = phi(N_{k-1}(x_i)) until the matrix is stable
        modulo p^{n-1}.
        """
        ring = self.ring
        mod = ring.p ** (ring.n - 1)
        Nk = (-mat_mul(ring, self.G_inverse, mat_monodromy(ring, self.G))) % ring.q
        for step in range(budget):
            nxt = self._step(Nk)
            if trace is not None:
                trace.append(nxt % mod)
            if np.array_equal(nxt % mod, Nk % mod):
                return nxt % mod
            Nk = nxt
        raise BudgetExceeded(f"monodromy did not stabilize within {budget} steps", partial=Nk % mod)

    def monodromy_defect(self, Nmat: np.ndarray) -> np.ndarray:
        """N(phi_1(x_i)) - phi(N(x_i)) modulo p^{n-1}, row by row."""
        ring = self.ring
        mod = ring.p ** (ring.n - 1)
        lhs = (mat_monodromy(ring, self.G) + mat_mul(ring, self.G, Nmat)) % ring.q
        inner = (mat_monodromy(ring, self.X) + mat_mul(ring, self.X, Nmat)) % ring.q
        rhs = mat_mul(ring, mat_frobenius(ring, inner), self.frobenius_matrix)
        return (lhs - rhs) % mod

    def check_monodromy(self, Nmat: np.ndarray, seed: int = 0, samples: int = 3) -> dict:
        ring = self.ring
        mod = ring.p ** (ring.n - 1)
        # Leibniz: N(s v) = N(s) v + s N(v) on random s, v
        rnd = random.Random(seed)
        leibniz = True
        for _ in range(samples):
            s = DividedSeries(ring, [rnd.randrange(ring.q) for _ in range(ring.N)])
            v = np.array([[rnd.randrange(ring.q) for _ in range(ring.N)] for _ in range(self.d)], dtype=np.int64)
            lhs = self.apply_N(Nmat, scalar_mul(ring, s, v))
            rhs = scalar_mul(ring, monodromy_N(s), v) + scalar_mul(ring, s, self.apply_N(Nmat, v))
            leibniz &= not np.any((lhs - rhs) % mod)
        return {
            "commutes_with_phi1": not np.any(self.monodromy_defect(Nmat)),
            "in_IM": not np.any(Nmat[:, :, 0] % mod),
            "leibniz": leibniz,
        }

    def apply_N(self, Nmat: np.ndarray, v: np.ndarray) -> np.ndarray:
        """N(sum s_i e_i) = sum N(s_i) e_i + s_i N(e_i)."""
        ring = self.ring
        out = (v * (-np.arange(ring.N) % ring.q)) % ring.q
        for i in range(self.d):
            if np.any(v[i]):
                out = (out + scalar_mul(ring, v[i], Nmat[i])) % ring.q
        return out

    def perturbation_breaks(self, Nmat: np.ndarray, seed: int = 0) -> bool:
        """A random nonzero perturbation with entries in I violates N phi_1 = phi N."""
        ring = self.ring
        rnd = random.Random(seed)
        mod = ring.p ** (ring.n - 1)
        P = np.zeros_like(Nmat)
        while not np.any(P % mod):
            P = np.array(
                [[[0] + [rnd.randrange(ring.q) if rnd.random() < 0.3 else 0 for _ in range(ring.N - 1)]
                  for _ in range(self.d)] for _ in range(self.d)],
                dtype=np.int64,
            )
        return bool(np.any(self.monodromy_defect((Nmat + P) % ring.q)))

    # associated objects --------------------------------------------------
    def lattice(self) -> FlatLattice:
        ring = self.ring
        return FlatLattice.full(ring.p, ring.n, self.d * ring.N)

    def fil_lattice(self) -> FlatLattice:
        ring = self.ring
        gens = []
        filS = fil_lattice(ring, 1)
        for i in range(self.d):
            v = np.zeros((self.d, ring.N), dtype=np.int64)
            if i < self.d1:
                for r in filS.rows:
                    w = v.copy()
                    w[i] = r
                    gens.append(w.ravel())
            else:
                v[i, 0] = 1
                gens.extend(s_multiples(ring, v))
        return FlatLattice.span(ring.p, ring.n, self.d * ring.N, gens)

    def reduction(self, level: int) -> PresentedModule:
        """M / p^level M as an object of (Mod FI/S)."""
        if level > self.ring.n - 1:
            raise ValueError("working precision must exceed the level")
        return fi_block_module(self.ring, [(level, self.d1, self.G)])

    def tilde(self) -> TildeModule:
        """T(M / pM): exponents e (i <= d1) or 0 and G reduced to k[u]/u^{ep}."""
        from .torsion import _sigma_vec

        ring = self.ring
        r = [ring.e if i < self.d1 else 0 for i in range(self.d)]
        G = np.array([_sigma_vec(ring, self.G[i] % ring.p) for i in range(self.d)], dtype=np.int64)
        return TildeModule.from_adapted(ring.p, ring.e, r, G)


def random_strongly_divisible(ring: RingParams, d: int, rnd: random.Random, density: float = 0.3) -> StronglyDivisible:
    while True:
        G = np.zeros((d, d, ring.N), dtype=np.int64)
        for i in range(d):
            for j in range(d):
                G[i, j, 0] = rnd.randrange(ring.q)
                for k in range(1, ring.N):
                    if rnd.random() < density:
                        G[i, j, k] = rnd.randrange(ring.q)
        try:
            return StronglyDivisible(ring, rnd.randint(0, d), G)
        except NotStronglyDivisible:
            continue


# filtered-free bases -------------------------------------------------------------

@dataclass
class FilteredBasis:
    basis: np.ndarray  # (d, D, N)
    d1: int


def maximal_ideal_times(ring: RingParams, L: FlatLattice) -> FlatLattice:
    """m_S L = p L + sum_{j >= 1} (u^j/q(j)!) L."""
    rows = []
    for y in L.rows:
        rows.append(((ring.p * y) % ring.q)[None, :])
        rows.append(s_multiples(ring, y)[1:])
    stack = np.vstack(rows) if rows else np.zeros((0, L.dim), dtype=np.int64)
    return FlatLattice.span(ring.p, ring.n, L.dim, stack)


def minimal_s_generators(ring: RingParams, D: int, L: FlatLattice) -> list[np.ndarray]:
    """Greedy lift of an F_p-basis of L / m_S L."""
    acc = maximal_ideal_times(ring, L)
    chosen = []
    for r in L.rows:
        if not acc.contains(r):
            chosen.append(r.reshape(D, ring.N).copy())
            acc = acc + s_span(ring, D, [r])
    return chosen


def s_coordinates(ring: RingParams, basis: Sequence[np.ndarray], v: np.ndarray) -> Optional[np.ndarray]:
    """S-coefficients (d, N) of v on the given vectors, or None."""
    D = basis[0].shape[0]
    rows = np.vstack([s_multiples(ring, b) for b in basis])
    x = LinearSolver(ChainMatrix(ring.p, ring.n, rows, ncols=D * ring.N)).solve(v.ravel())
    if x is None:
        return None
    d = len(basis)
    out = np.zeros((d, ring.N), dtype=np.int64)
    for k in range(d):
        out[k] = x[k * ring.N : (k + 1) * ring.N]
    return out


def filtered_free_basis(ring: RingParams, D: int, L: FlatLattice, FilL: FlatLattice) -> FilteredBasis:
    """A basis (e_i) of L with FilL = (+)_{i<=d1} Fil^1 S e_i (+) (+)_{i>d1} S e_i.

    Lift a basis of L/Fil^1 S L ≅ O_K^d adapted to the image of FilL, which is
    read off modulo pi.
    """
    p = ring.p
    f = minimal_s_generators(ring, D, L)
    if len(f) != D:
        raise NotStronglyDivisible(f"lattice needs {len(f)} generators, rank is {D}")
    rows = np.vstack([s_multiples(ring, b) for b in f])
    solver = LinearSolver(ChainMatrix(ring.p, ring.n, rows, ncols=D * ring.N))
    # reductions mod pi of the O_K-coordinates of elements of FilL
    cand, reds = [], []
    for v in FilL.rows:
        x = solver.solve(v)
        if x is None:
            raise NotStronglyDivisible("filtration is not inside the lattice")
        red = np.array([f_pi(DividedSeries._raw(ring, x[k * ring.N : (k + 1) * ring.N].copy())).coeffs[0] % p
                        for k in range(D)], dtype=np.int64)
        cand.append(v.reshape(D, ring.N))
        reds.append(red)
    chosen, chosen_red = [], []
    for v, red in zip(cand, reds):
        trial = chosen_red + [red]
        if FlatLattice.span(p, 1, D, trial).log_size() == len(trial):
            chosen.append(v)
            chosen_red.append(red)
    comp = []
    for k in range(D):
        unit = np.zeros(D, dtype=np.int64)
        unit[k] = 1
        trial = chosen_red + [unit] + [np.eye(D, dtype=np.int64)[j] for j in comp]
        if FlatLattice.span(p, 1, D, trial).log_size() == len(trial):
            comp.append(k)
        if len(comp) + len(chosen) == D:
            break
    d1 = len(comp)
    basis = [f[k] for k in comp] + chosen
    B = np.array(basis, dtype=np.int64)
    if s_span(ring, D, basis) != L:
        raise NotStronglyDivisible("lifted vectors do not span the lattice")
    if filtered_span(ring, B, d1) != FilL:
        raise NotStronglyDivisible("filtration is not of the split form")
    return FilteredBasis(B, d1)


def filtered_span(ring: RingParams, basis: np.ndarray, d1: int) -> FlatLattice:
    """(+)_{i<=d1} Fil^1 S e_i (+) (+)_{i>d1} S e_i."""
    D = basis.shape[1]
    gens = []
    filS = fil_lattice(ring, 1)
    for i, b in enumerate(basis):
        if i < d1:
            for r in filS.rows:
                gens.append(scalar_mul(ring, r, b).ravel())
        else:
            gens.extend(s_multiples(ring, b))
    return FlatLattice.span(ring.p, ring.n, D * ring.N, gens)
