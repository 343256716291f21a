"""Objects of '(Mod/S) killed by a power of p, presented as X / R with
R ⊆ Fil ⊆ X ⊆ S^d inside one truncation of S.

The working precision n must exceed the exponent of the module: p^{n-1} S^d
is always added to R, so phi_1 (which loses one power of p) is exact on the
quotient.
"""

from __future__ import annotations

import random
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .linalg import FlatLattice
from .rings import DividedSeries, RingParams, fil_generators, frobenius, phi1 as ring_phi1
from .smodule import SemilinearMap, s_multiples, s_span, scalar_mul


def lifted(x: DividedSeries, ring: RingParams) -> DividedSeries:
    """Coefficient lift of a lower-precision element back to ``ring``."""
    return DividedSeries(ring, x.coeffs.tolist())


def phi1_lift(x: DividedSeries) -> DividedSeries:
    """phi_1(x) lifted to the precision of x (meaningful mod p^{n-1})."""
    return lifted(ring_phi1(x), x.ring)


def c_inverse(ring: RingParams) -> DividedSeries:
    return phi1_lift(DividedSeries.E(ring)).inverse()


class PresentedModule:
    """M = X / R with Fil^1 M = Fil / R and phi_1 given on generators of Fil."""

    def __init__(
        self,
        ring: RingParams,
        d: int,
        relations: Sequence,
        fil_gens: Sequence,
        fil_images: Sequence,
        x_gens: Optional[Sequence] = None,
    ):
        self.ring = ring
        self.d = d
        N = ring.N
        shape = (d, N)
        rel = [np.asarray(r, dtype=np.int64).reshape(shape) % ring.q for r in relations]
        top = ring.p ** (ring.n - 1)
        for c in range(d):
            v = np.zeros(shape, dtype=np.int64)
            v[c, 0] = top
            rel.append(v)
        self.relations = rel
        self.fil_gens = [np.asarray(g, dtype=np.int64).reshape(shape) % ring.q for g in fil_gens]
        self.fil_images = [np.asarray(g, dtype=np.int64).reshape(shape) % ring.q for g in fil_images]
        if x_gens is None:
            x_gens = [np.eye(d, dtype=np.int64)[c][:, None] * np.eye(1, N, 0, dtype=np.int64) for c in range(d)]
        self.x_gens = [np.asarray(g, dtype=np.int64).reshape(shape) % ring.q for g in x_gens]

    # lattices ---------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.d * self.ring.N

    @cached_property
    def R(self) -> FlatLattice:
        return s_span(self.ring, self.d, self.relations)

    @cached_property
    def X(self) -> FlatLattice:
        return s_span(self.ring, self.d, self.x_gens) + self.R

    @cached_property
    def phi1(self) -> SemilinearMap:
        zeros = [np.zeros_like(r) for r in self.relations]
        return SemilinearMap(self.ring, self.d, self.fil_gens + self.relations, self.fil_images + zeros)

    @cached_property
    def Fil(self) -> FlatLattice:
        return self.phi1.domain

    def log_size(self) -> int:
        return self.X.log_size() - self.R.log_size()

    def apply_phi1(self, v) -> np.ndarray:
        return self.phi1(v)

    # category checks --------------------------------------------------
    def check_category(self, seed: int = 0, samples: int = 5) -> dict:
        ring, d = self.ring, self.d
        R, X, Fil = self.R, self.X, self.Fil
        fil_in_x = X.contains_lattice(Fil)
        fils = []
        for g in fil_generators(ring, 1):
            for x in self.x_gens:
                fils.append(Fil.contains(scalar_mul(ring, g, x).ravel()))
        rel_ok = all(R.contains(r) for r in self.phi1.relation_images())
        images_in_x = all(X.contains(img.ravel()) for img in self.fil_images)
        generates = (s_span(ring, d, self.fil_images) + R) == X
        rnd = random.Random(seed)
        semi = True
        for _ in range(samples if self.fil_gens else 0):
            k = rnd.randrange(len(self.fil_gens))
            s = DividedSeries(ring, [rnd.randrange(ring.q) for _ in range(ring.N)])
            g = self.fil_gens[k]
            lhs = self.phi1(scalar_mul(ring, s, g))
            rhs = scalar_mul(ring, frobenius(s), self.fil_images[k])
            semi &= R.contains(((lhs - rhs) % ring.q).ravel())
        return {
            "fil_in_module": fil_in_x,
            "fil_contains_FilS_M": all(fils),
            "well_defined": rel_ok,
            "phi1_lands_in_module": images_in_x,
            "phi1_generates": generates,
            "semilinear": semi,
        }

    def is_object(self) -> bool:
        return all(self.check_category().values())

    def exponent(self) -> int:
        """Least k with p^k M = 0."""
        for k in range(self.ring.n + 1):
            if self.R.contains_lattice(self.X.scale(k)):
                return k
        return self.ring.n

    def filtration_saturation(self, rmax: Optional[int] = None) -> dict:
        """p^r Fil^1 M == Fil^1 M ∩ p^r M for r = 1..exponent."""
        out = {}
        top = self.exponent() if rmax is None else rmax
        for r in range(1, top + 1):
            lhs = self.Fil.scale(r) + self.R
            rhs = self.Fil.intersection(self.X.scale(r) + self.R)
            out[r] = lhs == rhs
        return out

    # FI structure -------------------------------------------------------
    def _layer(self, j: int) -> FlatLattice:
        return self.X.scale(j) + self.R

    def _max_ideal_times(self, Y: FlatLattice) -> FlatLattice:
        ring = self.ring
        rows = []
        for y in Y.rows:
            rows.append((ring.p * y) % ring.q)
            rows.append(s_multiples(ring, y)[1:])
        stack = np.vstack([np.atleast_2d(r) for r in rows]) if rows else np.zeros((0, self.dim), dtype=np.int64)
        return FlatLattice.span(ring.p, ring.n, self.dim, stack)

    def layer_ranks(self) -> list[tuple[int, bool]]:
        """(minimal number of generators, freeness over S_1) of p^j M / p^{j+1} M."""
        out = []
        N = self.ring.N
        for j in range(self.exponent()):
            Y, Ynext = self._layer(j), self._layer(j + 1)
            mY = self._max_ideal_times(Y) + self.R
            gens = Y.log_size() - mY.log_size()
            dim = Y.log_size() - Ynext.log_size()
            out.append((gens, dim == gens * N))
        return out

    def fi_shape(self) -> Optional[tuple]:
        """Invariant-factor exponents (n_1 >= ... >= n_d), or None when not of that form."""
        ranks = self.layer_ranks()
        if not all(free for _, free in ranks):
            return None
        counts = [g for g, _ in ranks]
        if any(counts[j] < counts[j + 1] for j in range(len(counts) - 1)):
            return None
        if not counts:
            return ()
        return tuple(sum(1 for c in counts if c > i) for i in range(counts[0]))

    def is_fi(self) -> bool:
        return self.fi_shape() is not None and self.check_category()["phi1_generates"]

    # derived objects ----------------------------------------------------
    def _s_generators(self, L: FlatLattice) -> list:
        """Rows of L lifting an F_p-basis of L / m_S L; they generate L over S."""
        acc = self._max_ideal_times(L)
        chosen = []
        for r in L.rows:
            if not acc.contains(r):
                chosen.append(r)
                acc = acc + s_span(self.ring, self.d, [r])
        return chosen

    def _restrict(self, X: FlatLattice, R: FlatLattice, Fil: FlatLattice, images=None) -> "PresentedModule":
        fil_rows = self._s_generators(Fil) if images is None else list(Fil.rows)
        imgs = images if images is not None else [self.phi1(r) for r in fil_rows]
        return PresentedModule(self.ring, self.d, list(R.rows), fil_rows, imgs, x_gens=list(X.rows))

    def kernel_pr(self, r: int) -> "PresentedModule":
        """The p^r-torsion M^{(p^r)} with the induced Fil^1 and phi_1."""
        ring = self.ring
        mult = (np.eye(self.dim, dtype=np.int64) * ring.p**r) % ring.q
        Xk = self.X.intersection(self.R.preimage(mult)) + self.R
        return self._restrict(Xk, self.R, self.Fil.intersection(Xk))

    def quotient_pr(self, r: int) -> "PresentedModule":
        """M / p^r M with Fil^1 M / p^r Fil^1 M."""
        pX = self.X.scale(r)
        R2 = self.R + pX
        rows = self._s_generators(self.Fil)
        imgs = [self.phi1(v) for v in rows]
        zero = [np.zeros((self.d, self.ring.N), dtype=np.int64) for _ in pX.rows]
        return PresentedModule(
            self.ring, self.d, list(R2.rows), rows + list(pX.rows), imgs + zero, x_gens=list(self.X.rows)
        )

    def multiply_pr(self, r: int) -> "PresentedModule":
        """p^r M with p^r Fil^1 M."""
        ring = self.ring
        X2 = self.X.scale(r) + self.R
        rows = self._s_generators(self.Fil)
        gens = [(ring.p**r * v) % ring.q for v in rows]
        imgs = [(ring.p**r * self.phi1(v)) % ring.q for v in rows]
        return PresentedModule(ring, self.d, list(self.R.rows), gens, imgs, x_gens=list(X2.rows))

    def exact_sequence_holds(self, r: int) -> bool:
        """0 -> M^{(p^r)} -> M -> p^r M -> 0 by counting, plus the inclusions."""
        ker = self.kernel_pr(r)
        img = self.multiply_pr(r)
        return ker.log_size() + img.log_size() == self.log_size() and self.X.contains_lattice(ker.X)

    def submodule(self, gens: Sequence) -> "PresentedModule":
        """The S-submodule generated by ``gens`` (plus R), with the induced Fil^1."""
        Xs = s_span(self.ring, self.d, gens) + self.R
        return self._restrict(Xs, self.R, self.Fil.intersection(Xs))

    def quotient_by(self, sub: "PresentedModule") -> "PresentedModule":
        R2 = self.R + sub.X
        rows = self._s_generators(self.Fil)
        imgs = [self.phi1(v) for v in rows]
        return PresentedModule(self.ring, self.d, list(R2.rows), rows, imgs, x_gens=list(self.X.rows))


# constructors ---------------------------------------------------------------

def fi_block_module(ring: RingParams, blocks: Sequence[tuple]) -> PresentedModule:
    """Direct sum of reductions mod p^{n_b} of strongly divisible modules.

    Each block is ``(level, d1, G)`` with G a ``(db, db, N)`` matrix over S:
    the first d1 basis vectors have Fil^1 = Fil^1 S e_i and phi_1(E e_i) = G_i,
    the others have Fil^1 = S e_i and phi_1(e_i) = G_i.
    """
    d = sum(np.asarray(G).shape[0] for _, _, G in blocks)
    N = ring.N
    cinv = c_inverse(ring)
    gammas = [(g, phi1_lift(g)) for g in fil_generators(ring, 1)]
    rels, gens, imgs = [], [], []
    off = 0
    for level, d1, G in blocks:
        G = np.asarray(G, dtype=np.int64) % ring.q
        db = G.shape[0]
        for i in range(db):
            row = np.zeros((d, N), dtype=np.int64)
            row[off : off + db] = G[i]
            rel = np.zeros((d, N), dtype=np.int64)
            rel[off + i, 0] = ring.p**level
            rels.append(rel)
            if i < d1:
                base = scalar_mul(ring, cinv, row)
                for g, pg in gammas:
                    v = np.zeros((d, N), dtype=np.int64)
                    v[off + i] = g.coeffs
                    gens.append(v)
                    imgs.append(scalar_mul(ring, pg, base))
            else:
                v = np.zeros((d, N), dtype=np.int64)
                v[off + i, 0] = 1
                gens.append(v)
                imgs.append(row)
        off += db
    return PresentedModule(ring, d, rels, gens, imgs)


def counterexample_module(ring: RingParams) -> PresentedModule:
    """Cokernel of S_1(1) -> S_2(1) ⊕ S_1(0), e_1 -> p e_1 ⊕ u^p e_2 (meant for e = p - 1).

    Needs working precision n >= 3.
    """
    p, N = ring.p, ring.N
    d = 2
    rel1 = np.zeros((d, N), dtype=np.int64)
    rel1[0, 0] = p * p
    rel2 = np.zeros((d, N), dtype=np.int64)
    rel2[1, 0] = p
    rel3 = np.zeros((d, N), dtype=np.int64)
    rel3[0, 0] = p
    rel3[1] = DividedSeries.u_power(ring, p).coeffs
    c = phi1_lift(DividedSeries.E(ring))
    e1 = np.zeros((d, N), dtype=np.int64)
    e1[0, 0] = 1
    gens = [e1]
    imgs = [scalar_mul(ring, c, e1)]
    for g in fil_generators(ring, 1):
        v = np.zeros((d, N), dtype=np.int64)
        v[1] = g.coeffs
        w = np.zeros((d, N), dtype=np.int64)
        w[1] = phi1_lift(g).coeffs
        gens.append(v)
        imgs.append(w)
    return PresentedModule(ring, d, [rel1, rel2, rel3], gens, imgs)


def counterexample_extension_check(m: PresentedModule) -> dict:
    """Sub S_1(0) = <e_2> and quotient S_1(1) are objects killed by p, with rank-one free layers."""
    e2 = np.zeros((m.d, m.ring.N), dtype=np.int64)
    e2[1, 0] = 1
    sub = m.submodule([e2])
    quo = m.quotient_by(sub)
    out = {}
    for name, obj in (("sub", sub), ("quotient", quo)):
        chk = obj.check_category()
        out[name + "_is_object"] = all(chk.values())
        out[name + "_killed_by_p"] = obj.exponent() == 1
        out[name + "_shape"] = obj.fi_shape()
    out["sizes_add_up"] = sub.log_size() + quo.log_size() == m.log_size()
    return out
