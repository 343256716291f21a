"""Modules over S_1 = S/pS and their equivalence with modules over k[u]/u^{ep}."""

from __future__ import annotations

import math
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ParamsMismatch
from .linalg import FlatLattice
from .rings import DividedSeries, RingParams, fil_generators, phi1 as ring_phi1
from .smodule import SemilinearMap, fil_s_times_basis, s_span
from .tilde import TildeModule


def _sigma_vec(ring: RingParams, v: np.ndarray) -> np.ndarray:
    """Coordinatewise S_1 -> k[u]/u^{ep}."""
    p, e = ring.p, ring.e
    m = e * p
    out = np.zeros((v.shape[0], m), dtype=np.int64)
    for j in range(min(m, ring.N)):
        inv = pow(math.factorial(j // e), -1, p)
        out[:, j] = (v[:, j] * inv) % p
    return out


def _lift_vec(ring: RingParams, t: np.ndarray) -> np.ndarray:
    """k[u]/u^{ep} -> S_1, u^j -> u^j = q(j)! (u^j/q(j)!)."""
    p, e = ring.p, ring.e
    out = np.zeros((t.shape[0], ring.N), dtype=np.int64)
    for j in range(t.shape[1]):
        out[:, j] = (t[:, j] * math.factorial(j // e)) % p
    return out


class S1Module:
    """Free S_1-module of rank d with Fil^1 generators and phi_1 images."""

    def __init__(self, ring: RingParams, d: int, fil_gens: Sequence, phi1_images: Sequence):
        if ring.n != 1:
            ring = ring.with_precision(n=1)
        self.ring = ring
        self.d = d
        self.fil_gens = [np.asarray(g, dtype=np.int64).reshape(d, ring.N) % ring.p for g in fil_gens]
        self.phi1_images = [np.asarray(g, dtype=np.int64).reshape(d, ring.N) % ring.p for g in phi1_images]

    @cached_property
    def phi1(self) -> SemilinearMap:
        return SemilinearMap(self.ring, self.d, self.fil_gens, self.phi1_images)

    @cached_property
    def fil_lattice(self) -> FlatLattice:
        return self.phi1.domain

    def full(self) -> FlatLattice:
        return FlatLattice.full(self.ring.p, 1, self.d * self.ring.N)

    def check(self) -> dict:
        ring, d = self.ring, self.d
        fil_s = all(self.fil_lattice.contains(v.ravel()) for v in fil_s_times_basis(ring, d))
        gen = s_span(ring, d, self.phi1_images) == self.full()
        rel = self.phi1.relation_images()
        return {
            "fil_contains_FilS_M": fil_s,
            "well_defined": not np.any(rel),
            "phi1_generates": gen,
        }

    def normal_form(self) -> tuple:
        F = self.fil_lattice
        imgs = np.array([self.phi1(r).ravel() for r in F.rows], dtype=np.int64)
        return F.rows.tobytes(), imgs.tobytes()

    def same_as(self, other: "S1Module") -> bool:
        if (self.ring, self.d) != (other.ring, other.d):
            raise ParamsMismatch("modules over different rings")
        return self.normal_form() == other.normal_form()


def T_functor(m: S1Module) -> TildeModule:
    """Base change along S_1 -> k[u]/u^{ep} (killing the divided powers of level >= p)."""
    ring = m.ring
    gens = [_sigma_vec(ring, g) for g in m.fil_gens]
    imgs = [_sigma_vec(ring, g) for g in m.phi1_images]
    return TildeModule(ring.p, ring.e, m.d, gens, imgs)


def T_inverse(t: TildeModule, ring: RingParams) -> S1Module:
    """S_1 (x) M~: lifts of the Fil^1 generators plus Fil^p S_1 . M, on which phi_1 vanishes."""
    if (ring.p, ring.e) != (t.p, t.e):
        raise ParamsMismatch("ring does not match the module")
    ring = ring.with_precision(n=1)
    gens = [_lift_vec(ring, g) for g in t.fil_gens]
    imgs = [_lift_vec(ring, g) for g in t.phi1_images]
    zero = np.zeros((t.d, ring.N), dtype=np.int64)
    for i in _gamma_indices_from(ring, ring.p):
        g = DividedSeries.gamma_E(ring, i)
        if g.is_zero():
            continue
        for c in range(t.d):
            v = zero.copy()
            v[c] = g.coeffs
            gens.append(v)
            imgs.append(zero.copy())
    return S1Module(ring, t.d, gens, imgs)


def _gamma_indices_from(ring: RingParams, start: int):
    return range(start, ring.gamma_bound() + 1)


def standard_S1(ring: RingParams, r: int) -> S1Module:
    """Rank one S_1(1) (r = 0: Fil^1 = M, phi_1(e) = c e) or S_1(0) (r = e:
    Fil^1 = Fil^1 S_1 e, phi_1(s e) = phi_1(s) e)."""
    ring = ring.with_precision(n=1)
    full_ring = ring.with_precision(n=2)
    if r == 0:
        c = DividedSeries.c(full_ring)
        return S1Module(ring, 1, [[DividedSeries.one(ring).coeffs]], [[c.coeffs % ring.p]])
    gens, imgs = [], []
    for g in fil_generators(full_ring, 1):
        gens.append([g.coeffs % ring.p])
        imgs.append([ring_phi1(g).coeffs % ring.p])
    return S1Module(ring, 1, gens, imgs)
