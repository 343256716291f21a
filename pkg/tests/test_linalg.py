import itertools
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from breuil.errors import AmbientMismatch
from breuil.linalg import (
    ChainMatrix,
    FlatLattice,
    howell_form,
    lattice_eq,
    lattice_sum,
    left_kernel,
    solve_membership,
    span_enumeration,
)


def _span_of(lat: FlatLattice) -> set:
    return span_enumeration(lat.rows.tolist(), lat.modulus) if lat.rows.shape[0] else {tuple([0] * lat.dim)}


small_mats = st.tuples(st.sampled_from([(3, 1), (3, 2), (3, 3)]), st.integers(1, 3), st.integers(1, 3)).flatmap(
    lambda t: st.tuples(
        st.just(t[0]),
        st.lists(st.lists(st.integers(0, t[0][0] ** t[0][1] - 1), min_size=t[2], max_size=t[2]), min_size=t[1], max_size=t[1]),
    )
)


def test_single_entry_already_reduced():
    h = howell_form(ChainMatrix(3, 2, [[3]]))
    assert h.rows.tolist() == [[3]]


@pytest.mark.parametrize("p,n", [(3, 1), (3, 4), (5, 2)])
def test_identity_is_fixed(p, n):
    h = howell_form(ChainMatrix(p, n, np.eye(3, dtype=np.int64)))
    assert h.rows.tolist() == np.eye(3, dtype=int).tolist()


def test_dependent_rows_over_z9():
    gens = [[2, 4], [4, 8]]
    lat = FlatLattice.span(3, 2, 2, gens)
    assert _span_of(lat) == span_enumeration(gens, 9)


@settings(max_examples=60, deadline=None)
@given(small_mats)
def test_howell_matches_enumeration(data):
    (p, n), rows = data
    m = ChainMatrix(p, n, rows)
    h = howell_form(m)
    q = p**n
    assert span_enumeration(h.rows.tolist(), q) | {tuple([0] * m.ncols)} == span_enumeration(rows, q) | {tuple([0] * m.ncols)}
    assert howell_form(h) == h


@settings(max_examples=40, deadline=None)
@given(small_mats, st.randoms(use_true_random=False))
def test_equal_spans_have_equal_forms(data, rnd):
    (p, n), rows = data
    q = p**n
    # random unimodular remix of the generators
    k = len(rows)
    mix = np.eye(k, dtype=np.int64)
    for _ in range(4):
        i, j = rnd.randrange(k), rnd.randrange(k)
        if i != j:
            mix[i] = (mix[i] + rnd.randrange(q) * mix[j]) % q
    mixed = (mix @ np.array(rows, dtype=np.int64)) % q
    mixed = np.vstack([mixed, (p * mixed[:1]) % q])
    assert howell_form(ChainMatrix(p, n, rows)) == howell_form(ChainMatrix(p, n, mixed))


def test_membership_trivial_cases():
    gens = ChainMatrix(3, 2, [[1, 3, 0], [0, 3, 6]])
    assert solve_membership(gens, [0, 0, 0]).tolist() == [0, 0]
    x = solve_membership(gens, [0, 3, 6])
    assert ((x @ gens.rows) % 9).tolist() == [0, 3, 6]


@pytest.mark.parametrize("seed", range(15))
def test_membership_against_enumeration(seed):
    rnd = random.Random(seed)
    dim = rnd.randint(1, 3)
    gens = [[rnd.randrange(9) for _ in range(dim)] for _ in range(rnd.randint(1, 3))]
    span = span_enumeration(gens, 9)
    cm = ChainMatrix(3, 2, gens)
    lat = FlatLattice.span(3, 2, dim, gens)
    for v in itertools.product(range(9), repeat=dim):
        x = solve_membership(cm, v)
        assert (x is not None) == (v in span)
        assert lat.contains(v) == (v in span)
        if x is not None:
            assert tuple(((x @ cm.rows) % 9).tolist()) == v


def test_sum_properties():
    a = FlatLattice.span(3, 2, 2, [[3, 1]])
    b = FlatLattice.span(3, 2, 2, [[0, 3]])
    full = FlatLattice.full(3, 2, 2)
    assert lattice_eq(lattice_sum(a, a), a)
    assert lattice_eq(a + full, full)
    assert lattice_eq(a + b, b + a)
    c = FlatLattice.span(3, 2, 2, [[1, 1]])
    assert (a + b) + c == a + (b + c)


def test_ambient_mismatch():
    with pytest.raises(AmbientMismatch):
        FlatLattice.full(3, 2, 2) + FlatLattice.full(3, 2, 3)
    with pytest.raises(AmbientMismatch):
        FlatLattice.full(3, 2, 2) + FlatLattice.full(3, 3, 2)


@pytest.mark.parametrize("seed", range(10))
def test_intersection_and_kernel(seed):
    rnd = random.Random(100 + seed)
    dim = 2
    ga = [[rnd.randrange(27) for _ in range(dim)] for _ in range(2)]
    gb = [[rnd.randrange(27) for _ in range(dim)] for _ in range(2)]
    a = FlatLattice.span(3, 3, dim, ga)
    b = FlatLattice.span(3, 3, dim, gb)
    inter = a.intersection(b)
    assert _span_of(inter) == _span_of(a) & _span_of(b)
    assert a.log_size() == len(_span_of(a)).bit_length() - 1 or 3 ** a.log_size() == len(_span_of(a))
    assert 3 ** a.log_size() == len(_span_of(a))
    m = ChainMatrix(3, 3, ga)
    ker = left_kernel(m)
    for x in itertools.product(range(27), repeat=2):
        in_ker = not np.any((np.array(x) @ m.rows) % 27)
        assert FlatLattice(ker, 2).contains(x) == in_ker


def test_containment_exponent_and_content():
    lat = FlatLattice.span(3, 3, 2, [[9, 0], [0, 3]])
    assert lat.containment_exponent() == 2
    assert lat.content() == 1
    # p^n kills everything, so a rank-deficient lattice reports n
    assert FlatLattice.span(3, 3, 2, [[1, 0]]).containment_exponent() == 3


def test_preimage():
    target = FlatLattice.span(3, 2, 2, [[3, 0], [0, 1]])
    mat = np.array([[1, 0], [1, 1]], dtype=np.int64)
    pre = target.preimage(mat)
    for x in itertools.product(range(9), repeat=2):
        assert pre.contains(x) == target.contains((np.array(x) @ mat) % 9)


def test_closure_contains_multiples():
    def shift(v):
        # all multiples by powers of a nilpotent shift
        out = [np.asarray(v)]
        for _ in range(2):
            out.append(np.concatenate([[0], out[-1][:-1]]))
        return np.array(out)
    lat = FlatLattice.span(3, 2, 3, [[1, 0, 0]], closure=shift)
    assert lat.contains([0, 1, 0])
    for g in lat.rows:
        for w in shift(g):
            assert lat.contains(w)
