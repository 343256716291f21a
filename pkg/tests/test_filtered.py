from fractions import Fraction as Q

import numpy as np
import pytest
from hypothesis import given, strategies as st

from breuil.errors import BudgetExceeded, NonStableSubobject, ParamsMismatch, UnsupportedFiltrationDepth
from breuil.filtered import (
    BigD,
    FilteredPhiN,
    SLattice,
    assemble_DC,
    charpoly,
    check_wa,
    cyclic_sum,
    det,
    eigenlines,
    hodge_newton,
    iterate_lattice,
    nullspace,
    ramified_cycle_expected,
    ramified_cycle_module,
    ramified_cycle_ring,
    rank,
    rational_roots,
    standard_lattice,
    step_lattice,
    verify_strongly_divisible,
)
from breuil.rings import RingParams
from breuil.smodule import fil_s_times_basis, s_span

small_int_matrix = st.integers(1, 3).flatmap(
    lambda d: st.lists(st.lists(st.integers(-4, 4), min_size=d, max_size=d), min_size=d, max_size=d)
)


def _laplace(M):
    if len(M) == 1:
        return Q(M[0][0])
    return sum((-1) ** j * M[0][j] * _laplace([r[:j] + r[j + 1:] for r in M[1:]]) for j in range(len(M)))


@given(small_int_matrix)
def test_det_matches_laplace(M):
    assert det(M) == _laplace(M)


@given(small_int_matrix)
def test_nullspace_is_kernel_of_right_dimension(M):
    ns = nullspace(M)
    assert len(ns) == len(M[0]) - rank(M)
    for x in ns:
        assert all(sum(Q(a) * b for a, b in zip(row, x)) == 0 for row in M)


@given(small_int_matrix, st.integers(-3, 3))
def test_charpoly_evaluates_to_det(M, t):
    d = len(M)
    cp = charpoly(M)  # constant term first
    value = sum(c * Q(t) ** k for k, c in enumerate(cp))
    assert value == _laplace([[Q(t) * (i == j) - M[i][j] for j in range(d)] for i in range(d)])


@pytest.mark.parametrize(
    "poly,roots",
    [([0, 1], {0}), ([-2, 1], {2}), ([6, -5, 1], {2, 3}), ([-3, 0, 1], set()), ([0, 0, 1], {0}), ([1, 0, 4], set()),
     ([Q(-1, 2), 1], {Q(1, 2)})],
)
def test_rational_roots(poly, roots):
    assert set(rational_roots(poly)) == roots


# the module ------------------------------------------------------------------

def test_example_structure():
    D = ramified_cycle_module(3)
    assert D.check() == {"phi_invertible": True, "N_phi_relation": True, "flag": True, "depth_ok": True}
    assert (D.d, D.e, D.r) == (2, 5, 1)


def test_N_phi_relation_detects_violation():
    D = FilteredPhiN(3, (-3, 1), [[1, 0], [0, 3]], [[0, 1], [0, 0]])
    # N(phi e1) = N e1 = e2 but p phi(N e1) = 3 phi(e2) = 9 e2
    assert not D.check()["N_phi_relation"]
    good = FilteredPhiN(3, (-3, 1), [[3, 0], [0, 1]], [[0, 1], [0, 0]])
    assert good.check()["N_phi_relation"]


@pytest.mark.parametrize(
    "phi,fil,expected",
    [([[1]], [], (0, 0)), ([[3]], [[[1]]], (1, 1)), ([[0, 1], [3, 0]], [[[[0, 1], 1]]], (1, 1)),
     ([[1, 0], [0, 3]], [[[1, 0]]], (1, 1))],
    ids=["unit-root", "rank-one-phi-p", "ramified-cycle", "diag"],
)
def test_hodge_newton(phi, fil, expected):
    E = (-3, 0, 0, 0, 0, 1) if len(phi) == 2 and phi[0][0] == 0 else (-3, 1)
    D = FilteredPhiN(3, E, phi, [[0] * len(phi)] * len(phi), fil)
    assert hodge_newton(D) == expected


def test_weak_admissibility_of_the_example():
    rep = check_wa(ramified_cycle_module(3))
    assert rep["weakly_admissible"] and rep["subobjects"] == []


def test_eigenline_probe_catches_non_admissible_module():
    D = FilteredPhiN(3, (-3, 1), [[1, 0], [0, 3]], [[0, 0], [0, 0]], [[[1, 0]]])
    rep = check_wa(D)
    assert rep["endpoints_equal"]
    bad = [s for s in rep["subobjects"] if not s["ok"]]
    assert [(s["basis"], s["t_H"], s["t_N"]) for s in bad] == [([["1", "0"]], 1, 0)]
    assert not rep["weakly_admissible"]


def test_unstable_subobject_rejected():
    D = ramified_cycle_module(3)
    with pytest.raises(NonStableSubobject):
        check_wa(D, [[[0, 1]]])


def test_irrational_eigenvalues_give_no_probe():
    assert eigenlines(ramified_cycle_module(3)) == []


# S (x) D and its filtration ------------------------------------------------------

@pytest.fixture(scope="module")
def example():
    ring = ramified_cycle_ring(3)
    D = ramified_cycle_module(3)
    return ring, D, BigD(D, ring)


def test_bigD_checks(example):
    _, _, B = example
    assert all(B.check().values())


def test_fil1_of_the_example(example):
    ring, _, B = example
    # Fil^1 = S (u e1 + e2) + Fil^1 S . V
    v = np.zeros((2, ring.N), dtype=np.int64)
    v[0, 1] = 1
    v[1, 0] = 1
    expected = s_span(ring, 2, [v] + fil_s_times_basis(ring, 2))
    assert B.fil_level(1) == expected


def test_trivial_filtrations():
    ring = RingParams.standard(3, 2, 3, 12)
    full = BigD(FilteredPhiN(3, ring.E_coeffs, [[3]], [[0]], [[[1]]]), ring)
    assert full.fil_level(1) == standard_lattice(ring, 1).lattice
    empty = BigD(FilteredPhiN(3, ring.E_coeffs, [[1]], [[0]]), ring)
    assert empty.fil_level(1) == s_span(ring, 1, fil_s_times_basis(ring, 1))


def test_bigD_rejects_mismatched_ring():
    with pytest.raises(ParamsMismatch):
        BigD(ramified_cycle_module(3), RingParams.standard(3, 2, 3, 12))


def test_deep_filtration_rejected():
    D = FilteredPhiN(3, (-3, 1), [[9]], [[0]], [[[1]], [[1]]])
    with pytest.raises(UnsupportedFiltrationDepth):
        BigD(D, RingParams.standard(3, 1, 3, 9))


# the iteration ---------------------------------------------------------------------

@pytest.mark.parametrize(
    "phi,fil", [([[1]], []), ([[3]], [[[1]]]), ([[1, 0], [0, 1]], [])], ids=["unit-root", "phi-p", "unit-root-2"]
)
def test_trivial_fixed_points(phi, fil):
    ring = RingParams.standard(3, 1, 4, 8)
    d = len(phi)
    B = BigD(FilteredPhiN(3, ring.E_coeffs, phi, [[0] * d] * d, fil), ring)
    res = iterate_lattice(B, standard_lattice(ring, d))
    assert res.certificate() == {"i0": 0, "C": 1, "verification": True}
    assert all(verify_strongly_divisible(B, res.trace[0]).values())


@pytest.fixture(scope="module")
def cycle(example):
    ring, D, B = example
    return iterate_lattice(B, standard_lattice(ring, 2))


def test_example_cycle(example, cycle):
    ring, _, _ = example
    exp = ramified_cycle_expected(ring)
    assert (cycle.i0, cycle.C) == (2, 2)
    assert [cycle.trace[k] for k in (1, 2, 3, 4)] == [exp["N1"], exp["N2"], exp["N3"], exp["N2"]]
    assert all(cycle.n_stable)


def test_rerun_from_the_cycle_reproduces_it(example, cycle):
    _, _, B = example
    again = iterate_lattice(B, cycle.trace[cycle.i0])
    assert (again.i0, again.C) == (0, 2)
    assert again.trace[1] == cycle.trace[cycle.i0 + 1]


def test_trace_is_sandwiched(cycle):
    # p V ⊂ N_i ⊂ p^{-1} V along the whole trace
    for L in cycle.trace:
        assert L.b <= 1
        assert L.lattice.containment_exponent() <= L.b + 1


def test_records_are_deterministic(cycle):
    recs = cycle.records()
    assert [r["step"] for r in recs] == list(range(5))
    assert recs[2]["normal_form_hash"] == recs[4]["normal_form_hash"]
    assert recs[1]["denominator_exponent"] == 1


def test_budget(example):
    ring, _, B = example
    with pytest.raises(BudgetExceeded) as info:
        iterate_lattice(B, standard_lattice(ring, 2), budget=2)
    assert len(info.value.partial) == 3


def test_pseudo_sum_and_verdict(example, cycle):
    ring, _, B = example
    exp = ramified_cycle_expected(ring)
    pseudo = cycle.trace[2] + cycle.trace[3]
    assert pseudo == exp["pseudo"]
    rep = verify_strongly_divisible(B, pseudo)
    assert not rep["free"] and rep["generators"] == 3
    assert rep["phi_stable"] and rep["N_stable"]


def test_cyclic_sum_shape():
    D2 = cyclic_sum(ramified_cycle_module(3), 2)
    assert D2.d == 4 and D2.r == 1
    assert all(D2.check().values())
    # phi on D^(2) swaps the copies, so phi^2 is phi_D^2 = p on each copy
    P = np.array(D2.phi, dtype=object)
    assert (P @ P).tolist() == (3 * np.eye(4, dtype=int)).tolist()


def test_cycle_lattice_is_strongly_divisible(example, cycle):
    ring, D, _ = example
    BC, L = assemble_DC(D, ring, cycle.cycle())
    rep = verify_strongly_divisible(BC, L)
    assert rep["strongly_divisible"] and rep["generators"] == 4


def test_slattice_sum_is_commutative(cycle):
    a, b = cycle.trace[1], cycle.trace[2]
    assert a + b == b + a
    assert (a + a) == a
    assert isinstance(a + b, SLattice)


def test_step_is_deterministic(example, cycle):
    _, _, B = example
    assert step_lattice(B, cycle.trace[1]) == cycle.trace[2]
