import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from breuil.algebra import (
    OKArith,
    build_algebra_closed,
    build_algebra_general,
    closed_form_eligible,
    lift_G,
)
from breuil.errors import NotClosedFormEligible
from breuil.rings import RingParams
from breuil.tilde import AdaptedData, random_invertible
from breuil.torsion import T_functor, standard_S1


def _ring(p: int, e: int) -> RingParams:
    return RingParams.standard(p, e, 2, e * p)


def _polymod(a: list, b: list, E: tuple, mod: int) -> list:
    """Schoolbook product in Z[pi]/(E), coefficients mod ``mod``."""
    e = len(E) - 1
    c = [0] * (2 * e)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            c[i + j] += x * y
    for k in range(len(c) - 1, e - 1, -1):
        t, c[k] = c[k], 0
        for j in range(e):
            c[k - e + j] -= t * E[j]
    return [x % mod for x in c[:e]]


@pytest.mark.parametrize("p,E", [(3, (-3, 1)), (3, (-3, 0, 1)), (5, (-5, 0, 0, 1)), (3, (-3, 3, 1))])
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_ok_arithmetic(p, E, seed):
    rnd = random.Random(seed)
    ok = OKArith(p, E, 6)
    a = ok.make([rnd.randrange(ok.mod) for _ in range(ok.e)])
    b = ok.make([rnd.randrange(ok.mod) for _ in range(ok.e)])
    assert ok.mul(a, b) == ok.make(_polymod(list(a), list(b), E, ok.mod))
    unit = ok.add(ok.one, ok.mul(ok.pi_power(1), a))
    assert ok.mul(unit, ok.inverse(unit)) == ok.one
    assert ok.divide_by_pi(ok.mul(ok.pi_power(1), a)) == ok.truncate_to(a, ok.K - 1)


@pytest.mark.parametrize("k", range(6))
def test_pi_power_valuation(k):
    ok = OKArith(3, (-3, 0, 1), 8)
    assert ok.valuation(ok.pi_power(k)) == k


@pytest.mark.parametrize(
    "index,expected",
    [(0, "R = O_K[X1]/(X1^3 + pi^0/F(pi) * ((-1)*X1))"), (1, "R = O_K[X1]/(X1^3 + pi^2/F(pi) * ((-1)*X1))")],
    ids=["S1(0)", "S1(1)"],
)
def test_rank_one_closed_forms(index, expected):
    ring = _ring(3, 2)
    m = T_functor(standard_S1(ring, ring.e if index == 0 else 0))
    P = build_algebra_closed(m, ring)
    assert P.to_text().splitlines()[1] == expected
    assert P.rank_check() and P.regular_mod_pi() and P.A_invertible()
    assert P.unit_pattern() == [index == 0]
    assert build_algebra_general(m, ring).f == P.f


def _eligible(p: int, e: int, d: int, rnd: random.Random) -> AdaptedData:
    G = random_invertible(p, e * p, d, rnd)
    G[:, :, [k for k in range(e * p) if k % p]] = 0
    return AdaptedData(None, tuple(rnd.randint(0, e) for _ in range(d)), G)


@pytest.mark.parametrize("p,e", [(3, 1), (3, 2), (5, 1), (5, 2)])
@settings(max_examples=6, deadline=None)
@given(seed=st.integers(0, 10**6), d=st.integers(1, 3))
def test_general_builder_agrees_with_closed_form(p, e, seed, d):
    data = _eligible(p, e, d, random.Random(seed))
    ring = _ring(p, e)
    closed = build_algebra_closed(data, ring)
    general = build_algebra_general(data, ring)
    assert general.f == closed.f == [{} for _ in range(d)]
    assert general.A == closed.A


def test_ineligible_input_rejected():
    ring = _ring(3, 2)
    G = np.zeros((1, 1, 6), dtype=np.int64)
    G[0, 0, :2] = 1  # 1 + u
    assert not closed_form_eligible(G, 3)
    with pytest.raises(NotClosedFormEligible):
        build_algebra_closed(AdaptedData(None, (1,), G), ring)


def _truncated(P, K: int) -> list:
    out = []
    for f in P.f:
        g = {m: P.ok.truncate_to(c, K) for m, c in f.items()}
        out.append({m: c for m, c in g.items() if any(c)})
    return out


@pytest.mark.parametrize("r", [0, 1, 2])
def test_corrections_for_G_one_plus_u(r):
    ring = _ring(3, 2)
    G = np.zeros((1, 1, 6), dtype=np.int64)
    G[0, 0, :2] = 1
    data = AdaptedData(None, (r,), G)
    P = build_algebra_general(data, ring)
    assert not P.closed_form and any(P.f)
    assert P.rank_check() and P.regular_mod_pi()
    # raising the pi-adic precision does not change the known digits
    Q = build_algebra_general(data, ring, K=P.K + 3)
    assert _truncated(Q, P.K - 1) == _truncated(P, P.K - 1)


@pytest.mark.parametrize("seed", range(3))
def test_random_ineligible_rank_two(seed):
    rnd = random.Random(seed)
    ring = _ring(3, 2)
    G = random_invertible(3, 6, 2, rnd, density=0.3)
    data = AdaptedData(None, (rnd.randint(0, 2), rnd.randint(0, 2)), G)
    P = build_algebra_general(data, ring)
    assert P.rank_check() and P.regular_mod_pi() and P.A_invertible()
    Q = build_algebra_general(data, ring, K=P.K + 3)
    assert _truncated(Q, P.K - 1) == _truncated(P, P.K - 1)


def test_digit_lift_is_centered():
    ok = OKArith(3, (-3, 0, 1), 7)
    G = np.array([[[2, 0, 0, 1, 0, 0]]])  # 2 + u^3 -> -1 + pi
    A = lift_G(ok, G)[0]
    assert ok.signed_str(A[0][0]) == ok.signed_str(ok.add(ok.neg(ok.one), ok.pi_power(1)))


def test_json_is_deterministic():
    ring = _ring(3, 2)
    m = T_functor(standard_S1(ring, ring.e))
    assert build_algebra_closed(m, ring).dumps() == build_algebra_closed(m, ring).dumps()
