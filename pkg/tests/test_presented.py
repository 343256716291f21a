import random

import pytest
from hypothesis import given, settings, strategies as st

from breuil.presented import counterexample_extension_check, counterexample_module, fi_block_module
from breuil.rings import RingParams
from breuil.strong import random_strongly_divisible

RINGS = [RingParams.standard(3, 1, 3, 4), RingParams.standard(3, 2, 3, 8), RingParams.standard(5, 1, 3, 6)]


def _fi_module(ring: RingParams, levels, seed: int):
    rnd = random.Random(seed)
    blocks = []
    for level in levels:
        M = random_strongly_divisible(ring, 1, rnd)
        blocks.append((level, M.d1, M.G))
    return fi_block_module(ring, blocks)


@pytest.mark.parametrize("ring", RINGS, ids=str)
@settings(max_examples=6, deadline=None)
@given(seed=st.integers(0, 10**6), levels=st.lists(st.integers(1, 2), min_size=1, max_size=3))
def test_fi_sums_have_the_expected_shape(ring, seed, levels):
    m = _fi_module(ring, levels, seed)
    assert m.is_object()
    assert m.fi_shape() == tuple(sorted(levels, reverse=True))
    assert m.exponent() == max(levels)


@pytest.mark.parametrize("ring", RINGS, ids=str)
@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 10**6), levels=st.lists(st.integers(1, 2), min_size=1, max_size=2))
def test_fil_meets_p_power_multiples(ring, seed, levels):
    # p^r Fil^1 M = Fil^1 M ∩ p^r M for FI objects
    m = _fi_module(ring, levels, seed)
    assert all(m.filtration_saturation().values())


@pytest.mark.parametrize("ring", RINGS, ids=str)
def test_torsion_and_quotients(ring):
    m = _fi_module(ring, [2, 1], 11)
    assert m.exact_sequence_holds(1)
    ker, quo, mult = m.kernel_pr(1), m.quotient_pr(1), m.multiply_pr(1)
    for obj in (ker, quo, mult):
        assert obj.is_object()
        assert obj.exponent() == 1
    assert ker.fi_shape() == (1, 1)
    assert quo.fi_shape() == (1, 1)
    assert mult.fi_shape() == (1,)


@pytest.mark.parametrize("p", [3, 5])
def test_counterexample_is_not_fi(p):
    ring = RingParams.standard(p, p - 1, 3, p * (p - 1))
    m = counterexample_module(ring)
    assert m.is_object()
    assert m.exponent() == 2
    assert m.fi_shape() is None
    assert not m.is_fi()
    ext = counterexample_extension_check(m)
    assert ext == {
        "sub_is_object": True, "sub_killed_by_p": True, "sub_shape": (1,),
        "quotient_is_object": True, "quotient_killed_by_p": True, "quotient_shape": (1,),
        "sizes_add_up": True,
    }
