from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blankopt.geometry import RI_BOUNDS, RegionChoices, build_contour, validate_design
from blankopt.sampling import (
    SamplingPlan,
    allocate,
    generate_splits,
    lhs,
    rd_ids,
    ri_ids,
    sample_designs,
)


def _one_per_bin(u: np.ndarray) -> bool:
    n = len(u)
    bins = np.floor(u * n).astype(int)
    return all(sorted(bins[:, k]) == list(range(n)) for k in range(u.shape[1]))


@given(n=st.integers(1, 60), d=st.integers(1, 8), seed=st.integers(0, 2**31))
def test_lhs_has_one_point_per_bin(n, d, seed):
    u = lhs(n, d, seed)
    assert u.shape == (n, d)
    assert np.all((u >= 0) & (u < 1))
    assert _one_per_bin(u)


def test_lhs_is_seeded():
    assert np.array_equal(lhs(10, 3, 4), lhs(10, 3, 4))
    assert not np.array_equal(lhs(10, 3, 4), lhs(10, 3, 5))


def test_lhs_rejects_empty():
    with pytest.raises(ValueError):
        lhs(0, 3, 1)


def test_lhs_marginals_are_uniform():
    # pooled over many draws, within-bin positions are uniform
    u = np.concatenate([lhs(8, 1, s)[:, 0] for s in range(400)])
    frac = u * 8 - np.floor(u * 8)
    hist, _ = np.histogram(frac, bins=4, range=(0, 1))
    assert np.all(np.abs(hist / len(frac) - 0.25) < 0.03)


def test_allocate_round_robin():
    c = allocate(37)
    counts = Counter(x.bits for x in c)
    assert len(counts) == 16
    assert sorted(counts.values()) == [2] * 11 + [3] * 5


def test_allocate_unstratified_is_seeded():
    a = [c.bits for c in allocate(50, False, 3)]
    assert a == [c.bits for c in allocate(50, False, 3)]
    assert len(set(a)) > 4


def test_ids():
    c = RegionChoices()
    assert ri_ids(c) == ["P0", "P1", "P8", "P15", "P24"]
    assert rd_ids(c) == ["P2", "P9", "P16", "P25"]


@pytest.fixture(scope="module")
def designs(ref):
    return sample_designs(64, 7, ref)


def test_designs_are_feasible(ref, designs):
    for d in designs:
        assert validate_design(d, ref) == []
        build_contour(d, ref)


def test_designs_are_stratified(designs):
    counts = Counter(d.choices.bits for d in designs)
    assert len(counts) == 16 and set(counts.values()) == {4}


def test_p0_is_latin(designs):
    lo, hi = RI_BOUNDS["P0"]
    u = np.array([[(d.params["P0"] - lo) / (hi - lo)] for d in designs])
    assert _one_per_bin(u)


def test_sampling_is_reproducible(ref, designs):
    again = sample_designs(64, 7, ref)
    assert [d.params for d in again] == [d.params for d in designs]


def test_splits_are_independent(ref):
    plan = SamplingPlan(n_train=16, n_test=16)
    train, test, extra = generate_splits(plan, ref)
    assert len(train) == len(test) == 16 and extra == []
    assert {d.params["P0"] for d in train}.isdisjoint(d.params["P0"] for d in test)


def test_splits_reject_shared_seeds(ref):
    with pytest.raises(ValueError, match="seeds must differ"):
        generate_splits(SamplingPlan(seed_train=3, seed_test=3), ref)


def test_plan_from_config(config):
    plan = SamplingPlan.from_config(config)
    assert plan.n_train >= 16 and plan.n_test >= 16
    assert len({plan.seed_train, plan.seed_test, plan.seed_extra}) == 3
