import numpy as np
import pytest
from hypothesis import given, strategies as st

from cancoord.domain import KpiSample
from cancoord.errors import DegenerateObjectiveError, ValidationError
from cancoord.utility import (
    LinearUtilityScaler,
    OptimalConfigRange,
    UtilityScale,
    UtilityTable,
    invert_for_minimization,
    normalize_linear,
    optimal_config_range,
    ranges_identical,
    utility_table,
)

from oracles import brute_force_range


def samples(values):
    return [KpiSample(float(i), float(v)) for i, v in enumerate(values)]


def test_normalize_examples():
    t = normalize_linear(samples([0, 5, 10]))
    assert t.utilities == (0.0, 0.5, 1.0)
    t = normalize_linear(samples([0, 5, 10]), UtilityScale(0, 10))
    assert t.utilities[1] == 5.0


def test_normalize_rejects_all_zero():
    with pytest.raises(DegenerateObjectiveError):
        normalize_linear(samples([0, 0]))


def test_normalize_rejects_negative():
    with pytest.raises(ValidationError):
        normalize_linear(samples([-1, 2]))


@pytest.mark.parametrize("loads,expected", [([2, 8], [6, 0]), ([5, 5], [0, 0]), ([0, 1, 3], [3, 2, 0])])
def test_invert(loads, expected):
    assert [s.objective_value for s in invert_for_minimization(samples(loads))] == expected


def test_range_examples():
    # 0.9 is below the 0.95 cutoff, so the run around the argmax is {3, 4}
    t = UtilityTable("P", (1, 2, 3, 4, 5), (0.2, 0.9, 1.0, 0.96, 0.5))
    r = optimal_config_range(t, 5)
    assert (r.min_value, r.max_value) == (3, 4)
    assert optimal_config_range(t, 10).min_value == 2
    t = UtilityTable("P", (1, 2, 3), (0.7, 0.7, 0.7))
    r = optimal_config_range(t, 5)
    assert (r.min_value, r.max_value) == (1, 3)
    t = UtilityTable("P", (1, 2, 3), (1.0, 0.1, 0.96))
    r = optimal_config_range(t, 5)
    assert (r.min_value, r.max_value) == (1, 1)


@pytest.mark.parametrize("b,same", [((62, 68), True), ((62, 67), False), ((63, 68), False)])
def test_ranges_identical(b, same):
    a = OptimalConfigRange("TXP", 62, 68, 5)
    assert ranges_identical(a, OptimalConfigRange("TXP", *b, 5)) is same


def test_ranges_identical_other_parameter():
    with pytest.raises(ValidationError):
        ranges_identical(OptimalConfigRange("TXP", 1, 2, 5), OptimalConfigRange("RET", 1, 2, 5))


def test_table_round_trip():
    t = UtilityTable("TXP", (50.0, 51.0), (0.25, 1.0))
    assert UtilityTable.from_dict(t.to_dict()) == t


def test_scaler_matches_functional_form():
    y = np.array([3.0, 7.0, 1.0, 5.0])
    for minimizing in (False, True):
        scaler = LinearUtilityScaler(0, 10, minimizing=minimizing).fit(y)
        expected = utility_table("P", range(4), y, scale=UtilityScale(0, 10), minimizing=minimizing).utilities
        np.testing.assert_allclose(scaler.transform(y), expected)
        np.testing.assert_allclose(scaler.inverse_transform(scaler.transform(y)), y)


def test_scaler_get_params():
    assert LinearUtilityScaler(hi=5).get_params() == {"lo": 0.0, "hi": 5, "minimizing": False}


objectives = st.lists(st.floats(0, 1e6, allow_nan=False), min_size=2, max_size=60).filter(lambda v: max(v) > 0)
scales = st.tuples(st.floats(0, 10), st.floats(0.01, 100)).map(lambda t: UtilityScale(t[0], t[0] + t[1]))


@given(objectives, scales, st.booleans())
def test_bounds_and_exact_max(values, scale, minimizing):
    if minimizing and max(values) == min(values):
        return
    t = utility_table("P", range(len(values)), values, scale=scale, minimizing=minimizing)
    assert all(scale.lo <= u <= scale.hi for u in t.utilities)
    assert max(t.utilities) == scale.hi


@given(objectives, st.floats(0.1, 99.9))
def test_range_matches_brute_force(values, p):
    grid = list(range(len(values)))
    t = utility_table("P", grid, values)
    r = optimal_config_range(t, p)
    assert (r.min_value, r.max_value) == brute_force_range(grid, list(t.utilities), p)
    assert r.contains(t.argmax())


@given(objectives, st.floats(0.1, 99.9), st.floats(0.1, 99.9))
def test_range_monotone_in_threshold(values, p1, p2):
    p1, p2 = sorted([p1, p2])
    t = utility_table("P", range(len(values)), values)
    r1, r2 = optimal_config_range(t, p1), optimal_config_range(t, p2)
    assert r2.min_value <= r1.min_value and r1.max_value <= r2.max_value


@given(objectives, st.floats(0.1, 99.9))
def test_range_scale_free(values, p):
    grid = range(len(values))
    a = optimal_config_range(utility_table("P", grid, values, scale=UtilityScale(0, 1)), p)
    b = optimal_config_range(utility_table("P", grid, values, scale=UtilityScale(0, 10)), p)
    assert (a.min_value, a.max_value) == (b.min_value, b.max_value)


def test_scaler_clone_and_unfitted():
    from sklearn.base import clone
    from sklearn.exceptions import NotFittedError

    scaler = clone(LinearUtilityScaler(lo=1.0, hi=3.0, minimizing=True))
    assert scaler.get_params()["lo"] == 1.0
    with pytest.raises(NotFittedError):
        scaler.transform([1.0])
