import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resilient_gne.robust_agg import SELF, TrimError, sanitize, trim_coordinate, trim_vector, trimmed_mean


def test_trim_drops_both_extremes():
    value, kept = trim_coordinate(3.0, list(enumerate([1.0, 2.0, 4.0, 5.0, 100.0])), 1)
    assert value == pytest.approx(3.5)
    assert kept == {1, 2, 3, SELF}


def test_huge_outlier_discarded():
    value, kept = trim_coordinate(0.0, list(enumerate([0.0, 0.0, 0.0, 0.0, 1e9])), 1)
    assert value == 0.0
    # ties at 0 are broken by sender id, so sender 0 is the one trimmed from below
    assert kept == {1, 2, 3, SELF}


@pytest.mark.parametrize("b", [0, 1, 2])
def test_constant_input(b):
    value, _ = trim_coordinate(7.25, [(k, 7.25) for k in range(2 * b + 1)], b)
    assert value == 7.25


def test_too_few_neighbors():
    with pytest.raises(TrimError, match="2b\\+1 = 5"):
        trim_coordinate(0.0, [(0, 1.0), (1, 2.0), (2, 3.0)], 2)


def test_zero_budget_allows_no_neighbors():
    value, kept = trim_coordinate(4.0, [], 0)
    assert value == 4.0 and kept == {SELF}


def test_vector_with_one_coordinate_matches_scalar():
    nb = [(k, np.array([v])) for k, v in enumerate([1.0, 2.0, 4.0, 5.0, 100.0])]
    out, kept = trim_vector(np.array([3.0]), nb, 1)
    assert out[0] == pytest.approx(3.5) and kept[0] == {1, 2, 3, SELF}


def test_kept_sets_differ_across_coordinates():
    # sender "a" is extreme in coordinate 0, sender "b" in coordinate 1
    nb = [("a", np.array([100.0, 0.0])), ("b", np.array([0.0, 100.0])),
          ("c", np.array([1.0, 1.0])), ("d", np.array([2.0, 2.0])), ("e", np.array([-5.0, -5.0]))]
    out, kept = trim_vector(np.zeros(2), nb, 1)
    assert kept[0] == {"b", "c", "d", SELF}
    assert kept[1] == {"a", "c", "d", SELF}
    np.testing.assert_allclose(out, [3.0 / 4, 3.0 / 4])


def test_identical_vectors():
    v = np.array([1.5, -2.0, 3.0])
    out, _ = trim_vector(v, [(k, v.copy()) for k in range(4)], 1)
    np.testing.assert_array_equal(out, v)


def test_vector_dimension_mismatch():
    with pytest.raises(TrimError, match="dim"):
        trim_vector(np.zeros(2), [(0, np.zeros(3))], 0)


def test_array_form_matches_reference():
    rng = np.random.default_rng(0)
    for _ in range(50):
        k, b = int(rng.integers(3, 9)), int(rng.integers(0, 2))
        self_v, stacked = rng.normal(size=(2, 3)), rng.normal(size=(k, 2, 3))
        out = trimmed_mean(self_v, stacked, b)
        for r in range(2):
            for c in range(3):
                ref, _ = trim_coordinate(self_v[r, c], list(enumerate(stacked[:, r, c])), b)
                assert out[r, c] == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_sanitize_replaces_non_finite():
    np.testing.assert_array_equal(sanitize(np.array([np.nan, np.inf, -np.inf, 1.0])), [1e300, 1e300, -1e300, 1.0])


# properties --------------------------------------------------------------------

finite = st.floats(-1e6, 1e6, allow_nan=False)
wild = st.one_of(st.floats(-1e300, 1e300, allow_nan=False), st.sampled_from([np.inf, -np.inf, np.nan]))


@st.composite
def adversarial_case(draw):
    b = draw(st.integers(0, 3))
    n_adv = draw(st.integers(0, b))
    n_honest = draw(st.integers(max(1, 2 * b + 1 - n_adv), 2 * b + 6))
    honest = draw(st.lists(finite, min_size=n_honest, max_size=n_honest))
    adv = draw(st.lists(wild, min_size=n_adv, max_size=n_adv))
    order = draw(st.permutations(range(n_honest + n_adv)))
    self_v = draw(finite)
    return b, self_v, honest, adv, order


@settings(max_examples=1000, deadline=None)
@given(adversarial_case())
def test_output_within_honest_hull(case):
    b, self_v, honest, adv, order = case
    values = sanitize(np.array(honest + adv))[list(order)]
    out = trimmed_mean(np.array(self_v), values, b)
    lo, hi = min(honest + [self_v]), max(honest + [self_v])
    slack = 1e-9 * max(1.0, abs(lo), abs(hi))
    assert lo - slack <= float(out) <= hi + slack


@settings(max_examples=200)
@given(st.lists(finite, min_size=3, max_size=9), finite, st.randoms())
def test_permutation_invariance(values, self_v, rnd):
    b = (len(values) - 1) // 2
    shuffled = values[:]
    rnd.shuffle(shuffled)
    a, _ = trim_coordinate(self_v, list(enumerate(values)), b)
    c, _ = trim_coordinate(self_v, list(enumerate(shuffled)), b)
    assert a == pytest.approx(c, rel=1e-12, abs=1e-9)


@settings(max_examples=200)
@given(st.lists(finite, min_size=0, max_size=8), finite)
def test_zero_budget_is_plain_mean(values, self_v):
    value, _ = trim_coordinate(self_v, list(enumerate(values)), 0)
    assert value == pytest.approx((sum(values) + self_v) / (len(values) + 1), rel=1e-12, abs=1e-9)


@settings(max_examples=200)
@given(st.integers(0, 3).flatmap(lambda b: st.tuples(st.just(b), st.lists(finite, min_size=2 * b + 1, max_size=2 * b + 7))))
def test_kept_count(case):
    b, values = case
    _, kept = trim_coordinate(0.0, list(enumerate(values)), b)
    assert len(kept) == len(values) - 2 * b + 1
