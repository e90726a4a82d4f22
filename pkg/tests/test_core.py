import numpy as np
import pytest

from camrefine.core import (
    ActivationMap,
    InvalidMap,
    map_stats,
    normalize_minmax,
    quantile,
)


def test_normalize_affine():
    m = normalize_minmax(ActivationMap([[0, 2], [4, 8]]))
    assert m.values.tolist() == [[0.0, 0.25], [0.5, 1.0]]
    assert m.normalized


def test_normalize_all_zero():
    m = normalize_minmax(ActivationMap(np.zeros((3, 3))))
    assert not m.values.any()
    assert m.normalized


def test_normalize_constant_nonzero_becomes_ones():
    # forced by the constant-map rule: direct evaluation of the convention
    m = normalize_minmax(ActivationMap(np.full((2, 2), 0.7)))
    assert (m.values == 1.0).all()


def test_normalize_idempotent_bit_exact(rng):
    for _ in range(50):
        m = ActivationMap(rng.random((9, 7)) * rng.uniform(0.1, 40))
        once = normalize_minmax(m)
        twice = normalize_minmax(once)
        assert np.array_equal(once.values, twice.values)


def test_rejects_nonfinite_and_negative():
    with pytest.raises(InvalidMap):
        ActivationMap([[0.0, np.nan]])
    with pytest.raises(InvalidMap):
        ActivationMap([[0.0, np.inf]])
    with pytest.raises(InvalidMap):
        ActivationMap([[-0.1, 0.0]])


def test_rejects_empty_or_wrong_rank():
    with pytest.raises(InvalidMap):
        ActivationMap(np.zeros((0, 3)))
    with pytest.raises(InvalidMap):
        ActivationMap(np.zeros(4))


def test_values_immutable():
    m = ActivationMap([[1.0, 2.0]])
    with pytest.raises(ValueError):
        m.values[0, 0] = 5.0


def test_quantile_linear_interpolation():
    m = ActivationMap([[0.0, 0.2], [0.5, 1.0]])
    # sorted index 0.6 * 3 = 1.8 -> 0.2 + 0.8 * (0.5 - 0.2)
    assert quantile(m, 0.60) == pytest.approx(0.44, abs=1e-12)


def test_quantile_endpoints_are_min_max(rng):
    for _ in range(25):
        m = ActivationMap(rng.random((6, 5)))
        assert quantile(m, 0.0) == m.values.min()
        assert quantile(m, 1.0) == m.values.max()


def test_quantile_against_sort_oracle(rng):
    # independent oracle: manual interpolation between closest ranks
    for _ in range(50):
        vals = rng.random(rng.integers(2, 40))
        q = rng.random()
        s = np.sort(vals)
        pos = q * (s.size - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, s.size - 1)
        want = s[lo] + (pos - lo) * (s[hi] - s[lo])
        got = quantile(ActivationMap(vals.reshape(1, -1)), q)
        assert got == pytest.approx(want, abs=1e-12)


def test_map_stats_basic():
    s = map_stats(ActivationMap([[0.0, 0.2], [0.5, 1.0]]))
    assert s.median_nonzero == pytest.approx(0.5)
    assert s.max == 1.0
    assert s.mean_nonzero == pytest.approx((0.2 + 0.5 + 1.0) / 3)


def test_map_stats_population_std_and_skew(rng):
    vals = rng.random((8, 8))
    s = map_stats(ActivationMap(vals))
    assert s.std == pytest.approx(np.sqrt(np.mean((vals - vals.mean()) ** 2)), abs=1e-14)
    centered = vals - vals.mean()
    want_skew = np.mean(centered**3) / np.mean(centered**2) ** 1.5
    assert s.skewness == pytest.approx(want_skew, rel=1e-10)


def test_map_stats_constant_conventions():
    s = map_stats(ActivationMap(np.full((4, 4), 0.3)))
    assert s.std == 0.0
    assert s.skewness == 0.0  # zero-variance convention
    z = map_stats(ActivationMap(np.zeros((4, 4))))
    assert z.median_nonzero == 0.0
    assert z.mean_nonzero == 0.0
