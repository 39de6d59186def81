import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from byzpg.conformance import aggregation_trials, c_ra
from byzpg.errors import ConfigurationError
from byzpg.robust_agg import AggregatorConfig, bucketize, ceil_count, krum, krum_scores, rfa, robust_aggregate


def test_krum_identical_inputs():
    v = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(krum(np.tile(v, (5, 1)), 0.2), v)


def test_krum_hand_scores():
    x = np.array([[0.0], [0.0], [0.0], [100.0]])
    # m = ceil(0.75 * 4) = 3 nearest (self included): zeros score 0, the outlier 0 + 2 * 100^2
    np.testing.assert_array_equal(krum_scores(x, 0.25), [0.0, 0.0, 0.0, 20000.0])
    assert krum(x, 0.25)[0] == 0.0


def test_krum_tie_goes_to_first_input():
    x = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert np.array_equal(krum(x, 0.0), x[0])


def test_rfa_examples():
    v = np.array([0.5, 0.25])
    assert np.array_equal(rfa(np.tile(v, (4, 1))), v)
    square = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    assert np.linalg.norm(rfa(square)) < 1e-6
    assert abs(rfa(np.array([[0.0], [0.0], [0.0], [10.0]]))[0]) < 1e-3


def test_rfa_agrees_with_grid_search_in_one_dimension():
    x = np.array([[0.0], [0.4], [1.0], [7.0], [9.0]])
    grid = np.linspace(-1, 10, 110_001)
    obj = np.abs(grid[:, None] - x[:, 0]).sum(axis=1)
    assert abs(rfa(x)[0] - grid[np.argmin(obj)]) < 1e-3


def test_bucketize_examples():
    x = np.arange(12.0).reshape(6, 2)
    ident = bucketize(x, 1, np.random.default_rng(0))
    assert sorted(map(tuple, ident)) == sorted(map(tuple, x))
    np.testing.assert_allclose(bucketize(x, 6, np.random.default_rng(0)), [x.mean(axis=0)])
    cfg = AggregatorConfig("bucketed_rfa", alpha=1 / 8, alpha_max=0.25)
    assert cfg.bucket_size == 2
    assert len(bucketize(x, cfg.bucket_size, np.random.default_rng(0))) == 3
    assert len(bucketize(x[:5], 2, np.random.default_rng(0))) == 3  # last bucket smaller


def test_bucketed_krum_with_bucket_size_one_is_krum():
    cfg = AggregatorConfig("bucketed_krum", alpha=0.2, alpha_max=0.25)
    assert cfg.bucket_size == 1
    x = np.random.default_rng(1).normal(size=(10, 3))
    out = robust_aggregate(x, cfg, np.random.default_rng(0))
    assert any(np.array_equal(out, row) for row in x)
    assert np.array_equal(out, krum(x, 0.2))


def test_mean_kind_and_zero_alpha_bucketing_are_the_mean():
    x = np.random.default_rng(2).normal(size=(7, 4))
    np.testing.assert_array_equal(robust_aggregate(x, AggregatorConfig("mean")), x.mean(axis=0))
    out = robust_aggregate(x, AggregatorConfig("bucketed_rfa", alpha=0.0), np.random.default_rng(0))
    np.testing.assert_allclose(out, x.mean(axis=0), atol=1e-12)


def test_single_input_is_copied_exactly():
    x = np.array([[0.1, 0.2]])
    for kind in ("krum", "rfa", "bucketed_krum", "bucketed_rfa", "mean"):
        out = robust_aggregate(x, AggregatorConfig(kind, 0.1), np.random.default_rng(0))
        assert np.array_equal(out, x[0]) and out is not x[0]


@pytest.mark.parametrize("kw", [dict(kind="median"), dict(alpha=0.3, alpha_max=0.25), dict(alpha=-0.1),
                                dict(weiszfeld_smoothing=0.0)])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        AggregatorConfig(**kw)


def test_bucketed_kinds_need_a_stream():
    with pytest.raises(ConfigurationError):
        robust_aggregate(np.zeros((3, 2)), AggregatorConfig("bucketed_rfa", 0.1))


def test_ceil_count_ignores_float_noise():
    assert (1 - 0.7) * 10 != 3.0
    assert ceil_count((1 - 0.7) * 10) == 3


finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (6, 3), elements=finite), arrays(np.float64, 3, elements=finite),
       st.sampled_from(["krum", "rfa", "bucketed_krum", "bucketed_rfa", "mean"]))
def test_translation_equivariance(x, c, kind):
    cfg = AggregatorConfig(kind, alpha=1 / 6)
    a = robust_aggregate(x + c, cfg, np.random.default_rng(5))
    b = robust_aggregate(x, cfg, np.random.default_rng(5)) + c
    assert np.max(np.abs(a - b)) <= 1e-9 * (1 + np.max(np.abs(x)) + np.max(np.abs(c)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (7, 2), elements=finite, unique=True), st.randoms(use_true_random=False))
def test_permutation_invariance_of_unbucketed_kinds(x, rnd):
    perm = list(range(7))
    rnd.shuffle(perm)
    # krum ties are broken by index, so compare the selected value only when scores are distinct
    scores = krum_scores(x, 1 / 7)
    if np.sum(scores == scores.min()) == 1:
        assert np.array_equal(krum(x[perm], 1 / 7), krum(x, 1 / 7))
    np.testing.assert_allclose(rfa(x[perm]), rfa(x), atol=1e-7 * (1 + np.abs(x).max()))


def test_byzantine_inputs_cannot_move_bucketed_rfa_off_identical_honest_inputs():
    cfg = AggregatorConfig("bucketed_rfa", alpha=2 / 12, alpha_max=0.25)
    err, _ = aggregation_trials(cfg, 12, 2, offset=1e3, trials=1000, zero_variance=True)
    assert err.max() <= 1e-18


def test_half_alpha_max_bucketing_breaks_down_at_two_of_twelve():
    """Buckets of three leave 2 of 4 buckets corrupted: the geometric median's breakdown point."""
    cfg = AggregatorConfig("bucketed_rfa", alpha=2 / 12, alpha_max=0.5)
    assert cfg.bucket_size == 3
    small = c_ra(*aggregation_trials(cfg, 12, 2, 10.0, trials=200))
    large = c_ra(*aggregation_trials(cfg, 12, 2, 1000.0, trials=200))
    assert large > 100 * small
