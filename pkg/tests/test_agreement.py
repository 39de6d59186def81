import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from byzpg.adversary import Adversary, AdversaryConfig
from byzpg.agreement import AgreementConfig, avg_agree_round, diameter, gda_select, mda_select, run_agreement
from byzpg.conformance import agreement_suite
from byzpg.errors import ConfigurationError


def col(*v):
    return np.array(v, dtype=float)[:, None]


def test_mda_examples():
    assert mda_select(np.zeros((5, 2)), 3).tolist() == [0, 1, 2]
    assert mda_select(col(0, 0.1, 0.2, 50), 3).tolist() == [0, 1, 2]
    x = col(0, 1, 2, 3, 10)
    idx = mda_select(x, 3)
    assert idx.tolist() == [0, 1, 2] and diameter(x[idx]) == 2.0


def test_mda_matches_brute_force():
    from itertools import combinations

    x = np.random.default_rng(0).normal(size=(7, 3))
    best = min(combinations(range(7), 5), key=lambda s: (diameter(x[list(s)]), s))
    assert mda_select(x, 5).tolist() == list(best)


def test_mda_cap_points_to_gda():
    with pytest.raises(ConfigurationError, match="gda"):
        mda_select(np.zeros((30, 1)), 15, cap=1000)


def test_gda_examples():
    x = col(0, 1, 2, 3, 10)
    assert gda_select(x, np.array([2.4]), 3).tolist() == [2, 3, 1]
    assert gda_select(np.zeros((4, 2)), np.ones(2), 3).tolist() == [0, 1, 2]
    far = np.array([[0.0], [5.0], [-5.0], [9.0]])
    assert gda_select(far, np.array([5.0]), 1).tolist() == [1]


def test_round_full_average_and_fixed_point():
    cfg = AgreementConfig("mda", 1, 0.0)
    box = col(0, 1)
    assert avg_agree_round(box[0], box, cfg)[0] == 0.5 == avg_agree_round(box[1], box, cfg)[0]
    same = np.tile([1.5, -2.0], (4, 1))
    adv = Adversary(AdversaryConfig(), 4, 0)
    out = run_agreement(same, np.zeros(4, bool), adv, AgreementConfig("mda", 3, 0.1))
    assert np.array_equal(out, same)


def test_zero_rounds_is_identity():
    x = np.random.default_rng(1).normal(size=(5, 2))
    adv = Adversary(AdversaryConfig("large_noise", 1), 5, 0)
    byz = adv.byzantine_mask(0)
    assert np.array_equal(run_agreement(x, byz, adv, AgreementConfig("mda", 0, 0.22)), x)


@pytest.mark.parametrize("kw", [dict(kind="mda", alpha_bar=0.25), dict(kind="gda", alpha_bar=0.2),
                                dict(kind="avg"), dict(rounds=-1)])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        AgreementConfig(**kw)


def test_subset_size():
    assert AgreementConfig("mda", 1, 1 / 7 + 1 / 14).subset_size(7) == 6
    assert AgreementConfig("mda", 1, 1 / 14).subset_size(7) == 7


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 3), elements=st.floats(-10, 10)), st.sampled_from(["mda", "gda"]))
def test_output_in_hull_of_selected_subset(x, kind):
    cfg = AgreementConfig(kind, 1, 0.2 if kind == "mda" else 0.19)
    m = cfg.subset_size(6)
    out = avg_agree_round(x[0], x, cfg)
    idx = mda_select(x, m) if kind == "mda" else gda_select(x, x[0], m)
    np.testing.assert_allclose(out, x[np.sort(idx)].mean(axis=0), atol=1e-12)
    sel = x[idx]
    assert np.all(out >= sel.min(axis=0) - 1e-12) and np.all(out <= sel.max(axis=0) + 1e-12)


def test_byzantine_rows_are_left_out_when_far():
    x = np.vstack([np.random.default_rng(2).normal(size=(6, 2)), np.zeros((1, 2))])
    adv = Adversary(AdversaryConfig("avg_zero", 1), 7, 3)
    byz = adv.byzantine_mask(0)
    x[byz] = 0.0
    x[~byz] += 100.0  # honest cluster far from the origin, so the avg_zero parameter row is an outlier
    out = run_agreement(x, byz, adv, AgreementConfig("mda", 1, 1 / 7 + 1 / 14))
    np.testing.assert_allclose(out[~byz], np.tile(x[~byz].mean(axis=0), (6, 1)), atol=1e-12)


def test_mda_contracts_on_adversarial_trials():
    rep = agreement_suite(kinds=("mda",), trials=200)
    assert rep.passed, rep.lines()


def test_no_byzantines_contraction_is_trivial():
    rep = agreement_suite(K=7, f=0, trials=100)
    assert rep.passed, rep.lines()
