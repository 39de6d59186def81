import numpy as np
import pytest

from byzpg.adversary import Adversary, AdversaryConfig
from byzpg.errors import ConfigurationError


def test_no_byzantines_means_identical_mailboxes():
    adv = Adversary(AdversaryConfig("avg_zero", 0), 4, 0)
    assert adv.select_byzantine_set(3).size == 0
    x = np.random.default_rng(0).normal(size=(4, 3))
    boxes = adv.build_mailboxes(x, adv.byzantine_mask(0), np.arange(4), 0)
    assert boxes.shared and all(np.array_equal(boxes.for_recipient(k), x) for k in range(4))


def test_static_selection_is_fixed():
    adv = Adversary(AdversaryConfig("none", 3, "static"), 13, 9)
    first = adv.select_byzantine_set(0)
    assert len(first) == 3
    assert all(np.array_equal(adv.select_byzantine_set(t), first) for t in range(50))


def test_per_round_inclusion_frequency():
    K, f, T = 10, 2, 10_000
    adv = Adversary(AdversaryConfig("none", f, "per_round"), K, 1)
    counts = np.zeros(K)
    for t in range(T):
        counts[adv.select_byzantine_set(t)] += 1
    p = f / K
    assert np.all(np.abs(counts / T - p) <= 3 * np.sqrt(p * (1 - p) / T))


def test_eligible_restricts_the_set():
    adv = Adversary(AdversaryConfig("none", 4, "per_round"), 6, 2, eligible=np.arange(1, 6))
    assert all(0 not in adv.select_byzantine_set(t) for t in range(200))
    with pytest.raises(ConfigurationError):
        Adversary(AdversaryConfig("none", 6), 6, 0, eligible=np.arange(1, 6))


def test_avg_zero_hand_example():
    payloads = np.array([[1.0], [3.0], [0.0]])
    byz = np.array([False, False, True])
    adv = Adversary(AdversaryConfig("avg_zero", 1), 3, 0)
    b = adv.attack_gradient(payloads, byz, recipient=0, sender=2, t=0)
    assert b[0] == -4.0
    box = adv.build_mailboxes(payloads, byz, np.array([0, 1]), 0)
    assert box.for_recipient(1).mean() == 0.0


def test_avg_zero_sums_to_zero_every_round():
    adv = Adversary(AdversaryConfig("avg_zero", 3), 13, 4)
    byz = adv.byzantine_mask(0)
    for t in range(20):
        x = np.random.default_rng(t).normal(size=(13, 50))
        box = adv.build_mailboxes(x, byz, np.flatnonzero(~byz), t)
        assert np.max(np.abs(box.rows.sum(axis=1))) <= 1e-9


def test_large_noise_moments():
    std = 0.7
    adv = Adversary(AdversaryConfig("large_noise", 1, noise_std=std), 2, 0)
    byz = np.array([False, True])
    draws = np.stack([adv.attack_gradient(np.zeros((2, 5)), byz, 0, 1, t) for t in range(10_000)])
    se = std / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0)) <= 3 * se)
    assert np.all(np.abs(draws.std(axis=0) / std - 1) <= 0.05)


def test_large_noise_default_scale_tracks_honest_norms():
    adv = Adversary(AdversaryConfig("large_noise", 1), 3, 0)
    x = np.array([[3.0, 4.0], [0.0, 5.0], [0.0, 0.0]])
    assert adv._noise_std(x[:2]) == pytest.approx(10 * 5 / np.sqrt(2))


def test_none_passes_the_honest_value_through():
    x = np.random.default_rng(1).normal(size=(4, 2))
    adv = Adversary(AdversaryConfig("none", 1), 4, 0)
    byz = adv.byzantine_mask(0)
    s = int(np.flatnonzero(byz)[0])
    assert np.array_equal(adv.attack_gradient(x, byz, 0, s, 0), x[s])


def test_custom_attack_differs_per_recipient_only_in_byzantine_rows():
    attack = lambda recipient, sender, honest, rng: np.full(honest.shape[1], 100.0 * recipient + sender)
    adv = Adversary(AdversaryConfig(attack, 2), 6, 5)
    byz = adv.byzantine_mask(0)
    x = np.random.default_rng(2).normal(size=(6, 3))
    recipients = np.flatnonzero(~byz)
    box = adv.build_mailboxes(x, byz, recipients, 0)
    assert not box.shared
    for k in recipients:
        row = box.for_recipient(k)
        assert np.array_equal(row[~byz], x[~byz])  # honest rows untouched
        assert np.all(row[byz][:, 0] == 100.0 * k + np.flatnonzero(byz))


def test_attack_on_honest_sender_is_rejected():
    adv = Adversary(AdversaryConfig("avg_zero", 1), 3, 0)
    byz = adv.byzantine_mask(0)
    with pytest.raises(ConfigurationError):
        adv.attack_gradient(np.zeros((3, 1)), byz, 0, int(np.flatnonzero(~byz)[0]), 0)


@pytest.mark.parametrize("kw", [dict(attack="flip"), dict(selection="sometimes"), dict(byzantine_count=-1),
                                dict(noise_std=0.0)])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        AdversaryConfig(**kw)


from hypothesis import given, settings, strategies as st


@settings(max_examples=40, deadline=None)
@given(K=st.integers(2, 12), seed=st.integers(0, 1000), d=st.integers(1, 6))
def test_avg_zero_cancels_any_honest_mean(K, seed, d):
    f = max(1, K // 4 - (K % 4 == 0))
    adv = Adversary(AdversaryConfig("avg_zero", f), K, seed)
    byz = adv.byzantine_mask(0)
    x = np.random.default_rng(seed).normal(scale=10.0, size=(K, d))
    box = adv.build_mailboxes(x, byz, np.flatnonzero(~byz), 0)
    rows = box.rows[0] if box.rows.ndim == 3 else box.rows
    assert np.allclose(rows.mean(axis=0), 0.0, atol=1e-9)
    assert np.array_equal(rows[~byz], x[~byz])
