import numpy as np
import pytest

from byzpg.adversary import AdversaryConfig
from byzpg.agreement import AgreementConfig
from byzpg.algorithms import (AlgoConfig, PagePG, Simulation, default_aggregator, default_alpha_bar,
                              evaluate_stationarity, select_output)
from byzpg.env import CartPole, enumerate_exact_gradient, exact_return
from byzpg.errors import ConfigurationError, UnsupportedOperationError
from byzpg.policy import Policy, PolicySpec
from byzpg.robust_agg import AggregatorConfig


def plain(**kw):
    base = dict(K=1, N=8, B=2, p=0.3, eta=0.2, T=50, optimizer="plain_ascent")
    base.update(kw)
    return AlgoConfig(**base)


@pytest.mark.parametrize("optimizer", ["plain_ascent", "adam"])
@pytest.mark.parametrize("algorithm", ["fed_page_pg", "dec_page_pg", "byz_pg", "dec_byz_pg"])
def test_single_agent_reduction_is_bit_identical(chain, linear_spec, algorithm, optimizer):
    ref = PagePG(chain, linear_spec, plain(algorithm="page_pg", optimizer=optimizer), seed=3)
    sim = Simulation(chain, linear_spec, plain(algorithm=algorithm, optimizer=optimizer), seed=3)
    for _ in range(50):
        large = ref.step()
        rec = sim.step()
        assert rec.large == large
        assert np.array_equal(sim.state.theta[0], ref.state.theta[0])
    assert sim.state.trajectories[0] == ref.state.trajectories[0]


def test_p_one_always_takes_the_large_branch(chain, linear_spec):
    sim = Simulation(chain, linear_spec, plain(algorithm="dec_byz_pg", K=3, p=1.0, T=20), seed=0)
    recs = sim.run()
    assert all(r.large for r in recs)
    assert np.all(sim.state.trajectories == 20 * 8)


def test_branch_accounting(chain, linear_spec):
    algo = plain(algorithm="dec_page_pg", K=4, T=80, p=0.25)
    sim = Simulation(chain, linear_spec, algo, seed=5)
    recs = sim.run()
    n_large = sum(r.large for r in recs)
    assert recs[0].large
    assert np.all(sim.state.trajectories == n_large * algo.N + (80 - n_large) * algo.B)
    assert [r.trajectories for r in recs] == sorted(r.trajectories for r in recs)


def test_shared_stream_keeps_agents_in_lockstep(chain, linear_spec):
    algo = plain(algorithm="dec_byz_pg", K=5, T=30, shared_sampling_stream=True)
    sim = Simulation(chain, linear_spec, algo, seed=2)
    for _ in range(30):
        sim.step()
        assert np.all(sim.state.theta == sim.state.theta[0])
        assert sim.records[-1].honest_diameter == 0.0


def test_naive_equals_mean_aggregation_without_agreement(chain, linear_spec):
    a = Simulation(chain, linear_spec, plain(algorithm="dec_page_pg", K=4, T=30), seed=8)
    b = Simulation(chain, linear_spec, plain(algorithm="dec_byz_pg", K=4, T=30),
                   aggregator=AggregatorConfig("mean"), agreement=AgreementConfig("mda", 0, 0.0), seed=8)
    a.run()
    b.run()
    assert np.array_equal(a.state.theta, b.state.theta)


def test_plain_ascent_step_without_agreement(chain, linear_spec):
    algo = plain(algorithm="dec_byz_pg", K=3, T=1)
    sim = Simulation(chain, linear_spec, algo, aggregator=AggregatorConfig("mean"),
                     agreement=AgreementConfig("mda", 0, 0.0), seed=1)
    theta0 = sim.state.theta.copy()
    sim.step()
    v = sim.state.realized
    assert np.allclose(sim.state.theta - theta0, algo.eta * v, atol=1e-14)


def test_stationary_small_branch_payload_is_zero(chain, linear_spec):
    """theta_t == theta_{t-1} and a zero realized estimate leave nothing to send."""
    algo = plain(algorithm="dec_page_pg", K=2, T=5)
    sim = Simulation(chain, linear_spec, algo, seed=0)
    sim.state.theta_prev = sim.state.theta.copy()
    sim.state.realized[:] = 0.0
    ctx_data = {}

    class Ctx:
        t, byzantine, data = 1, np.zeros(2, bool), ctx_data

    ctx_data["large"] = False
    sim._d_sample(sim.state, Ctx)
    assert np.all(ctx_data["payloads"] == 0.0)


def test_avg_zero_freezes_plain_ascent_in_large_rounds(chain, linear_spec):
    algo = plain(algorithm="dec_byz_pg", K=5, p=1.0, T=10)
    sim = Simulation(chain, linear_spec, algo, aggregator=AggregatorConfig("mean", alpha=0.2),
                     agreement=AgreementConfig("mda", 0, 0.0), adversary=AdversaryConfig("avg_zero", 1), seed=4)
    honest = np.flatnonzero(~sim.adversary.byzantine_mask(0))
    before = sim.state.theta[honest].copy()
    sim.run()
    assert np.allclose(sim.state.theta[honest], before, atol=1e-12)


def test_robust_run_with_attack_stays_finite_and_agrees(chain, linear_spec):
    algo = plain(algorithm="dec_byz_pg", K=9, T=40)
    sim = Simulation(chain, linear_spec, algo, adversary=AdversaryConfig("large_noise", 2), seed=6)
    sim.run()
    h = sim.honest_agents()
    assert len(h) == 7 and np.all(np.isfinite(sim.state.theta[h]))
    assert sim.records[-1].honest_diameter < 1e-2


def test_chain_return_improves(chain, linear_spec):
    policy = Policy(linear_spec)
    wins = 0
    for seed in range(10):
        sim = Simulation(chain, linear_spec, plain(algorithm="dec_byz_pg", K=5, N=20, B=4, T=60, eta=0.5), seed=seed)
        j0 = exact_return(chain, policy, sim.state.theta[0])
        sim.run()
        wins += exact_return(chain, policy, sim.state.theta[0]) > j0
    assert wins >= 9


@pytest.mark.parametrize("kw,msg", [
    (dict(f=7, algo=dict(algorithm="dec_byz_pg", K=13)), "alpha_max"),
    (dict(f=2, algo=dict(algorithm="byz_pg", K=2)), "alpha_max"),
])
def test_simulation_rejects_too_many_byzantines(chain, linear_spec, kw, msg):
    with pytest.raises(ConfigurationError, match=msg):
        Simulation(chain, linear_spec, plain(**kw["algo"]), adversary=AdversaryConfig("none", kw["f"]))


def test_aggregator_alpha_must_cover_f(chain, linear_spec):
    with pytest.raises(ConfigurationError, match="below the Byzantine fraction"):
        Simulation(chain, linear_spec, plain(algorithm="dec_byz_pg", K=10),
                   aggregator=AggregatorConfig("rfa", alpha=0.1), adversary=AdversaryConfig("none", 2))


def test_centralized_byzantines_avoid_the_server(chain, linear_spec):
    sim = Simulation(chain, linear_spec, plain(algorithm="byz_pg", K=5),
                     adversary=AdversaryConfig("avg_zero", 2, "per_round"), seed=0)
    assert not any(sim.adversary.byzantine_mask(t)[0] for t in range(200))


def test_defaults():
    algo = AlgoConfig(algorithm="byz_pg", K=13)
    agg = default_aggregator(algo, 3)
    assert (agg.kind, agg.alpha_max, agg.bucket_size) == ("bucketed_rfa", 0.5, 2)
    assert default_aggregator(AlgoConfig(algorithm="dec_page_pg", K=13), 3).kind == "mean"
    assert default_aggregator(algo, 3, "krum").alpha_max == 0.25
    # subset size K - f
    K, f = 13, 3
    ab = default_alpha_bar(K, f)
    assert f / K < ab < 0.25 and int(np.ceil((1 - ab) * K - 1e-9)) == K - f


def test_select_output(chain, linear_spec):
    sim = Simulation(chain, linear_spec, plain(algorithm="dec_byz_pg", K=3, T=12), seed=9)
    sim.run()
    t_hat, sel, final = select_output(sim)
    assert 0 <= t_hat < 12
    assert np.array_equal(sel, sim.state.history[t_hat])
    assert np.array_equal(final, sim.state.theta)
    assert select_output(sim)[0] == t_hat
    with pytest.raises(ConfigurationError):
        select_output(sim, 13)
    nohist = Simulation(chain, linear_spec, plain(algorithm="dec_byz_pg", K=3, T=2), keep_history=False)
    nohist.run()
    with pytest.raises(UnsupportedOperationError):
        select_output(nohist)


def test_evaluate_stationarity(chain, linear_spec):
    thetas = np.zeros((3, Policy(linear_spec).n_params))
    assert evaluate_stationarity(chain, linear_spec, thetas, np.inf) == 1.0
    g = np.linalg.norm(enumerate_exact_gradient(chain, Policy(linear_spec), thetas[0]))
    assert evaluate_stationarity(chain, linear_spec, thetas, g * 0.99) == 0.0
    cp = CartPole(horizon=10)
    spec = PolicySpec(4, 2, hidden_sizes=(4,))
    with pytest.raises(UnsupportedOperationError):
        evaluate_stationarity(cp, spec, np.zeros(Policy(spec).n_params), 1.0)


def test_rerun_is_deterministic(chain, linear_spec):
    def go():
        sim = Simulation(chain, linear_spec, plain(algorithm="dec_byz_pg", K=6, T=25),
                         adversary=AdversaryConfig("large_noise", 1), seed=11)
        sim.run()
        return sim.state.theta, [r.mean_honest_return for r in sim.records]

    (a, ra), (b, rb) = go(), go()
    assert np.array_equal(a, b) and ra == rb


def test_cartpole_short_run():
    cp = CartPole(horizon=20)
    spec = PolicySpec(4, 2, hidden_sizes=(8,))
    sim = Simulation(cp, spec, AlgoConfig(algorithm="byz_pg", K=4, N=6, B=2, T=6),
                     adversary=AdversaryConfig("random_action", 1), seed=0)
    recs = sim.run()
    assert len(recs) == 6 and all(np.isfinite(r.mean_honest_return) for r in recs)
    assert recs[0].honest.sum() == 3 and recs[0].honest[0]
