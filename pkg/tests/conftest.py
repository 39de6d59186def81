import numpy as np
import pytest

from byzpg.env import ChainOracle, default_chain_spec
from byzpg.policy import Policy, PolicySpec


@pytest.fixture
def chain():
    return ChainOracle(default_chain_spec(horizon=3, gamma=0.9))


@pytest.fixture
def linear_spec(chain):
    return PolicySpec(chain.state_dim, chain.action_count, architecture="linear", output_activation="identity")


@pytest.fixture
def linear_policy(linear_spec):
    return Policy(linear_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
