"""Simulator for Byzantine-tolerant federated and decentralized policy gradient."""

from .adversary import Adversary, AdversaryConfig
from .agreement import AgreementConfig, run_agreement
from .algorithms import AlgoConfig, PagePG, Simulation, evaluate_stationarity, select_output
from .config import ExperimentConfig, load_config, save_config
from .env import CartPole, ChainOracle, ChainOracleSpec, default_chain_spec
from .errors import ConfigurationError, SimulationError, UnsupportedOperationError
from .estimators import BaselineConfig
from .experiment import replay, run_experiment
from .policy import Policy, PolicySpec
from .robust_agg import AggregatorConfig, robust_aggregate

__version__ = "0.1.0"

__all__ = [
    "Adversary", "AdversaryConfig", "AgreementConfig", "AggregatorConfig", "AlgoConfig", "BaselineConfig",
    "CartPole", "ChainOracle", "ChainOracleSpec", "ConfigurationError", "ExperimentConfig", "PagePG",
    "Policy", "PolicySpec", "Simulation", "SimulationError", "UnsupportedOperationError",
    "default_chain_spec", "evaluate_stationarity", "load_config", "replay", "robust_aggregate",
    "run_agreement", "run_experiment", "save_config", "select_output",
]
