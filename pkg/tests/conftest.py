import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from app.scenario import BudgetSpec, LinkBudget, ScenarioConfig  # noqa: E402


@pytest.fixture
def reference() -> ScenarioConfig:
    return ScenarioConfig()


@pytest.fixture
def unit_budget() -> LinkBudget:
    return LinkBudget(sigma_d2=0.01, sigma_qa2=1.0, sigma_ga2=1.0, sigma_qe2=1.0, sigma_ge2=1.0,
                      sigma_gv2=1.0, sigma_w2=1e-3, tx_power=1.0)


@pytest.fixture
def unit_spec() -> BudgetSpec:
    return BudgetSpec(sigma_d2=0.01, sigma_qa2=1.0, sigma_ga2=1.0, sigma_qe2=1.0, sigma_ge2=1.0,
                      sigma_gv2=1.0, sigma_w2=1e-3, tx_power=1.0)


@pytest.fixture
def small_cfg(unit_spec) -> ScenarioConfig:
    """64-element panels with unit leg gains, for fast slot simulations"""
    return ScenarioConfig(m_a=64, m_e=64, budget=unit_spec, seed=11, trials=50)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(1234)))
