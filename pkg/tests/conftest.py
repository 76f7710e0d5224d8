"""Shared fixtures: the baseline scenario and a randomized-scenario factory."""

import copy
import dataclasses

import numpy as np
import pytest

from ctxrisk.choice import Scenario
from ctxrisk.config import DEFAULTS, from_effective
from ctxrisk.population import ConsiderationMeasure, Copula, MarginalDist, MixtureSpec
from ctxrisk.preferences import PricePair

COPULA_POOL = (
    Copula("independence"),
    Copula("fgm", 1.0),
    Copula("fgm", -0.7),
    Copula("clayton", 2.0),
    Copula("clayton", 0.5),
    Copula("gaussian", 0.6),
    Copula("gaussian", -0.4),
)


@pytest.fixture(scope="session")
def baseline_cfg():
    return from_effective(copy.deepcopy(DEFAULTS))


@pytest.fixture(scope="session")
def ts(baseline_cfg):
    return baseline_cfg.scenario.ts


@pytest.fixture(scope="session")
def baseline_scenario(baseline_cfg) -> Scenario:
    return baseline_cfg.scenario


def random_scenario(ts, rng: np.random.Generator, *, full_attention: bool = True) -> Scenario:
    """Random admissible scenario on the baseline threshold system."""
    alpha, beta = rng.dirichlet([1.0, 1.0, 1.0])[:2]
    f = (
        MarginalDist("uniform", ts.nu_bar)
        if rng.random() < 0.3
        else MarginalDist("beta", ts.nu_bar, float(rng.uniform(0.5, 4.0)), float(rng.uniform(0.5, 4.0)))
    )
    g = (
        MarginalDist("uniform", ts.omega_bar)
        if rng.random() < 0.3
        else MarginalDist("beta", ts.omega_bar, float(rng.uniform(0.5, 4.0)), float(rng.uniform(0.5, 4.0)))
    )
    copula = COPULA_POOL[rng.integers(len(COPULA_POOL))]
    if full_attention:
        consid = ConsiderationMeasure()
    else:
        masses = rng.dirichlet(np.full(9, 1.0))
        names = [f.name for f in dataclasses.fields(ConsiderationMeasure)]
        consid = ConsiderationMeasure.from_mapping(dict(zip(names, masses)))
    prices = PricePair(
        float(rng.uniform(ts.x_min, ts.x_max)), float(rng.uniform(ts.x_min, ts.x_max))
    )
    return Scenario(
        ts=ts,
        mix=MixtureSpec(float(alpha), float(beta), f, g, copula),
        consideration=consid,
        prices=prices,
    )
