"""Shared fixtures and test-only toy models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import settings

from fastconv import models

settings.register_profile("ci", deadline=None, max_examples=50)
settings.load_profile("ci")


@dataclass(frozen=True)
class ZeroDriftModel:
    """dZ = dW: the propagated density must stay an exact Gaussian."""


@dataclass(frozen=True)
class LinearDriftModel:
    """dZ = -rate Z dtau + dW (Ornstein-Uhlenbeck in the transformed state)."""

    rate: float


@dataclass(frozen=True)
class SaturatingDriftModel:
    """dZ = -amp tanh(steep Z) dtau + dW; folds the remap when amp dtau is large."""

    amp: float
    steep: float = 10.0


@models.drift_z.register
def _(model: ZeroDriftModel, measure, z, tau):
    return 0.0 * np.asarray(z, dtype=float)


@models.drift_is_time_dependent.register
def _(model: ZeroDriftModel, measure):
    return False


@models.drift_z.register
def _(model: LinearDriftModel, measure, z, tau):
    return -model.rate * np.asarray(z, dtype=float)


@models.drift_is_time_dependent.register
def _(model: LinearDriftModel, measure):
    return False


@models.drift_z.register
def _(model: SaturatingDriftModel, measure, z, tau):
    return -model.amp * np.tanh(model.steep * np.asarray(z, dtype=float))


@pytest.fixture
def zero_drift():
    return ZeroDriftModel()


@pytest.fixture
def stationary_quadratic():
    return models.quadratic(a=-20.0, b=0.1, c=4.5, d=0.1, e=0.1)


@pytest.fixture
def piecewise_eps2():
    return models.PiecewiseParams(sigma=1.0, epsilon=2.0)


@pytest.fixture
def vnb_reference():
    return models.VnbParams(alpha=0.1, sigma=0.3, t0=0.2, T=0.7, r=0.03, omega0=0.0)
