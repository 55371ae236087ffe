"""Euler-scheme Monte Carlo oracle for all three model families.

Simulation runs in the native coordinates (X for the quadratic and piecewise
families, Omega for VNB) on the integral-time grid, sharing no code path with
the Lamperti/fast-convolution machinery it cross-checks.  Streams come from
the counter-based Philox generator: block b of a run draws from counter
b * 2^192 under the configured key, so results are independent of how the
path set is partitioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models
from .models import Measure

#: two-sided normal quantile for 95% confidence intervals
Z95 = 1.959964

_FUNCTIONALS = ("none", "geometric-average", "integrated-omega-squared")


@dataclass(frozen=True)
class McConfig:
    """One simulation request; identical configs give bitwise-identical output."""

    model: models.AnyModel
    measure: Measure
    n_paths: int
    n_steps: int
    dtau: float
    seed: int
    functional: str = "none"
    antithetic: bool = False
    t0: float = 0.0
    block_size: int = 1 << 17

    def __post_init__(self) -> None:
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if self.n_steps < 1:
            raise ValueError("need at least one step")
        if self.dtau <= 0.0:
            raise ValueError("dtau must be positive")
        if self.functional not in _FUNCTIONALS:
            raise ValueError(f"unknown functional {self.functional!r}")
        if self.functional == "integrated-omega-squared" and not isinstance(
            self.model, models.VnbParams
        ):
            raise ValueError("integrated-omega-squared applies to the VNB model")
        if self.block_size < 2 or self.block_size % 2:
            raise ValueError("block_size must be even and >= 2")


@dataclass(frozen=True)
class McSamples:
    """Terminal states plus the optional path-functional samples."""

    terminal: np.ndarray
    functional: np.ndarray | None = None


@dataclass(frozen=True)
class McHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_samples: int


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float

    @property
    def ci95_low(self) -> float:
        return self.mean - Z95 * self.std_error

    @property
    def ci95_high(self) -> float:
        return self.mean + Z95 * self.std_error

    def covers(self, value: float) -> bool:
        return self.ci95_low <= value <= self.ci95_high


def _block_rng(seed: int, block: int) -> np.random.Generator:
    # Blocks are spaced 2^192 counters apart: disjoint streams by construction.
    return np.random.Generator(np.random.Philox(key=seed, counter=block << 192))


def _initial_state(model) -> float:
    if isinstance(model, models.QuadraticParams):
        return model.x0
    if isinstance(model, models.VnbParams):
        return model.omega0
    return 0.0


def simulate(config: McConfig) -> McSamples:
    """Euler-Maruyama paths; returns terminal states and functional samples.

    The functional is accumulated with the same discretization weights as the
    fast-convolution recursions: the geometric average adds
    (tau^j / 2 + sqrt(t0)) X^j after each update and divides by n; the
    integrated square adds dtau Omega_j^2 after each update.
    """
    model, measure = config.model, config.measure
    n, dtau = config.n_steps, config.dtau
    want_u = config.functional != "none"
    terminal = np.empty(config.n_paths)
    func = np.empty(config.n_paths) if want_u else None
    sq_t0 = math.sqrt(config.t0)

    n_blocks = -(-config.n_paths // config.block_size)
    for blk in range(n_blocks):
        rng = _block_rng(config.seed, blk)
        size = config.block_size
        x = np.full(size, _initial_state(model), dtype=float)
        u = np.zeros(size) if want_u else None
        half = size // 2
        for i in range(n):
            tau = i * dtau
            if config.antithetic:
                draws = rng.standard_normal(half)
                noise = np.concatenate([draws, -draws])
            else:
                noise = rng.standard_normal(size)
            x += models.drift_x(model, measure, x, tau) * dtau
            x += models.diffusion_x(model, x, tau) * math.sqrt(dtau) * noise
            if want_u:
                tau_next = (i + 1) * dtau
                if config.functional == "geometric-average":
                    u += (tau_next / 2.0 + sq_t0) * x
                else:
                    u += dtau * x * x
        if want_u and config.functional == "geometric-average":
            u /= n
        lo = blk * config.block_size
        hi = min(lo + config.block_size, config.n_paths)
        terminal[lo:hi] = x[: hi - lo]
        if want_u:
            func[lo:hi] = u[: hi - lo]
    return McSamples(terminal=terminal, functional=func)


def histogram(samples: np.ndarray, bins, range=None) -> McHistogram:
    """Density histogram with per-bin 95% bands (binomial normal approximation)."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 1:
        raise ValueError("need at least one sample")
    counts, edges = np.histogram(samples, bins=bins, range=range)
    n = samples.size
    widths = np.diff(edges)
    p = counts / n
    se = np.sqrt(p * (1.0 - p) / n)
    return McHistogram(
        bin_edges=edges,
        counts=counts,
        density=p / widths,
        ci_low=np.clip(p - Z95 * se, 0.0, None) / widths,
        ci_high=(p + Z95 * se) / widths,
        n_samples=n,
    )


def estimate_payoff(samples, payoff, discount: float = 1.0) -> McEstimate:
    """Discounted sample mean of payoff(samples) with its 95% interval."""
    values = discount * np.asarray(payoff(samples), dtype=float)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return McEstimate(mean=mean, std_error=se)
