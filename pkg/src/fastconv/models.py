"""Multiplicative-noise model families and their unit-diffusion reductions.

Three families are implemented:

* quadratic diffusion:  dX = (a X + b) dtau + sqrt(c X^2 + d X + e(tau)) dW,
  in the integral time tau of a clock g(t);
* piecewise linear diffusion:  dX = sigma sqrt(tau/2 + eps |X|) dW in the
  integral time tau = 2 sqrt(t) (driftless under the objective measure, with
  a rate correction under the risk-neutral one);
* VNB (Vellekoop-Nieuwenhuis amendment of Borland's feedback model): the
  noise state Omega is a driftless quadratic diffusion in the log clock
  tau = ln(t / t0).

Each family exposes the Lamperti change of variables Z(X, tau) that maps it
to unit diffusion, the drift of the transformed process, the native-coordinate
drift/diffusion used by the Monte Carlo oracle, and closed-form reference
densities where they exist.  All operations are pure functions of immutable
parameter objects and are safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache, singledispatch

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as _gamma, gammaincc


class DomainError(ValueError):
    """Argument or parameter outside the domain of a model operation."""


class Measure(str, Enum):
    OBJECTIVE = "objective"
    RISK_NEUTRAL = "risk-neutral"


# ---------------------------------------------------------------------------
# Time-dependent diffusion levels e(tau) for the quadratic family.
# Supplied as named built-ins so the derivative e'(tau) stays exact.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantLevel:
    """e(tau) = value."""

    value: float

    def __post_init__(self) -> None:
        if self.value < 0.0:
            raise DomainError("diffusion level must be non-negative")

    def __call__(self, tau):
        return self.value + 0.0 * np.asarray(tau, dtype=float)

    def derivative(self, tau):
        return 0.0 * np.asarray(tau, dtype=float)


@dataclass(frozen=True)
class ExpDecayLevel:
    """e(tau) = floor + amplitude * exp(-rate * tau)."""

    floor: float
    amplitude: float
    rate: float

    def __post_init__(self) -> None:
        if self.floor < 0.0 or self.amplitude < 0.0:
            raise DomainError("diffusion level must be non-negative")

    def __call__(self, tau):
        return self.floor + self.amplitude * np.exp(-self.rate * np.asarray(tau, dtype=float))

    def derivative(self, tau):
        return -self.rate * self.amplitude * np.exp(-self.rate * np.asarray(tau, dtype=float))


@dataclass(frozen=True)
class ExpGrowthLevel:
    """e(tau) = coeff * exp(rate * tau)."""

    coeff: float
    rate: float

    def __post_init__(self) -> None:
        if self.coeff < 0.0:
            raise DomainError("diffusion level must be non-negative")

    def __call__(self, tau):
        return self.coeff * np.exp(self.rate * np.asarray(tau, dtype=float))

    def derivative(self, tau):
        return self.rate * self(tau)


# ---------------------------------------------------------------------------
# Parameter families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticParams:
    """Quadratic diffusion dX = (aX+b) dtau + sqrt(c X^2 + d X + e(tau)) dW.

    ``clock`` names the physical-time map behind tau: "unit" (tau = t - t0)
    or "log" (tau = ln(t/t0)).  The discriminant 4 c e(tau) - d^2 must stay
    non-negative over the propagation window; it is checked at evaluation.
    """

    a: float
    b: float
    c: float
    d: float
    e_fn: ConstantLevel | ExpDecayLevel | ExpGrowthLevel
    x0: float = 0.0
    clock: str = "unit"

    def __post_init__(self) -> None:
        if self.c <= 0.0:
            raise DomainError("quadratic coefficient c must be positive")
        if self.clock not in ("unit", "log"):
            raise DomainError(f"unknown clock {self.clock!r}")

    @property
    def delta(self) -> float:
        return self.d / (2.0 * self.c)

    def a_sq(self, tau):
        """(4 e(tau) c - d^2) / (4 c^2); positive discriminant required."""
        a2 = (4.0 * self.e_fn(tau) * self.c - self.d * self.d) / (4.0 * self.c * self.c)
        if np.any(np.asarray(a2) <= 0.0):
            raise DomainError("discriminant 4 c e(tau) - d^2 must be positive at tau")
        return a2


def quadratic(a: float, b: float, c: float, d: float, e: float, x0: float = 0.0) -> QuadraticParams:
    """Quadratic diffusion with a constant level e."""
    return QuadraticParams(a=a, b=b, c=c, d=d, e_fn=ConstantLevel(e), x0=x0)


@dataclass(frozen=True)
class PiecewiseParams:
    """Piecewise linear diffusion d(X^2) coefficient 1 + eps |X| / sqrt(t).

    ``smooth_k`` steers the smooth |.| regularizer used by the transformed
    drift; ``None`` means the exact sign function (the k -> inf limit).  The
    engine substitutes 10/dz of the active grid when left unset.  ``mu`` is
    an objective-measure drift on X (zero for the pure scaling model); ``r``
    is the risk-free rate entering the risk-neutral drift.
    """

    sigma: float
    epsilon: float
    hurst: float = 0.5
    smooth_k: float | None = None
    mu: float = 0.0
    r: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma <= 0.0:
            raise DomainError("sigma must be positive")
        if self.epsilon <= 0.0:
            raise DomainError("epsilon must be positive")
        if self.hurst != 0.5:
            raise DomainError("hurst exponent is fixed at 1/2 for this family")
        if self.smooth_k is not None and self.smooth_k <= 0.0:
            raise DomainError("smooth_k must be positive")

    @property
    def alpha(self) -> float:
        """Tail-thickness index 1 / (sigma^2 eps^2) of the scaling density."""
        return 1.0 / (self.sigma**2 * self.epsilon**2)


@dataclass(frozen=True)
class VnbParams:
    """VNB stochastic-volatility model parameters.

    The stock follows dS = mu S dt + sigma S dOmega with dOmega =
    Sigma(Omega, t) dW; in the log clock tau = ln(t/t0) the noise state is a
    driftless quadratic diffusion with c = alpha / ((1-alpha)(2-alpha)) and
    an exponentially growing level e(tau).
    """

    alpha: float
    sigma: float
    t0: float
    T: float
    r: float = 0.0
    mu: float = 0.0
    omega0: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 0.5:
            raise DomainError("alpha must lie in (0, 1/2)")
        if self.sigma <= 0.0:
            raise DomainError("sigma must be positive")
        if self.t0 <= 0.0:
            raise DomainError("t0 must be positive (log clock)")
        if self.T <= self.t0:
            raise DomainError("maturity T must exceed t0")

    @property
    def c_quad(self) -> float:
        return self.alpha / ((1.0 - self.alpha) * (2.0 - self.alpha))

    @property
    def growth_rate(self) -> float:
        return 2.0 / (2.0 - self.alpha)

    @property
    def e_coeff(self) -> float:
        k = (1.0 - self.alpha) * (2.0 - self.alpha)
        return k ** (self.alpha / (2.0 - self.alpha)) * self.t0 ** self.growth_rate

    def e_tilde(self, tau):
        return self.e_coeff * np.exp(self.growth_rate * np.asarray(tau, dtype=float))

    def beta(self, t):
        return ((1.0 - self.alpha) * (2.0 - self.alpha) * np.asarray(t, dtype=float)) ** (
            -2.0 / (2.0 - self.alpha)
        )

    @property
    def noise_amplitude(self) -> float:
        """Normalization A = sqrt(pi/alpha) Gamma(1/alpha - 1/2) / Gamma(1/alpha)."""
        ia = 1.0 / self.alpha
        return math.sqrt(math.pi / self.alpha) * _gamma(ia - 0.5) / _gamma(ia)

    def unconditional_pdf(self, omega, t):
        """Student-t-like law of Omega_t started from Omega_0 = 0 at t0 = 0."""
        bt = self.beta(t)
        nt = self.noise_amplitude / np.sqrt(bt)
        return (1.0 + self.alpha * bt * np.asarray(omega, dtype=float) ** 2) ** (-1.0 / self.alpha) / nt

    def sigma_sq(self, omega, t):
        """Squared noise diffusion Sigma^2(Omega, t), from its defining form."""
        return self.noise_amplitude ** (-self.alpha) * self.unconditional_pdf(omega, t) ** (
            -self.alpha
        )

    def c_factor(self, tau):
        """Scale sqrt(alpha beta(t0)) exp(-tau/(2-alpha)) of the sinh map."""
        return np.sqrt(self.alpha * self.beta(self.t0)) * np.exp(
            -np.asarray(tau, dtype=float) / (2.0 - self.alpha)
        )

    def det_exponent_integral(self) -> float:
        """Closed form of int_{t0}^{T} beta_s^(-alpha/2) ds."""
        k = (1.0 - self.alpha) * (2.0 - self.alpha)
        p = 2.0 / (2.0 - self.alpha)
        return (
            (2.0 - self.alpha)
            / 2.0
            * k ** (self.alpha / (2.0 - self.alpha))
            * (self.T**p - self.t0**p)
        )

    def as_quadratic(self) -> QuadraticParams:
        """The equivalent quadratic-diffusion parameterization of Omega."""
        return QuadraticParams(
            a=0.0,
            b=0.0,
            c=self.c_quad,
            d=0.0,
            e_fn=ExpGrowthLevel(self.e_coeff, self.growth_rate),
            x0=self.omega0,
            clock="log",
        )


AnyModel = QuadraticParams | PiecewiseParams | VnbParams


# ---------------------------------------------------------------------------
# Smooth |x| regularizer
# ---------------------------------------------------------------------------


def smooth_abs(x, k: float):
    """Smooth absolute value x (2/(1+exp(-2kx)) - 1) = x tanh(kx)."""
    if k <= 0.0:
        raise DomainError("smoothing steepness k must be positive")
    x = np.asarray(x, dtype=float)
    return x * np.tanh(k * x)


def smooth_abs_derivative(x, k: float):
    """Derivative tanh(kx) + kx sech^2(kx); tends to sign(x) pointwise."""
    if k <= 0.0:
        raise DomainError("smoothing steepness k must be positive")
    x = np.asarray(x, dtype=float)
    t = np.tanh(k * x)
    return t + k * x * (1.0 - t * t)


def _sech(arg):
    """Numerically stable 1/cosh."""
    a = np.abs(np.asarray(arg, dtype=float))
    ea = np.exp(-a)
    return 2.0 * ea / (1.0 + ea * ea)


# ---------------------------------------------------------------------------
# Lamperti transform, forward and inverse
# ---------------------------------------------------------------------------


@singledispatch
def lamperti_forward(model, measure: Measure, x, tau: float):
    """Map the native state x to the unit-diffusion coordinate z at time tau."""
    raise TypeError(f"no Lamperti transform registered for {type(model).__name__}")


@lamperti_forward.register
def _(model: QuadraticParams, measure: Measure, x, tau: float):
    a2 = model.a_sq(tau)
    amp = np.sqrt(a2)
    rc = math.sqrt(model.c)
    x = np.asarray(x, dtype=float)
    return (np.arcsinh((x + model.delta) / amp) - np.arcsinh((model.x0 + model.delta) / amp)) / rc


@lamperti_forward.register
def _(model: PiecewiseParams, measure: Measure, x, tau: float):
    if tau <= 0.0:
        raise DomainError("piecewise transform is singular at tau <= 0")
    x = np.asarray(x, dtype=float)
    half = tau / 2.0
    return (
        2.0
        / (model.sigma * model.epsilon)
        * np.sign(x)
        * (np.sqrt(half + model.epsilon * np.abs(x)) - math.sqrt(half))
    )


@lamperti_forward.register
def _(model: VnbParams, measure: Measure, x, tau: float):
    cf = model.c_factor(tau)
    rc = math.sqrt(model.c_quad)
    x = np.asarray(x, dtype=float)
    return (np.arcsinh(cf * x) - np.arcsinh(cf * model.omega0)) / rc


@singledispatch
def lamperti_inverse(model, measure: Measure, z, tau: float):
    """Map the unit-diffusion coordinate z back to the native state."""
    raise TypeError(f"no Lamperti transform registered for {type(model).__name__}")


@lamperti_inverse.register
def _(model: QuadraticParams, measure: Measure, z, tau: float):
    a2 = model.a_sq(tau)
    amp = np.sqrt(a2)
    rc = math.sqrt(model.c)
    z = np.asarray(z, dtype=float)
    return amp * np.sinh(rc * z + np.arcsinh((model.x0 + model.delta) / amp)) - model.delta


@lamperti_inverse.register
def _(model: PiecewiseParams, measure: Measure, z, tau: float):
    if tau <= 0.0:
        raise DomainError("piecewise transform is singular at tau <= 0")
    z = np.asarray(z, dtype=float)
    half = tau / 2.0
    return (
        np.sign(z)
        / model.epsilon
        * ((model.sigma * model.epsilon * np.abs(z) / 2.0 + math.sqrt(half)) ** 2 - half)
    )


@lamperti_inverse.register
def _(model: VnbParams, measure: Measure, z, tau: float):
    cf = model.c_factor(tau)
    rc = math.sqrt(model.c_quad)
    z = np.asarray(z, dtype=float)
    return np.sinh(rc * z + np.arcsinh(cf * model.omega0)) / cf


# ---------------------------------------------------------------------------
# Unit-diffusion drift of the transformed process
# ---------------------------------------------------------------------------


@singledispatch
def drift_z(model, measure: Measure, z, tau: float):
    """Drift of the unit-diffusion process dZ = M_Z(Z, tau) dtau + dW."""
    raise TypeError(f"no transformed drift registered for {type(model).__name__}")


@drift_z.register
def _(model: QuadraticParams, measure: Measure, z, tau: float):
    a2 = model.a_sq(tau)
    rc = math.sqrt(model.c)
    eprime = model.e_fn.derivative(tau)
    anchored = model.x0 + model.delta
    zeta0 = np.arcsinh(anchored / np.sqrt(a2)) / rc
    chi0 = anchored / np.sqrt(a2 + anchored * anchored)
    arg = rc * (np.asarray(z, dtype=float) + zeta0)
    lead = model.a - model.c / 2.0
    return (
        (lead - eprime / (2.0 * model.c * a2)) / rc * np.tanh(arg)
        - (model.delta * lead - model.b + model.d / 4.0) / np.sqrt(model.c * a2) * _sech(arg)
        + eprime * chi0 / (2.0 * model.c**1.5 * a2)
    )


def _piecewise_sign_and_scale(model: PiecewiseParams, z, tau: float):
    """Smoothed sign, |z|, and the diffusion images Q = D_X, Q0 = D_X(0)."""
    if tau <= 0.0:
        raise DomainError("piecewise drift is singular at tau = 0")
    z = np.asarray(z, dtype=float)
    if model.smooth_k is None:
        sgn = np.sign(z)
        az = np.abs(z)
    else:
        sgn = np.tanh(model.smooth_k * z)
        az = z * sgn
    q0 = model.sigma * math.sqrt(tau / 2.0)
    q = model.sigma**2 * model.epsilon * az / 2.0 + q0
    return sgn, q, q0


@drift_z.register
def _(model: PiecewiseParams, measure: Measure, z, tau: float):
    sgn, q, q0 = _piecewise_sign_and_scale(model, z, tau)
    m = sgn * (
        (1.0 / q - 1.0 / q0) / (2.0 * model.epsilon) - model.epsilon * model.sigma**2 / (4.0 * q)
    )
    if measure == Measure.RISK_NEUTRAL:
        # M_X/D_X image of the rate and Ito corrections; even in z by design.
        return m + model.r * tau / (2.0 * q) - q / 2.0
    return m + model.mu * tau / (2.0 * q)


@dataclass(frozen=True)
class StockNumerairePiecewise(PiecewiseParams):
    """Risk-neutral piecewise dynamics re-expressed under the stock numeraire.

    The Girsanov shift adds the log-price diffusion D_X to the transformed
    drift, so the propagated vector is the density of Z under the share
    measure: e^(x(z) - r t) p(z).  Pricing uses it for the forward-weighted
    payoff leg, which float64 cannot resolve from p alone (the integrand
    weights the far tail by e^(x) with x growing quadratically in z).
    """


@drift_z.register
def _(model: StockNumerairePiecewise, measure: Measure, z, tau: float):
    sgn, q, q0 = _piecewise_sign_and_scale(model, z, tau)
    m = sgn * (
        (1.0 / q - 1.0 / q0) / (2.0 * model.epsilon) - model.epsilon * model.sigma**2 / (4.0 * q)
    )
    return m + model.r * tau / (2.0 * q) + q / 2.0


@drift_z.register
def _(model: VnbParams, measure: Measure, z, tau: float):
    rc = math.sqrt(model.c_quad)
    cf = model.c_factor(tau)
    zeta0 = np.arcsinh(cf * model.omega0) / rc
    chi0 = cf * model.omega0 / np.sqrt(1.0 + (cf * model.omega0) ** 2)
    arg = rc * (np.asarray(z, dtype=float) + zeta0)
    inv = 1.0 / (2.0 - model.alpha)
    return -(model.c_quad / 2.0 + inv) / rc * np.tanh(arg) + chi0 * inv / rc


@singledispatch
def drift_is_time_dependent(model, measure: Measure) -> bool:
    """Whether M_Z(z, tau) actually varies with tau (workspace-reuse hint)."""
    return True


@drift_is_time_dependent.register
def _(model: QuadraticParams, measure: Measure) -> bool:
    return not isinstance(model.e_fn, ConstantLevel)


@drift_is_time_dependent.register
def _(model: PiecewiseParams, measure: Measure) -> bool:
    return True


@drift_is_time_dependent.register
def _(model: VnbParams, measure: Measure) -> bool:
    return model.omega0 != 0.0


# ---------------------------------------------------------------------------
# Native-coordinate drift and diffusion (Monte Carlo oracle; generic-drift FD)
# ---------------------------------------------------------------------------


@singledispatch
def drift_x(model, measure: Measure, x, tau: float):
    """Drift of the native state in integral time."""
    raise TypeError(f"no native drift registered for {type(model).__name__}")


@drift_x.register
def _(model: QuadraticParams, measure: Measure, x, tau: float):
    return model.a * np.asarray(x, dtype=float) + model.b


@drift_x.register
def _(model: PiecewiseParams, measure: Measure, x, tau: float):
    x = np.asarray(x, dtype=float)
    if measure == Measure.RISK_NEUTRAL:
        return (model.r - model.sigma**2 / 2.0) * tau / 2.0 - (
            model.epsilon * model.sigma**2 / 2.0
        ) * np.abs(x)
    return model.mu * tau / 2.0 + 0.0 * x


@drift_x.register
def _(model: VnbParams, measure: Measure, x, tau: float):
    return 0.0 * np.asarray(x, dtype=float)


@singledispatch
def diffusion_x(model, x, tau: float):
    """Diffusion coefficient of the native state in integral time."""
    raise TypeError(f"no native diffusion registered for {type(model).__name__}")


@diffusion_x.register
def _(model: QuadraticParams, x, tau: float):
    x = np.asarray(x, dtype=float)
    arg = model.c * x * x + model.d * x + model.e_fn(tau)
    if np.any(arg < 0.0):
        raise DomainError("quadratic diffusion argument negative (discriminant violated)")
    return np.sqrt(arg)


@diffusion_x.register
def _(model: PiecewiseParams, x, tau: float):
    x = np.asarray(x, dtype=float)
    return model.sigma * np.sqrt(tau / 2.0 + model.epsilon * np.abs(x))


@diffusion_x.register
def _(model: VnbParams, x, tau: float):
    x = np.asarray(x, dtype=float)
    return np.sqrt(model.c_quad * x * x + model.e_tilde(tau))


def lamperti_drift_fd(model, measure: Measure, z, tau: float, rel_step: float = 1e-6):
    """Generic unit-diffusion drift via finite differences of the transform.

    Evaluates M_X/D_X - (1/2) dD_X/dx + dZ/dtau at x = Z^{-1}(z), using
    central differences for the two partials.  Serves as the independent
    oracle for the closed-form drifts.
    """
    z = np.asarray(z, dtype=float)
    x = lamperti_inverse(model, measure, z, tau)
    hx = rel_step * (1.0 + np.abs(x))
    d_dx = (diffusion_x(model, x + hx, tau) - diffusion_x(model, x - hx, tau)) / (2.0 * hx)
    ht = rel_step * (1.0 + abs(tau))
    dz_dtau = (
        lamperti_forward(model, measure, x, tau + ht)
        - lamperti_forward(model, measure, x, tau - ht)
    ) / (2.0 * ht)
    return drift_x(model, measure, x, tau) / diffusion_x(model, x, tau) - 0.5 * d_dx + dz_dtau


# ---------------------------------------------------------------------------
# Integral-time clocks
# ---------------------------------------------------------------------------


@singledispatch
def integral_time(model, t, t0: float | None = None):
    """Map physical time t to the model's integral time tau."""
    raise TypeError(f"no clock registered for {type(model).__name__}")


@singledispatch
def integral_time_inverse(model, tau, t0: float | None = None):
    """Map integral time tau back to physical time t."""
    raise TypeError(f"no clock registered for {type(model).__name__}")


def _check_time(t, t0):
    if np.any(np.asarray(t) < t0):
        raise DomainError(f"physical time {t} precedes start time {t0}")


@integral_time.register
def _(model: QuadraticParams, t, t0: float | None = None):
    t = np.asarray(t, dtype=float)
    if model.clock == "unit":
        t0 = 0.0 if t0 is None else t0
        _check_time(t, t0)
        return t - t0
    if t0 is None or t0 <= 0.0:
        raise DomainError("log clock requires a positive start time t0")
    _check_time(t, t0)
    return np.log(t / t0)


@integral_time_inverse.register
def _(model: QuadraticParams, tau, t0: float | None = None):
    tau = np.asarray(tau, dtype=float)
    if model.clock == "unit":
        return tau + (0.0 if t0 is None else t0)
    if t0 is None or t0 <= 0.0:
        raise DomainError("log clock requires a positive start time t0")
    return t0 * np.exp(tau)


@integral_time.register
def _(model: PiecewiseParams, t, t0: float | None = None):
    t0 = 0.0 if t0 is None else t0
    _check_time(t, t0)
    return 2.0 * (np.sqrt(np.asarray(t, dtype=float)) - math.sqrt(t0))


@integral_time_inverse.register
def _(model: PiecewiseParams, tau, t0: float | None = None):
    t0 = 0.0 if t0 is None else t0
    return (np.asarray(tau, dtype=float) / 2.0 + math.sqrt(t0)) ** 2


@integral_time.register
def _(model: VnbParams, t, t0: float | None = None):
    t0 = model.t0 if t0 is None else t0
    if t0 <= 0.0:
        raise DomainError("log clock requires a positive start time t0")
    _check_time(t, t0)
    return np.log(np.asarray(t, dtype=float) / t0)


@integral_time_inverse.register
def _(model: VnbParams, tau, t0: float | None = None):
    t0 = model.t0 if t0 is None else t0
    return t0 * np.exp(np.asarray(tau, dtype=float))


# ---------------------------------------------------------------------------
# Closed-form reference densities
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _stationary_norm(a: float, b: float, c: float, d: float, e: float) -> float:
    d2 = 4.0 * c * e - d * d
    nu = 1.0 - 2.0 * a / c
    xc = -d / (2.0 * c)
    w = math.sqrt(d2) / (2.0 * c)

    def unnorm(x: float) -> float:
        theta = math.atan2(x * math.sqrt(d2), 2.0 * e + d * x)
        core = ((x + d / (2.0 * c)) ** 2 + d2 / (4.0 * c * c)) ** (-(1.0 + nu) / 2.0)
        return core * math.exp(-2.0 * (a * d - 2.0 * b * c) / (c * math.sqrt(d2)) * theta)

    total, _ = quad(
        unnorm,
        xc - 50.0 * w,
        xc + 50.0 * w,
        points=[xc - w, xc, xc + w],
        limit=500,
        epsabs=0.0,
        epsrel=1e-12,
    )
    return 1.0 / total


def stationary_pdf(params: QuadraticParams, x):
    """Stationary density of the constant-level, mean-reverting quadratic model.

    Requires a constant e > 0, a < 0, and a positive discriminant.  The
    density is a generalized Student-t-like law with algebraic tail index
    nu = 1 - 2a/c; the normalization constant is fixed once per parameter
    set by adaptive quadrature.
    """
    if not isinstance(params.e_fn, ConstantLevel):
        raise DomainError("stationary density requires a constant diffusion level")
    if params.a >= 0.0:
        raise DomainError("stationary density requires mean reversion (a < 0)")
    e = params.e_fn.value
    d2 = 4.0 * params.c * e - params.d**2
    if d2 <= 0.0:
        raise DomainError("stationary density requires a positive discriminant")
    nu = 1.0 - 2.0 * params.a / params.c
    x = np.asarray(x, dtype=float)
    # atan continued smoothly across the pole of its argument at x = -2e/d.
    theta = np.arctan2(x * math.sqrt(d2), 2.0 * e + params.d * x)
    core = ((x + params.delta) ** 2 + d2 / (4.0 * params.c**2)) ** (-(1.0 + nu) / 2.0)
    expo = np.exp(-2.0 * (params.a * params.d - 2.0 * params.b * params.c) / (params.c * math.sqrt(d2)) * theta)
    return _stationary_norm(params.a, params.b, params.c, params.d, e) * core * expo


def piecewise_pdf(sigma: float, epsilon: float, x, t: float):
    """Exponential-tailed scaling density of the driftless piecewise model.

    P(x, t) = N exp(-|x|/(sigma^2 eps sqrt(t))) (1 + eps|x|/sqrt(t))^(alpha-1)
    with alpha = 1/(sigma^2 eps^2) and N chosen so the density integrates to
    one (N = eps alpha^alpha e^(-alpha) / (2 Gamma[alpha, alpha] sqrt(t))).
    """
    if t <= 0.0:
        raise DomainError("density defined for t > 0 only")
    if sigma <= 0.0 or epsilon <= 0.0:
        raise DomainError("sigma and epsilon must be positive")
    alpha = 1.0 / (sigma**2 * epsilon**2)
    st = math.sqrt(t)
    upper = _gamma(alpha) * gammaincc(alpha, alpha)
    norm = epsilon * alpha**alpha * math.exp(-alpha) / (2.0 * upper * st)
    x = np.asarray(x, dtype=float)
    return norm * np.exp(-np.abs(x) / (sigma**2 * epsilon * st)) * (1.0 + epsilon * np.abs(x) / st) ** (
        alpha - 1.0
    )
