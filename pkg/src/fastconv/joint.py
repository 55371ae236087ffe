"""2-D engine for the joint law of the unit-diffusion state Z and a path functional U.

The functional obeys an affine per-step recursion u^{i+1} = a_i u^i + b_i(z^{i+1})
(running geometric average for Asian payoffs, integrated Omega^2 for the VNB
model).  Each step convolves every u-row along z with the 1-D machinery, then
remaps the u-axis column by column through the inverted recursion, weighting by
the constant Jacobian |du^i/du^{i+1}| = 1/a_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels, models
from .engine import (
    CirculantKernel,
    DensityVector,
    SpatialGrid,
    StepWorkspace,
    TimeGrid,
    _convolve_rows,
    _is_pow2,
    _remap_rows,
    _resolve_model,
    build_kernel,
    build_workspace,
    conservative_remap,
    initial_density,
)
from .models import Measure


@dataclass(frozen=True)
class UGrid:
    """Uniform functional grid: u_j = u_min + j du, du = -2 u_min / m_u."""

    u_min: float
    m_u: int

    def __post_init__(self) -> None:
        if self.u_min >= 0.0:
            raise ValueError("u_min must be negative (grid symmetric about 0)")
        if not _is_pow2(self.m_u) or self.m_u < 8:
            raise ValueError("node count m_u must be a power of two >= 8")

    @property
    def du(self) -> float:
        return -2.0 * self.u_min / self.m_u

    @cached_property
    def nodes(self) -> np.ndarray:
        u = self.u_min + self.du * np.arange(self.m_u)
        u.setflags(write=False)
        return u

    @cached_property
    def edges(self) -> np.ndarray:
        e = self.u_min + self.du * (np.arange(self.m_u + 1) - 0.5)
        e.setflags(write=False)
        return e


@dataclass(frozen=True)
class JointDensity:
    """m_u x m_z matrix sampling p_UZ(u, z); rows index u, columns index z."""

    values: np.ndarray
    tau: float
    step_index: int
    du: float
    dz: float

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise ValueError("joint density must be a matrix")
        if np.any(v < 0.0):
            raise ValueError("joint density must be non-negative")

    @cached_property
    def mass(self) -> float:
        return float(self.du * self.dz * self.values.sum())

    @property
    def mass_deficit(self) -> float:
        return 1.0 - self.mass


# ---------------------------------------------------------------------------
# Path-functional recursions u^{i+1} = shrink(i) u^i + state_term(z^{i+1}, i)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeometricAverageRecursion:
    """Running average of the weighted log-price for geometric Asian payoffs.

    U^n approximates (1/n) sum_j (tau^j/2 + sqrt(t0)) X^j, the discretized
    time average of X in integral time tau = 2(sqrt(t) - sqrt(t0)).
    """

    model: models.PiecewiseParams
    t0: float = 0.0

    kind = "asian"

    def shrink(self, i: int) -> float:
        return i / (i + 1.0)

    def jacobian(self, i: int) -> float:
        return (i + 1.0) / i

    def state_term(self, z: np.ndarray, i: int, dtau: float) -> np.ndarray:
        tau_next = (i + 1) * dtau
        weight = dtau / 2.0 + math.sqrt(self.t0) / (i + 1.0)
        return weight * models.lamperti_inverse(self.model, Measure.RISK_NEUTRAL, z, tau_next)


@dataclass(frozen=True)
class IntegratedSquareRecursion:
    """Left-out Riemann sum of Omega^2 dtau for the VNB exponent."""

    model: models.VnbParams

    kind = "vnb"

    def shrink(self, i: int) -> float:
        return 1.0

    def jacobian(self, i: int) -> float:
        return 1.0

    def state_term(self, z: np.ndarray, i: int, dtau: float) -> np.ndarray:
        tau_next = (i + 1) * dtau
        omega = models.lamperti_inverse(self.model, Measure.RISK_NEUTRAL, z, tau_next)
        return dtau * omega * omega


URecursion = GeometricAverageRecursion | IntegratedSquareRecursion


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------


def _deposit_columns(p_z: np.ndarray, u_targets: np.ndarray, ugrid: UGrid) -> np.ndarray:
    """Spread each z-column's density between the u-nodes bracketing its target."""
    m_u = ugrid.m_u
    pos = (u_targets - ugrid.u_min) / ugrid.du
    idx_lo = np.clip(np.floor(pos).astype(np.int64), 0, m_u - 1)
    idx_hi = np.minimum(idx_lo + 1, m_u - 1)
    w_hi = np.clip(pos - idx_lo, 0.0, 1.0)
    cols = np.arange(len(u_targets))
    out = np.zeros((m_u, len(u_targets)))
    np.add.at(out, (idx_lo, cols), (1.0 - w_hi) * p_z / ugrid.du)
    np.add.at(out, (idx_hi, cols), w_hi * p_z / ugrid.du)
    return out


def joint_init(
    model,
    measure: Measure,
    recursion: URecursion,
    zgrid: SpatialGrid,
    ugrid: UGrid,
    kernel: CirculantKernel,
) -> JointDensity:
    """Joint density after the first step from the delta at (u, z) = (0, 0).

    The z-marginal is the drift-free Gaussian kernel (as in the 1-D engine);
    along u the mass of each z-column sits at U^1(z^1) = state_term(z, i=0).
    """
    dtau = kernel.dtau
    p1 = initial_density(zgrid, dtau)
    u1 = recursion.state_term(zgrid.nodes, 0, dtau)
    vals = _deposit_columns(p1.values, np.asarray(u1, dtype=float), ugrid)
    return JointDensity(values=vals, tau=dtau, step_index=1, du=ugrid.du, dz=zgrid.dz)


def joint_step(
    J: JointDensity,
    model,
    measure: Measure,
    recursion: URecursion,
    zgrid: SpatialGrid,
    ugrid: UGrid,
    kernel: CirculantKernel,
    workspace: StepWorkspace | None = None,
) -> JointDensity:
    """Advance the joint density one step: z-convolution, then u-remap.

    Phase 1 applies the 1-D drift remap and Gaussian convolution to every
    u-row (rows are independent).  Phase 2 re-bins each z-column through the
    inverted recursion u^i = (u^{i+1} - b_i(z)) / a_i with the conservative
    remap, which realizes the Jacobian 1/a_i as the pre-image cell-width
    ratio; mass crossing the u-grid boundary is dropped and accounted in the
    mass deficit.
    """
    i = J.step_index
    if i < 1:
        raise ValueError("joint density must be at step >= 1")
    dtau = kernel.dtau
    tau_i = i * dtau

    ws = workspace if workspace is not None else build_workspace(model, measure, zgrid, tau_i, dtau)
    mid = zgrid.dz * _convolve_rows(kernel, _remap_rows(J.values, ws))
    np.maximum(mid, 0.0, out=mid)

    a = recursion.shrink(i)
    if a <= 0.0:
        raise ValueError(f"recursion not invertible at step {i}")
    b = np.asarray(recursion.state_term(zgrid.nodes, i, dtau), dtype=float)
    # pre-image edge positions along u, in index units, one column per z node
    if _kernels.HAVE_NUMBA:
        base = (ugrid.edges / a - ugrid.edges[0]) / ugrid.du
        offset = -b / (a * ugrid.du)
        vals_t = np.ascontiguousarray(mid.T)
        out_t = np.empty_like(vals_t)
        _kernels.remap_rows_affine(vals_t, base, offset, out_t)
        pulled = np.ascontiguousarray(out_t.T)
    else:
        pos = ((ugrid.edges[:, None] - b[None, :]) / a - ugrid.edges[0]) / ugrid.du
        pulled = conservative_remap(mid.T, pos.T).T
    return JointDensity(values=pulled, tau=(i + 1) * dtau, step_index=i + 1, du=ugrid.du, dz=zgrid.dz)


def _half_corrected(J: JointDensity, model, measure, zgrid: SpatialGrid, dtau: float) -> JointDensity:
    """Trailing half-step z-remap applied per u-row (reported states only)."""
    ws_half = build_workspace(model, measure, zgrid, J.tau, dtau / 2.0)
    return JointDensity(
        values=_remap_rows(J.values, ws_half),
        tau=J.tau,
        step_index=J.step_index,
        du=J.du,
        dz=J.dz,
    )


def joint_propagate(
    model,
    measure: Measure,
    recursion: URecursion,
    zgrid: SpatialGrid,
    ugrid: UGrid,
    timegrid: TimeGrid,
    report_taus: list[float] | None = None,
):
    """Propagate the joint density; O(n m_u m_z log m_z) work.

    Returns the density at tau_end, or a list of snapshots when
    ``report_taus`` is given (each taken at the nearest step and labelled
    with the actual grid time).  Reported states carry the trailing
    half-step z-remap of the 1-D engine (applied per u-row), so their
    z-marginals match the 1-D result.
    """
    model = _resolve_model(model, zgrid)
    dtau, n = timegrid.dtau, timegrid.n
    want: dict[int, int] = {}
    if report_taus is not None:
        for pos, t in enumerate(report_taus):
            i = round(t / dtau)
            if not 1 <= i <= n:
                raise ValueError(f"requested time {t} outside (0, {timegrid.tau_end}]")
            want.setdefault(i, pos)

    kernel = build_kernel(zgrid, dtau)
    J = joint_init(model, measure, recursion, zgrid, ugrid, kernel)
    reuse = not models.drift_is_time_dependent(model, measure)
    ws: StepWorkspace | None = None
    snaps: list[JointDensity | None] = [None] * (len(report_taus) if report_taus else 0)
    if 1 in want:
        snaps[want[1]] = _half_corrected(J, model, measure, zgrid, dtau)
    for i in range(1, n):
        if ws is None or not reuse:
            ws = build_workspace(model, measure, zgrid, i * dtau, dtau)
        J = joint_step(J, model, measure, recursion, zgrid, ugrid, kernel, workspace=ws)
        if i + 1 in want:
            snaps[want[i + 1]] = _half_corrected(J, model, measure, zgrid, dtau)
    if report_taus is None:
        return _half_corrected(J, model, measure, zgrid, dtau)
    missing = [report_taus[k] for k, v in enumerate(snaps) if v is None]
    if missing:
        raise ValueError(f"snapshots not reached: {missing}")
    return snaps


def marginal_z(J: JointDensity) -> DensityVector:
    """z-marginal du * sum over u-rows, as a 1-D density vector."""
    return DensityVector(values=J.du * J.values.sum(axis=0), tau=J.tau, dz=J.dz)


def marginal_u(J: JointDensity) -> DensityVector:
    """u-marginal dz * sum over z-columns (values indexed by the u-grid)."""
    return DensityVector(values=J.dz * J.values.sum(axis=1), tau=J.tau, dz=J.du)
