"""Fast-convolution transition densities and option pricing for multiplicative-noise diffusions."""

from .engine import (
    CirculantKernel,
    DensityVector,
    NonMonotoneRemapError,
    SpatialGrid,
    StepWorkspace,
    TimeGrid,
    build_grid,
    build_kernel,
    build_workspace,
    density_in_x,
    propagate,
    step,
    time_grid_for,
    toeplitz_apply,
)
from .joint import (
    GeometricAverageRecursion,
    IntegratedSquareRecursion,
    JointDensity,
    UGrid,
    joint_init,
    joint_propagate,
    joint_step,
    marginal_u,
    marginal_z,
)
from .mc import McConfig, McEstimate, McHistogram, McSamples, estimate_payoff, histogram, simulate
from .models import (
    ConstantLevel,
    DomainError,
    ExpDecayLevel,
    ExpGrowthLevel,
    Measure,
    PiecewiseParams,
    QuadraticParams,
    VnbParams,
    drift_x,
    drift_z,
    diffusion_x,
    integral_time,
    integral_time_inverse,
    lamperti_drift_fd,
    lamperti_forward,
    lamperti_inverse,
    piecewise_pdf,
    quadratic,
    smooth_abs,
    smooth_abs_derivative,
    stationary_pdf,
)
from .pricing import (
    OptionContract,
    PricingResult,
    VolSurface,
    bs_price,
    bs_put,
    build_surface,
    implied_vol,
    price_asian,
    price_vanilla_piecewise,
    price_vnb,
)

__version__ = "0.1.0"
