"""Exact dual geometry of second-order-cone input convex networks.

The package evaluates these convex models, reads their gradients and
subdifferentials out of optimal multiplier branches in closed form, builds
branch-local quadratic models, and runs white-box first- and second-order
inference against finite-difference twins.
"""

from .curvature import (
    CurvatureModel,
    branch_signature,
    hessian,
    local_affine_constants,
    local_gradient,
    quadratic_model_residual,
)
from .dual import (
    DualBranch,
    ReluBranchBox,
    branch_box,
    canonical,
    dual_value,
    extreme_branches,
    feasibility_violation,
    masked_relu_multipliers,
    readout,
    sample_optimal_branches,
    upper_bounds,
)
from .errors import (
    DegenerateInputError,
    InfeasibleBranchError,
    ModelFormatError,
    NonFiniteError,
    SocIcnnError,
    SolveFailureError,
    TooManyDegeneraciesError,
    ValidationError,
)
from .geometry import (
    DirectionalDerivativeResult,
    canonical_gap_fraction,
    directional_derivative,
    gradient,
    subdifferential_sample,
)
from .inference import (
    InferenceConfig,
    InferenceReport,
    ReadoutDiagnostics,
    baseline_fd_gd,
    baseline_fd_newton,
    objective,
    readout_diagnostics,
    whitebox_gd,
    whitebox_newton,
)
from .model import (
    ArchSpec,
    DEFAULT_TAU,
    DegeneracyReport,
    DegeneracySpec,
    ForwardTrace,
    SocIcnnParams,
    build_degenerate_2d,
    build_random,
    conic_margin,
    degeneracy_report,
    forward,
    load_model,
    relu_margin,
    save_model,
    validate,
)
from .oracle import convexity_probe, fd_directional, fd_gradient, fd_hessian

__version__ = "0.1.0"
