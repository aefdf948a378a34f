"""Chart-level toolkit for tautological control systems."""

__version__ = "0.1.0"

from .equilin import (
    ControllabilityVerdict,
    EquilibriumControls,
    LinearizationAtEquilibrium,
    equilibrium_linearization,
    find_equilibrium_controls,
    invariant_subspace,
    is_linearly_controllable,
)
from .errors import ChartEscape, DomainError, ExprSyntaxError, NotAnEquilibrium, NumericError, ValidationError
from .expr import Expr, MultiIndex, diff, eval_expr, parse_expr, render
from .flow import (
    OpenLoopSchedule,
    Piece,
    Trajectory,
    integrate_open_loop,
    jacobian_fd_oracle,
    parse_schedule,
    variational_flow,
)
from .jets import (
    CompactBox,
    Jet,
    VectorFieldChart,
    WeightSeq,
    analytic_radius,
    jet_eval,
    jet_fibre_norm,
    seminorm_cm,
    seminorm_lip,
    seminorm_omega,
)
from .lift import linearization_field, tangent_lift, vertical_lift
from .simplex import zero_in_convex_hull
from .srgeo import CometricSpec, curve_energy, geodesic_shoot, hamiltonian_max
from .system import (
    ControlSet,
    LocalSelection,
    OpenSubset,
    SystemSpec,
    glue_check,
    inclusion_at,
    load_system,
    render_system,
)

__all__ = [name for name in dir() if not name.startswith("_")]
