"""Finite-volume pricing of two-asset European and American options.

The spatial schemes pair an MPFA L-method discretisation of the
anisotropic diffusion block with first- or second-order upwind convection;
near the degenerate price axes the fluxes switch to fitted finite-volume
approximations.  American early exercise is handled by a power penalty
term and a theta-Euler/Newton march.
"""

from .assembly import (
    Scheme,
    StencilOperator,
    assemble_convection,
    assemble_diffusion,
    assemble_operator,
    assemble_system,
    dump_matrix,
)
from .fitted import FittedEdgeFlux, fitted_row, fitted_south_flux, fitted_west_flux
from .grid import (
    Axis1D,
    Grid2D,
    InteractionVolumeGeometry,
    build_grid,
    build_uniform_grid,
    interaction_volume,
)
from .harness import (
    ErrorTable,
    ReferenceMode,
    RunConfig,
    dump_surface,
    interpolate_surface,
    l2_relative_error,
    load_surface,
    run_table,
    write_outputs,
)
from .lmpfa import (
    LocalTriangleSystem,
    SingularLocalSystemError,
    Transmissibility,
    gradient_of_linear,
    transmissibility,
    transmissibility_field,
    triangle_local_system,
)
from .model import (
    AMERICAN,
    BASKET_PUT,
    CALL_ON_MAX,
    EUROPEAN,
    CellTensor,
    ConvectionField,
    MarketParams,
    PenaltyParams,
    PriceSurface,
    ProblemSpec,
    averaged_tensor,
    averaged_tensor_field,
    boundary_value,
    payoff_surface,
    payoff_value,
)
from .psor import solve_american_lcp, solve_lcp
from .reference import (
    AnalyticInputs,
    BivariateNormalQuery,
    analytic_price,
    analytic_surface,
    bivariate_cdf,
    black_scholes_call,
    mc_price,
)
from .timestepper import (
    SolverError,
    SolverSettings,
    StepDiagnostics,
    TimeGrid,
    penalty_jacobian_diag,
    penalty_term,
    solve,
    step,
)
from .upwind import upwind1_row, upwind2_row

__version__ = "0.1.0"
