"""Core-selecting combinatorial auction pricing: winner determination,
Vickrey and core-projection payment rules, minimum-revenue-core prices, an
exact solver for the star network setting, and bid-sweep tools measuring
how fast a winner's payment rises with its own bid."""

from .auction import (
    LEX,
    AuctionInstance,
    Bid,
    Outcome,
    TieBreakPolicy,
    WdpResult,
    check_efficient,
    is_feasible,
    solve_wdp,
    vickrey_prices,
)
from .core import (
    CoreConstraint,
    CorePolytope,
    blocking_coalitions_bruteforce,
    enumerate_core_constraints,
    find_most_violated_coalition,
    initial_polytope,
    is_in_core,
)
from .errors import (
    BoundaryPointError,
    ConstructionError,
    InvalidInputError,
    NumericalFailure,
    PreconditionError,
    PricingError,
    RangeInvalidError,
    ResourceLimitError,
)
from .mid import (
    LowerBoundScenario,
    MidReport,
    PriceCurve,
    compute_mid,
    generate_lower_bound_scenario,
    sweep_generic_curve,
    sweep_star_curve,
    verify_lower_bound,
)
from .pricing import (
    MrcResult,
    RevenueCertificate,
    min_core_revenue,
    mrc_quadratic_price,
    project_onto_core,
    rule_prices,
)
from .qp import KKTCertificate, ProjectionResult, project_onto_polytope, verify_kkt
from .star import (
    StarInstance,
    StarSolution,
    expanded_core_polytope,
    phi,
    sigma_right_derivative,
    solve_sigma,
    star_core_price,
    star_mrc_price,
    star_to_instance,
    star_vickrey,
)

__version__ = "0.1.0"
