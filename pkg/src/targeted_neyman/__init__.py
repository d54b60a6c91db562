"""Targeted Neyman estimation of average treatment effects.

Riesz representer estimation by Bregman-divergence minimisation (squared and
KL losses), its covariate-balancing duals, nearest-neighbour matching as a
special case, TMLE fluctuation, and the resulting ATE estimators.
"""

__version__ = "0.1.0"

from .balancing import (
    BalanceReport,
    UnitWeights,
    balance_residual_eb,
    balance_residual_sbw,
    solve_eb_dual,
    solve_sbw_dual,
)
from .basis import BasisSpec, build_voronoi_basis, design, eval_basis, make_basis
from .bregman import (
    KL,
    SQUARED,
    ConvexSpec,
    FitConfig,
    RieszWeightPair,
    bregman_pointwise,
    empirical_objective,
    fit_riesz,
)
from .data import Dataset, DgpSpec, get_dgp, load_csv, simulate, write_csv
from .estimators import (
    EstimateReport,
    error_decomposition,
    estimate_ipw,
    estimate_onestep,
    estimate_plugin,
    estimate_tmle,
    neyman_error,
    neyman_score,
)
from .matching import (
    estimate_matching,
    match_units,
    matching_weights,
    verify_matching_riesz_equivalence,
)
from .outcome import OutcomeModel, fit_outcome, tmle_update
