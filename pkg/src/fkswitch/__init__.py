"""Regime-switching Feynman-Kac expectations by Picard iteration.

The value ``v(t, x, i) = E[e^{-int r(alpha)} phi(X_T, alpha_T) | X_t = x, alpha_t = i]``
of a regime-switching Ornstein-Uhlenbeck log-price is computed as ``D * H``,
where ``H`` is the fixed point of a contraction built from the frozen-regime
Gaussian transition. Monte Carlo and finite-difference solvers are included
as independent cross-checks.
"""

from .analytics import (
    dampening_conditional_expectation,
    h0_term,
    normal_cdf,
    ou_moments,
    supermartingale_certificate,
    transition_density,
    v0_call,
)
from .config import RunConfig, Settings, load_config, parse_config
from .errors import (
    CertificateFailed,
    ConfigError,
    FkSwitchError,
    GridTooCoarse,
    MaxIterExceeded,
    ModelError,
    NumericalError,
    QuadratureOverflow,
    RelationViolated,
    RhoNotContractive,
    UnstableParameters,
)
from .fixed_point import (
    PicardReport,
    TransitionOperator,
    apply_T,
    contraction_factor,
    error_bounds,
    picard_solve,
    price,
)
from .grid import GridFunction, GridSpec, sup_norm
from .model import (
    DampeningSpec,
    GeneratorMatrix,
    PayoffSpec,
    PricingQuery,
    RegimeOUModel,
    build_model,
    payoff_eval,
    validate_generator,
)
from .monte_carlo import McEstimate, mc_price, simulate_regime_path, simulate_x_on_path
from .pde import PdeGrid, pde_price, pde_solve

__version__ = "0.1.0"
