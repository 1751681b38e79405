"""Behavioural (CPT) portfolio choice in factor-driven diffusion markets."""

from .cpt import (
    Benchmark,
    CptReport,
    DistortionPair,
    IdentityDistortion,
    PowerDistortion,
    PowerUtility,
    Preferences,
    TverskyKahnemanDistortion,
    UtilityPair,
    empirical_choquet,
    evaluate,
    validate_preferences,
    wellposedness_bound,
)
from .market import (
    Affine,
    Constant,
    MarketModel,
    MatrixFunctional,
    RunningExtremum,
    SmoothBounded,
    TimeAffine,
    TimeIntegral,
    UserFunctional,
    VectorFunctional,
    coefficient_at,
    validate_model,
)
from .paths import (
    PathBundle,
    Policy,
    RelaxedControl,
    SimulationGrid,
    constant_policy,
    holder_increment_check,
    resample_with_crn,
    simulate,
    sup_norm_stats,
)
from .optimize import OptimizationResult, PolicyFamily, evaluate_policy, optimize
from .config import RunConfig, load_config, parse_config
from .verify import VerifyReport, run_suites
from .relaxed import (
    ControlSetPoint,
    SetContext,
    convexity_witness,
    dominance_transform,
    membership,
    norm_bound,
    support_function,
)

__version__ = "0.1.0"
