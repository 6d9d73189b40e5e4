"""Robust bounds of supOU stationary statistics via upper/lower Tsallis Value-at-Risk.

The package models a long-memory series as a superposition of
Ornstein-Uhlenbeck processes with a Gamma distribution of reversion speeds
and a tempered stable jump measure, and bounds the inverse moment of the
reversion speeds -- which scales every stationary statistic -- under
ambiguity of the reversion measure.
"""

from .ambiguity import (
    AmbiguityScenario,
    accuracy_from_phi,
    duality_gap,
    scenario,
    scenario_sweep,
    worst_case_phi,
)
from .errors import (
    AlignmentError,
    BoundaryError,
    ConvergenceError,
    DegenerateError,
    DomainError,
    FeasibilityError,
    GridError,
    InfeasibleError,
    ParseError,
    SupOUError,
)
from .identify import (
    EmpiricalMoments,
    FitReport,
    TimeSeries,
    empirical_acf,
    empirical_moments,
    fit_levy,
    fit_reversion,
    identify,
    load_series,
    positive_lag_cutoff,
)
from .qcalc import q_exp, q_log, tsallis_divergence
from .reversion import (
    DiscreteMeasure,
    GammaReversionMeasure,
    TiltedMeasure,
    acf_theoretical,
    discretize,
    gamma_quantile,
    integrate_qexp_lower,
    integrate_qexp_upper,
    inverse_moment,
    tilt,
)
from .solver import (
    TsVaRProblem,
    TsVaRSolution,
    accuracy_sweep,
    descend,
    feasible_q_interval,
    gradient_terms_lower,
    gradient_terms_upper,
    lower_objective,
    upper_objective,
)
from .supou import (
    STATIONS,
    StationaryStats,
    SupOUModel,
    TemperedStableLevy,
    activity_class,
    distorted_inverse_moment,
    levy_moment,
    station,
    stationary_stats,
)

__version__ = "0.1.0"
