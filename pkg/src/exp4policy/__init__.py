"""Contextual-bandit policy learning with exponential weighting over experts.

Finite expert classes run F-EXP4.P directly.  The infinite class of linear
eligibility score (LES) rules runs VC-EXP4.P: a uniform coarsening phase, an
exact hyperplane-arrangement enumeration that reduces the class to one rule
per distinct assignment pattern, then F-EXP4.P on the reduced class.
"""

__version__ = "0.1.0"

from .arrangement import CellCatalog, coarsen_les, enumerate_cells, harding
from .bench import (
    WelfareReport,
    correct_classification_series,
    empirical_regret,
    empirical_welfare,
    fixed_policy,
    make_report,
    regret_vs_population,
    tau_ewm,
)
from .core import (
    AssumptionViolation,
    DimensionError,
    Exp4Error,
    Expert,
    LesRule,
    MissingCounterfactuals,
    TableExpert,
    Trajectory,
    UniformRandom,
    recommend,
)
from .envs import LogNormalDesign, TabularEnvironment, difficulty, draw_lognormal, load_tabular
from .exp4p import TuningParams, compute_tuning, policy_weights, run_f_exp4p
from .lpfeas import SignedConstraint, Status, solve_feasibility
from .vcexp4p import Les, LogArg, PhasePlan, Vc, compute_tau, run_vc_exp4p

__all__ = [
    "AssumptionViolation", "CellCatalog", "DimensionError", "Exp4Error", "Expert", "Les", "LesRule", "LogArg",
    "LogNormalDesign", "MissingCounterfactuals", "PhasePlan", "SignedConstraint", "Status", "TableExpert",
    "TabularEnvironment", "Trajectory", "TuningParams", "UniformRandom", "Vc", "WelfareReport", "coarsen_les",
    "compute_tau", "compute_tuning", "correct_classification_series", "difficulty", "draw_lognormal",
    "empirical_regret", "empirical_welfare", "enumerate_cells", "fixed_policy", "harding", "load_tabular",
    "make_report", "policy_weights", "recommend", "regret_vs_population", "run_f_exp4p", "run_vc_exp4p",
    "solve_feasibility", "tau_ewm",
]
