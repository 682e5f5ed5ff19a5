"""Small-noise experiments: central limit, tails, rate function, controlled processes."""

from .clt import CLTResult, clt_experiment
from .common import ErrorStatistic, ExperimentFailure, SlopeFit, fit_loglog, mean_se
from .controlled import (
    ControlledResult,
    ModulusResult,
    MomentAudit,
    controlled_convergence,
    increment_modulus,
    moment_audit,
    path_moments,
)
from .rate import RateSolution, RateSweep, SkeletonControlProblem, rate_function, rate_sweep, richardson_zero
from .tails import TailEstimate, mdp_tail_experiment, secant_decay, skeleton_tilt

__all__ = [
    "CLTResult", "clt_experiment", "ErrorStatistic", "ExperimentFailure", "SlopeFit", "fit_loglog", "mean_se",
    "ControlledResult", "ModulusResult", "MomentAudit", "controlled_convergence", "increment_modulus",
    "moment_audit", "path_moments", "RateSolution", "RateSweep", "SkeletonControlProblem", "rate_function",
    "rate_sweep", "richardson_zero", "TailEstimate", "mdp_tail_experiment", "secant_decay", "skeleton_tilt",
]
