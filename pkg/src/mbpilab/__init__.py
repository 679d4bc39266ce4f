"""mbpilab: numerical laboratory for critical Markov branching processes
with immigration under heavy-tailed offspring and immigration laws."""

__version__ = "0.1.0"

from .errors import ModelError, NumericsError, PreconditionError
from .laws import (BranchingLaw, ImmigrationLaw, ModelSpec,
                   make_stable_immigration, make_stable_offspring,
                   stable_model, validate_law)
from .rvcalc import (RVContext, SlowlyVaryingSpec, check_sv_remainder,
                     sv_by_name, sv_constant, sv_log, sv_perturbed)
from .kernel import (GFValue, compute_P, compute_P_i, exact_R, solve_F,
                     transition_probs, transition_rows)
from .invariants import (InvariantMeasure, check_invariance, compute_B,
                         compute_U, compute_pi, extract_measure, ratio_limits,
                         series_coefficients)
from .asymptotics import (RateFit, check_lemma1, check_lemma2, check_lemma3,
                          check_lemma4, fit_loglog, rate_corollary1,
                          rate_theorem1, rate_theorem2, uniformity_ratio)
from .sim import AliasTable, SimConfig, SimResult, estimate_pmf, simulate_path

__all__ = [
    "ModelError", "NumericsError", "PreconditionError",
    "BranchingLaw", "ImmigrationLaw", "ModelSpec",
    "make_stable_offspring", "make_stable_immigration", "stable_model",
    "validate_law",
    "RVContext", "SlowlyVaryingSpec", "check_sv_remainder",
    "sv_by_name", "sv_constant", "sv_log", "sv_perturbed",
    "GFValue", "solve_F", "exact_R", "compute_P", "compute_P_i",
    "transition_probs", "transition_rows",
    "InvariantMeasure", "compute_U", "compute_B", "compute_pi",
    "extract_measure", "check_invariance", "ratio_limits",
    "series_coefficients",
    "RateFit", "fit_loglog", "rate_theorem1", "rate_theorem2",
    "rate_corollary1", "uniformity_ratio",
    "check_lemma1", "check_lemma2", "check_lemma3", "check_lemma4",
    "AliasTable", "SimConfig", "SimResult", "simulate_path", "estimate_pmf",
]
