"""Equilibrium stopping strategies for time-inconsistent objectives
``E[f(X_tau)] + g(E[h(X_tau)])`` on finite absorbing Markov chains."""

from ._kernels import BACKEND
from .chain import (
    HittingQuery, MarkovModel, State, ValidationReport, hit_probability, model_from_dict,
    model_to_dict, require_valid, validate, with_killing,
)
from .dynamics import (
    AdjustmentTrace, ProbeReport, ResponseGraph, gamma_bar, myopic, probe_global, probe_local,
    probe_strong_local, response_graph,
)
from .equilibrium import (
    BestResponseSet, EquilibriumReport, best_response, check_characterizing, check_equilibrium,
    enumerate_pure, equivalent, optimal_stopping_value, purify,
)
from .errors import (
    CapabilityError, CapacityError, EqstopError, IllPosedError, ModelError, ParameterError,
    PreconditionError,
)
from .evaluation import Evaluation, evaluate, evaluate_series, k_value, simulate
from .payoff import (
    GDescriptor, PayoffSpec, affine_g, make_mean_variance, make_payoff, make_variance,
    mean_variance_g, neg_square_g, piecewise_g, shifted_positive_part_g, zero_g,
)
from .problems import (
    paper_example, skipfree_model, threshold_H, threshold_scan, variance_walk,
)

__version__ = "0.1.0"
