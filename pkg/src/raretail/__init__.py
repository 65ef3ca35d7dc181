"""Asymptotics, sampling and reference oracles for high-dimensional rare events
whose most likely point lies on the boundary of the event."""

__version__ = "0.1.0"

from .errors import (ConditionFailure, ConfigError, ExpansionRegimeError, OracleError,
                     RareTailError)
from .expansion import (ExpansionResult, a1_const_g, a1_gauss, a1_general, a1_quadratic, assemble_c,
                        expand, log_leading_term, nu1, rem1_rate)
from .gauss import GaussBoundarySpec, gauss_prob, tight_bound_demo
from .jets import Jet, WatsonBoundInputs, watson_coeffs, watson_expand_1d, watson_remainder_bound
from .oracle import (OracleResult, log_normal_tail, oracle_graph_mc, oracle_low_d, oracle_quadratic,
                     oracle_radial)
from .problem import (ConditionReport, DerivBounds, GeneralProblem, NormalizedProblem, PsiSupBounds,
                      QData, check_conditions, check_conditions_gauss, gauss_compose, normalize_general)
from .sampler import (Frame, HatPiModel, ISEstimate, SampleBatch, coverage, hatpi_logpdf, is_estimate,
                      sample, sample_general, tv_rate)
from .symtensor import HMetric, OpNorm, h_opnorm, symmetrize, whiten

__all__ = [name for name in dir() if not name.startswith("_")]
