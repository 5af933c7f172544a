"""Robustness certificates for smoothed GNN node classifiers under graph injection."""
from .certify import (CertificateReport, CertProblem, LogCoefficients, build_bqclp, build_lp1, build_lp2,
                      certify_collective, certify_samplewise, interference_bound, is_certified, solve_exact)
from .classifier import BaseClassifier, ForwardPassModel, SyntheticClassifier, predict_all
from .graph import (AttackVariables, Graph, ThreatModel, path_counts_to_target, read_edge_list,
                    second_order_counts_block)
from .lp import LinearProgram, LpSolution, dual_upper_bound, solve
from .smoothing import SampledGraph, SmoothingParams, sample, survival_probability
from .votes import (GapVector, VoteStats, binomial_lower_bound, binomial_upper_bound, estimate_votes,
                    gaps_from_votes, read_gaps_csv, write_gaps_csv)

__version__ = "0.1.0"
