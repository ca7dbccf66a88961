"""
Sequential Cauchy combination (SCC) familywise-error control with
benchmark procedures, a Monte Carlo harness and drift-burst / factor-alpha
test generators.
"""

from .errors import (ConfigError, DataError, DomainError, FactorizationError,
                     ReplicationAbortError)
from .procedures import (PROCEDURES, CauchyWeights, PValueSet, RejectionReport, bonferroni,
                         gcc_pvalue, gcc_statistic, gumbel_procedure, hochberg, holm, hommel,
                         rejection_matrix, run_procedure, scc_procedure, scc_pvalues,
                         two_sided_pvalues)
from .statdist import CorrelationSpec, RngStream, build_correlation

__version__ = "1.0.0"

__all__ = [
    "PROCEDURES",
    "CauchyWeights",
    "ConfigError",
    "CorrelationSpec",
    "DataError",
    "DomainError",
    "FactorizationError",
    "PValueSet",
    "RejectionReport",
    "ReplicationAbortError",
    "RngStream",
    "bonferroni",
    "build_correlation",
    "gcc_pvalue",
    "gcc_statistic",
    "gumbel_procedure",
    "hochberg",
    "holm",
    "hommel",
    "rejection_matrix",
    "run_procedure",
    "scc_procedure",
    "scc_pvalues",
    "two_sided_pvalues",
]
