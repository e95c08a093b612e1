"""Single-factorization inexact interior point method for convex QP."""

from ._backend import NAME as BACKEND
from .costmodel import kernel_costs, predict_variant, reconcile
from .factor import FactorHandle, FactorizationError, NotPositiveDefinite, cholesky_factor, ldlt_factor, solve, symbolic_cholesky
from .ipm import VARIANTS, IpmConfig, IpmResult, IpmState, ProblemScopeError, QpProblem, solve_qp
from .ledger import CostLedger
from .problems import GenerationError, ParseError, SyQpSpec, gen_syqp, parse_qps, write_qps
from .sparse import DiagMat, SparseMat

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CostLedger",
    "DiagMat",
    "FactorHandle",
    "FactorizationError",
    "GenerationError",
    "IpmConfig",
    "IpmResult",
    "IpmState",
    "NotPositiveDefinite",
    "ParseError",
    "ProblemScopeError",
    "QpProblem",
    "SparseMat",
    "SyQpSpec",
    "VARIANTS",
    "cholesky_factor",
    "gen_syqp",
    "kernel_costs",
    "ldlt_factor",
    "parse_qps",
    "predict_variant",
    "reconcile",
    "solve",
    "solve_qp",
    "symbolic_cholesky",
    "write_qps",
]
