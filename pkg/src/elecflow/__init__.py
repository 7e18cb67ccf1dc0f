"""Electrical-flow interior-point method for unit-capacity maximum flow via bipartite b-matching."""

from .errors import (
    DemandError,
    DimensionError,
    ElecflowError,
    EmbeddingError,
    InfeasibleFlowError,
    InvariantFault,
    MissingCapacityError,
    NotMaximumError,
    ParseError,
    ResistanceError,
)
from .graph import DirectedMultigraph, net_inflow, read_dimacs, write_dimacs
from .kernels import BACKEND
from .oracles import brute_force_perfect_bmatching, dinic_maxflow, hopcroft_karp, max_bmatching
from .pipeline import SolverConfig, decide_perfect, solve_bmatching, solve_maxflow
from .reduction import BMatchingInstance, maxflow_to_bmatching, read_bmatching, write_bmatching
from .report import Auditor, RunReport, audit_trace
from .rounding import augment_to_perfect, round_bmatching, round_flow, round_perfect

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Auditor",
    "BMatchingInstance",
    "DemandError",
    "DimensionError",
    "DirectedMultigraph",
    "ElecflowError",
    "EmbeddingError",
    "InfeasibleFlowError",
    "InvariantFault",
    "MissingCapacityError",
    "NotMaximumError",
    "ParseError",
    "ResistanceError",
    "RunReport",
    "SolverConfig",
    "audit_trace",
    "augment_to_perfect",
    "brute_force_perfect_bmatching",
    "decide_perfect",
    "dinic_maxflow",
    "hopcroft_karp",
    "max_bmatching",
    "maxflow_to_bmatching",
    "net_inflow",
    "read_bmatching",
    "read_dimacs",
    "round_bmatching",
    "round_flow",
    "round_perfect",
    "solve_bmatching",
    "solve_maxflow",
    "write_bmatching",
    "write_dimacs",
]
