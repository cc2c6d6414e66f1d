"""Opinion dynamics on signed weighted digraphs with stubborn agents.

Implements the opposing-rule signed Friedkin-Johnsen update on arbitrary
digraphs: ingestion and validation of signed edge lists, classification of
agents through the condensation graph (opinion leaders vs followers,
balanced vs unbalanced sinks), simulation with convergence detection,
closed-form steady states, and absolute influence centrality.
"""

from .errors import GraphFormatError, InternalInconsistencyError, NumericalError
from .graph import (
    SignedDigraph,
    ValidationIssue,
    ValidationReport,
    ensure_self_loops,
    flip_edges,
    parse_edge_list,
    read_initial_opinions,
    read_stubbornness,
    serialize_edge_list,
    validate,
    weak_components,
)
from .topology import (
    AgentClassification,
    BalanceResult,
    CanonicalOrdering,
    CondensationDag,
    Role,
    SccPartition,
    SinkClass,
    SinkInfo,
    balance_check,
    canonical_ordering,
    classification_to_dict,
    classify_agents,
    condense,
    strongly_connected_components,
)
from .dynamics import (
    Trajectory,
    UpdateSystem,
    build_update_system,
    row_normalized,
    simulate,
    step,
)
from .solve import (
    InfluenceResult,
    NetworkAnalysis,
    Regime,
    SinkSolution,
    SolutionKind,
    SpectralReport,
    absolute_centrality,
    analyze_network,
    influence,
    influence_matrix,
    solve_followers,
    solve_sink,
    spectral_check,
    steady_state,
)

__version__ = "0.1.0"

__all__ = [
    "GraphFormatError",
    "InternalInconsistencyError",
    "NumericalError",
    "SignedDigraph",
    "ValidationIssue",
    "ValidationReport",
    "parse_edge_list",
    "serialize_edge_list",
    "ensure_self_loops",
    "flip_edges",
    "read_stubbornness",
    "read_initial_opinions",
    "validate",
    "weak_components",
    "Role",
    "SinkClass",
    "SccPartition",
    "CondensationDag",
    "BalanceResult",
    "SinkInfo",
    "AgentClassification",
    "CanonicalOrdering",
    "strongly_connected_components",
    "condense",
    "balance_check",
    "classify_agents",
    "canonical_ordering",
    "classification_to_dict",
    "UpdateSystem",
    "Trajectory",
    "row_normalized",
    "build_update_system",
    "step",
    "simulate",
    "Regime",
    "SpectralReport",
    "SolutionKind",
    "SinkSolution",
    "InfluenceResult",
    "NetworkAnalysis",
    "spectral_check",
    "solve_sink",
    "solve_followers",
    "influence_matrix",
    "absolute_centrality",
    "steady_state",
    "analyze_network",
    "influence",
    "__version__",
]
