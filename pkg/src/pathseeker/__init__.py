"""Pathway graph retrieval (PCST subgraphs, linearized observations) and a browsing agent."""

from .agent import Action, ActionKind, AgentConfig, TaskInstruction, Toggles, Trajectory, parse_action, run_agent
from .encoding import SessionLedger, dfs_order, remove_seen, triple_to_ordered_text, triple_to_text
from .pcst import (
    PcstInstance,
    SubgraphResult,
    SubgraphRetriever,
    neighbor_subgraph,
    search_subgraph,
    solve_pcst,
    solve_pcst_exact,
)
from .relevance import BM25Scorer, PrizeMap, Query, score_graph, score_item, tokenize
from .store import Entry, EntryKey, PathwayGraph, Triple, load_graph, load_graph_files, neighbors, stats

__version__ = "0.1.0"

__all__ = [
    "Action", "ActionKind", "AgentConfig", "BM25Scorer", "Entry", "EntryKey", "PathwayGraph",
    "PcstInstance", "PrizeMap", "Query", "SessionLedger", "SubgraphResult", "SubgraphRetriever",
    "TaskInstruction", "Toggles", "Trajectory", "Triple", "dfs_order", "load_graph", "load_graph_files",
    "neighbor_subgraph", "neighbors", "parse_action", "remove_seen", "run_agent", "score_graph",
    "score_item", "search_subgraph", "solve_pcst", "solve_pcst_exact", "stats", "tokenize",
    "triple_to_ordered_text", "triple_to_text",
]
