"""Top-k node, edge and triple lookups over the pathway graph."""

from __future__ import annotations

from dataclasses import dataclass

from .relevance import BM25Scorer, Query, entry_texts, tokenize
from .store import EntryKey, PathwayGraph

DEFAULT_TOP_K = 10


@dataclass(frozen=True)
class Hit:
    item: object  # EntryKey for nodes, triple index for edges
    score: float


def _top(scores, items, k: int) -> list[Hit]:
    ranked = sorted(
        ((float(s), i) for i, s in enumerate(scores) if s > 0), key=lambda p: (-p[0], p[1])
    )
    return [Hit(items[i], s) for s, i in ranked[:k]]


def search_nodes(graph: PathwayGraph, query: Query | str, scorer: BM25Scorer, k: int = DEFAULT_TOP_K) -> list[Hit]:
    keys = list(graph.entries)
    scores = scorer.score_documents(query)[: len(keys)]
    return _top(scores, keys, k)


def search_edges(graph: PathwayGraph, query: Query | str, scorer: BM25Scorer, k: int = DEFAULT_TOP_K) -> list[Hit]:
    scores = scorer.score_documents(query)[len(graph.entries):]
    return _top(scores, list(range(len(graph.triples))), k)


def search_triples(
    graph: PathwayGraph,
    query: Query | str,
    endpoint_query: Query | str,
    scorer: BM25Scorer,
    k: int = DEFAULT_TOP_K,
) -> list[Hit]:
    """Edges ranked by ``query``, keeping those with an endpoint that mentions ``endpoint_query``."""
    wanted = set(tokenize(endpoint_query.raw if isinstance(endpoint_query, Query) else endpoint_query))
    if not wanted:
        return search_edges(graph, query, scorer, k)
    texts = dict(zip(graph.entries, entry_texts(graph)))
    match: dict[EntryKey, bool] = {}

    def mentions(key: EntryKey) -> bool:
        if key not in match:
            match[key] = bool(wanted & set(tokenize(texts[key])))
        return match[key]

    scores = scorer.score_documents(query)[len(graph.entries):]
    scores = [s if mentions(t.head) or mentions(t.tail) else 0.0 for s, t in zip(scores, graph.triples)]
    return _top(scores, list(range(len(graph.triples))), k)
