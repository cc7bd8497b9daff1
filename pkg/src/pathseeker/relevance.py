"""Lexical relevance: BM25 scoring of entries and triples against a keyword query."""

from __future__ import annotations

import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .store import PathwayGraph

_TOKEN_SPLIT = re.compile(r"[\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric characters. No stemming."""
    return [tok for tok in _TOKEN_SPLIT.split(text.lower()) if tok]


@dataclass(frozen=True)
class Query:
    raw: str
    tokens: tuple[str, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.tokens is None:
            object.__setattr__(self, "tokens", tuple(tokenize(self.raw)))

    @classmethod
    def from_keywords(cls, keywords: Iterable[str]) -> "Query":
        return cls(", ".join(k.strip() for k in keywords))

    @property
    def terms(self) -> tuple[str, ...]:
        """Distinct tokens in first-occurrence order; repeated keywords count once."""
        return tuple(dict.fromkeys(self.tokens))

    def __bool__(self) -> bool:
        return bool(self.tokens)


def _as_query(query: Query | str) -> Query:
    return query if isinstance(query, Query) else Query(query)


class BM25Scorer(BaseEstimator):
    """Okapi BM25 over a fixed document corpus.

    ``fit`` takes the raw document texts; ``transform`` maps queries to a
    (n_queries, n_documents) score matrix. ``score_text`` scores an arbitrary
    text against the fitted collection statistics.
    """

    def __init__(self, k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b

    def fit(self, documents: Sequence[str], y=None):
        if self.k1 < 0 or not 0 <= self.b <= 1:
            raise ValueError(f"invalid BM25 parameters k1={self.k1}, b={self.b}")
        docs = [tokenize(d) for d in documents]
        self.n_documents_ = len(docs)
        self.doc_len_ = np.array([len(d) for d in docs], dtype=float)
        self.avgdl_ = float(self.doc_len_.mean()) if len(docs) and self.doc_len_.sum() else 0.0
        postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
        for i, d in enumerate(docs):
            for tok, tf in Counter(d).items():
                postings[tok].append((i, tf))
        self.postings_ = dict(postings)
        self.idf_ = {tok: self._idf(len(p)) for tok, p in self.postings_.items()}
        return self

    def _idf(self, df: int) -> float:
        n = getattr(self, "n_documents_", 0)
        return max(0.0, math.log(1.0 + (n - df + 0.5) / (df + 0.5)))

    def idf(self, token: str) -> float:
        check_is_fitted(self, "idf_")
        return self.idf_.get(token, self._idf(0))

    def _saturation(self, tf: float, length: float) -> float:
        norm = 1.0 - self.b + (self.b * length / self.avgdl_ if self.avgdl_ > 0 else self.b)
        return tf * (self.k1 + 1.0) / (tf + self.k1 * norm)

    def score_documents(self, query: Query | str) -> np.ndarray:
        """Scores for every fitted document."""
        check_is_fitted(self, "idf_")
        query = _as_query(query)
        scores = np.zeros(self.n_documents_)
        for tok in query.terms:
            idf = self.idf_.get(tok)
            if not idf:
                continue
            for i, tf in self.postings_[tok]:
                scores[i] += idf * self._saturation(tf, self.doc_len_[i])
        return scores

    def score_text(self, text: str, query: Query | str) -> float:
        check_is_fitted(self, "idf_")
        query = _as_query(query)
        toks = tokenize(text)
        if not toks:
            return 0.0
        counts = Counter(toks)
        total = 0.0
        for tok in query.terms:
            tf = counts.get(tok)
            if tf:
                total += self.idf(tok) * self._saturation(tf, len(toks))
        return total

    def transform(self, queries: Iterable[Query | str]) -> np.ndarray:
        rows = [self.score_documents(q) for q in queries]
        return np.vstack(rows) if rows else np.zeros((0, self.n_documents_))


def score_item(item_text: str, query: Query | str, scorer: BM25Scorer) -> float:
    return scorer.score_text(item_text, query)


@dataclass(frozen=True)
class PrizeMap:
    node_prize: dict
    edge_prize: dict

    def __post_init__(self):
        for v in (*self.node_prize.values(), *self.edge_prize.values()):
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"prizes must be finite and non-negative, got {v}")

    @property
    def max_prize(self) -> float:
        return max([0.0, *self.node_prize.values(), *self.edge_prize.values()])

    def is_zero(self) -> bool:
        return self.max_prize == 0.0

    def scaled(self, factor: float) -> "PrizeMap":
        return PrizeMap(
            {k: v * factor for k, v in self.node_prize.items()},
            {k: v * factor for k, v in self.edge_prize.items()},
        )


def entry_texts(graph: PathwayGraph) -> list[str]:
    return [e.text for e in graph.entries.values()]


def triple_text(graph: PathwayGraph, index: int) -> str:
    t = graph.triples[index]
    head, tail = graph.entries[t.head], graph.entries[t.tail]
    return " ".join([t.relation, *t.processes, *head.names, *tail.names])


def graph_corpus(graph: PathwayGraph) -> list[str]:
    """Entry texts followed by triple texts, the corpus the idf table is built on."""
    return entry_texts(graph) + [triple_text(graph, i) for i in range(len(graph.triples))]


def fit_graph_scorer(graph: PathwayGraph, k1: float = 1.2, b: float = 0.75) -> BM25Scorer:
    return BM25Scorer(k1=k1, b=b).fit(graph_corpus(graph))


def score_graph(graph: PathwayGraph, query: Query | str, scorer: BM25Scorer | None = None) -> PrizeMap:
    """Prize for every entry and triple of ``graph``; ``scorer`` must be fitted on its corpus."""
    query = _as_query(query)
    keys = list(graph.entries)
    if not query:
        return PrizeMap(dict.fromkeys(keys, 0.0), dict.fromkeys(range(len(graph.triples)), 0.0))
    if scorer is None:
        scorer = fit_graph_scorer(graph)
    if scorer.n_documents_ != len(keys) + len(graph.triples):
        raise ValueError("scorer was not fitted on this graph's corpus")
    scores = scorer.score_documents(query)
    node_prize = {k: float(s) for k, s in zip(keys, scores[: len(keys)])}
    edge_prize = {i: float(s) for i, s in enumerate(scores[len(keys):])}
    return PrizeMap(node_prize, edge_prize)
