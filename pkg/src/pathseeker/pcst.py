"""Connected-subgraph retrieval as prize-collecting Steiner tree (PCST).

The inner problem picks a connected subgraph S maximizing

    sum(node prizes in S) + sum(edge prizes in S) - |E_S| * edge_cost

and the outer problem bisects ``edge_cost`` so that |E_S| lands near a target
number of triples.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .relevance import BM25Scorer, PrizeMap, Query, fit_graph_scorer, score_graph
from .store import PathwayGraph, neighbors

NO_RELEVANT_CONTENT = "no relevant content"
EXACT_MAX_NODES = 15
_EPS = 1e-12

Node = Hashable


@dataclass(frozen=True)
class PcstInstance:
    """Nodes with prizes, edges ``(edge_id, u, v)`` with prizes, and a uniform edge cost."""

    nodes: tuple
    edges: tuple
    node_prize: Mapping
    edge_prize: Mapping
    edge_cost: float = 0.0

    def __post_init__(self):
        nodes = tuple(sorted(set(self.nodes)))
        node_set = set(nodes)
        edges = tuple(sorted(self.edges, key=lambda e: e[0]))
        for eid, u, v in edges:
            if u not in node_set or v not in node_set:
                raise ValueError(f"edge {eid} has an endpoint outside the instance")
        if not (self.edge_cost >= 0 and math.isfinite(self.edge_cost)):
            raise ValueError(f"edge_cost must be finite and >= 0, got {self.edge_cost}")
        for p in (*(self.node_prize.get(n, 0.0) for n in nodes), *(self.edge_prize.get(e[0], 0.0) for e in edges)):
            if not (p >= 0 and math.isfinite(p)):
                raise ValueError(f"prizes must be finite and >= 0, got {p}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_graph(
        cls,
        graph: PathwayGraph,
        prizes: PrizeMap,
        edge_cost: float = 0.0,
        triples: Iterable[int] | None = None,
    ) -> "PcstInstance":
        idx = range(len(graph.triples)) if triples is None else sorted(set(triples))
        edges = tuple((i, graph.triples[i].head, graph.triples[i].tail) for i in idx)
        if triples is None:
            nodes = tuple(graph.entries)
        else:
            nodes = tuple({k for _, u, v in edges for k in (u, v)})
        return cls(
            nodes,
            edges,
            {n: prizes.node_prize.get(n, 0.0) for n in nodes},
            {e[0]: prizes.edge_prize.get(e[0], 0.0) for e in edges},
            edge_cost,
        )

    def with_cost(self, edge_cost: float) -> "PcstInstance":
        return PcstInstance(self.nodes, self.edges, self.node_prize, self.edge_prize, edge_cost)

    def prize(self, node) -> float:
        return float(self.node_prize.get(node, 0.0))

    def eprize(self, eid) -> float:
        return float(self.edge_prize.get(eid, 0.0))

    def objective(self, nodes: Iterable, edge_ids: Iterable) -> float:
        edge_ids = list(edge_ids)
        return (
            sum(self.prize(n) for n in nodes)
            + sum(self.eprize(e) for e in edge_ids)
            - len(edge_ids) * self.edge_cost
        )

    def relevant_part(self) -> "PcstInstance":
        """Drop connected components that carry no positive prize; they never help."""
        parent = {n: n for n in self.nodes}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for _, u, v in self.edges:
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
        live = {find(n) for n in self.nodes if self.prize(n) > 0}
        live |= {find(u) for eid, u, _ in self.edges if self.eprize(eid) > 0}
        nodes = tuple(n for n in self.nodes if find(n) in live)
        edges = tuple(e for e in self.edges if find(e[1]) in live)
        return PcstInstance(nodes, edges, self.node_prize, self.edge_prize, self.edge_cost)


@dataclass(frozen=True)
class SubgraphResult:
    triples: tuple = ()
    nodes: tuple = ()
    objective: float = 0.0
    edge_cost: float = 0.0
    flag: str | None = None
    iterations: int = 0

    @property
    def size(self) -> int:
        return len(self.triples)

    @property
    def node_set(self) -> frozenset:
        return frozenset(self.nodes)

    def to_dict(self) -> dict:
        return {
            "triples": list(self.triples),
            "nodes": [getattr(n, "canonical", n) for n in self.nodes],
            "objective": self.objective,
            "edge_cost": self.edge_cost,
            "size": self.size,
            "flag": self.flag,
        }


def _result(instance: PcstInstance, nodes: Iterable, edge_ids: Iterable, **kw) -> SubgraphResult:
    nodes = tuple(sorted(set(nodes)))
    edge_ids = tuple(sorted(set(edge_ids)))
    return SubgraphResult(
        edge_ids, nodes, instance.objective(nodes, edge_ids), instance.edge_cost, **kw
    )


def _best_single(instance: PcstInstance) -> SubgraphResult:
    node = min(instance.nodes, key=lambda n: (-instance.prize(n), n))
    return _result(instance, [node], [])


def is_connected(nodes: Iterable, edges: Iterable[tuple]) -> bool:
    """Whether the given nodes plus edges ``(eid, u, v)`` form one component (empty counts)."""
    nodes = set(nodes)
    edges = list(edges)
    for _, u, v in edges:
        nodes.update((u, v))
    if len(nodes) <= 1:
        return True
    adj: dict = {n: set() for n in nodes}
    for _, u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    start = next(iter(nodes))
    stack, seen = [start], {start}
    while stack:
        x = stack.pop()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == len(nodes)


# -- exact solver -------------------------------------------------------------


def _best_edges_within(instance: PcstInstance, nodes: frozenset, edges_in: Sequence[tuple]) -> tuple[float, list]:
    """Optimal edge set spanning ``nodes``: all positive-net edges, then a max-net spanning forest."""
    c = instance.edge_cost
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    chosen, value = [], 0.0
    rest = []
    for eid, u, v in edges_in:
        net = instance.eprize(eid) - c
        if net > 0:
            chosen.append(eid)
            value += net
            parent[find(u)] = find(v)
        else:
            rest.append((-net, eid, u, v))
    rest.sort(key=lambda r: (r[0], r[1]))
    for cost, eid, u, v in rest:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            chosen.append(eid)
            value -= cost
    return value, chosen


def _connected_subsets(order: Sequence, adj: Mapping) -> Iterable[frozenset]:
    """Every connected node subset exactly once (ESU-style extension)."""
    rank = {n: i for i, n in enumerate(order)}

    def extend(sub: frozenset, ext: list, root_rank: int, closed: frozenset):
        yield sub
        ext = list(ext)
        while ext:
            w = ext.pop(0)
            new_ext = list(ext)
            for u in adj[w]:
                if rank[u] > root_rank and u not in closed and u not in new_ext:
                    new_ext.append(u)
            new_ext.sort(key=rank.__getitem__)
            yield from extend(sub | {w}, new_ext, root_rank, closed | {w} | set(adj[w]))

    for v in order:
        r = rank[v]
        ext = sorted((u for u in adj[v] if rank[u] > r), key=rank.__getitem__)
        yield from extend(frozenset([v]), ext, r, frozenset([v]) | set(adj[v]))


def solve_pcst_exact(instance: PcstInstance) -> SubgraphResult:
    """Exact optimum by enumeration; ties go to fewer edges, then the smaller node tuple."""
    n = len(instance.nodes)
    if n == 0:
        return SubgraphResult(edge_cost=instance.edge_cost)
    if n > EXACT_MAX_NODES:
        raise ValueError(f"exact solver supports at most {EXACT_MAX_NODES} nodes, got {n}")
    adj: dict = {v: set() for v in instance.nodes}
    for _, u, v in instance.edges:
        if u != v:
            adj[u].add(v)
            adj[v].add(u)
    best_key, best = None, None
    for sub in _connected_subsets(instance.nodes, adj):
        inner = [e for e in instance.edges if e[1] in sub and e[2] in sub]
        ev, eids = _best_edges_within(instance, sub, inner)
        value = sum(instance.prize(v) for v in sub) + ev
        key = (-value, len(eids), tuple(sorted(sub)))
        if best_key is None or _better(key, best_key):
            best_key, best = key, (sub, eids)
    return _result(instance, best[0], best[1])


def _better(key, other) -> bool:
    if key[0] < other[0] - 1e-12:
        return True
    if key[0] > other[0] + 1e-12:
        return False
    return key[1:] < other[1:]


# -- Goemans-Williamson growth with strong pruning ------------------------------


class _Transformed:
    """Node-prize PCST graph: positive-net edges become prize nodes joined by free edges."""

    def __init__(self, instance: PcstInstance):
        self.instance = instance
        self.index = {n: i for i, n in enumerate(instance.nodes)}
        self.prize = [instance.prize(n) for n in instance.nodes]
        self.virtual_triple: dict[int, object] = {}
        self.edges: list[tuple[int, int, float, object]] = []  # (a, b, cost, triple id or None)
        cheapest: dict[tuple[int, int], tuple[float, object]] = {}
        c = instance.edge_cost
        for eid, u, v in instance.edges:
            if u == v:
                continue
            a, b = self.index[u], self.index[v]
            net = instance.eprize(eid) - c
            if net > 0:
                x = len(self.prize)
                self.prize.append(net)
                self.virtual_triple[x] = eid
                self.edges.append((a, x, 0.0, None))
                self.edges.append((x, b, 0.0, None))
            else:
                pair = (min(a, b), max(a, b))
                if pair not in cheapest or -net < cheapest[pair][0]:
                    cheapest[pair] = (-net, eid)
        for (a, b), (cost, eid) in sorted(cheapest.items(), key=lambda kv: kv[1][1]):
            self.edges.append((a, b, cost, eid))


def _gw_forest(prize: Sequence[float], edges: Sequence[tuple]) -> list[int]:
    """Primal-dual moat growing; returns indices of edges that merged clusters."""
    n = len(prize)
    cid = list(range(n))
    members = [[i] for i in range(n)]
    inc: list[list[int]] = [[] for _ in range(n)]
    for k, (a, b, _, _) in enumerate(edges):
        inc[a].append(k)
        inc[b].append(k)
    active = [p > 0 for p in prize]
    rem = list(prize)
    start = [0.0] * n
    acc = [0.0] * n
    off = [0.0] * n
    version = [0] * n
    now = 0.0
    heap: list = []
    forest: list[int] = []

    def moat(c):
        return acc[c] + (now - start[c] if active[c] else 0.0)

    def tight_time(k):
        a, b, cost, _ = edges[k]
        ca, cb = cid[a], cid[b]
        if ca == cb:
            return None
        rate = active[ca] + active[cb]
        if rate == 0:
            return None
        slack = cost - (off[a] + moat(ca)) - (off[b] + moat(cb))
        return now + max(slack, 0.0) / rate

    def push_edge(k):
        t = tight_time(k)
        if t is not None:
            heapq.heappush(heap, (t, 0, k, 0))

    for k in range(len(edges)):
        push_edge(k)
    for c in range(n):
        if active[c]:
            heapq.heappush(heap, (rem[c], 1, c, version[c]))

    while heap:
        t, kind, item, ver = heapq.heappop(heap)
        if kind == 1:
            c = item
            if cid[c] != c or version[c] != ver or not active[c]:
                continue
            now = max(now, t)
            acc[c] += now - start[c]
            rem[c] = 0.0
            active[c] = False
            version[c] += 1
            continue
        t2 = tight_time(item)
        if t2 is None:
            continue
        if t2 > t + _EPS * max(1.0, abs(t)):
            heapq.heappush(heap, (t2, 0, item, 0))
            continue
        now = max(now, t2)
        a, b, _, _ = edges[item]
        ca, cb = cid[a], cid[b]
        forest.append(item)
        ra = rem[ca] - (now - start[ca] if active[ca] else 0.0)
        rb = rem[cb] - (now - start[cb] if active[cb] else 0.0)
        was_active = {ca: active[ca], cb: active[cb]}
        for c in (ca, cb):
            if active[c]:
                acc[c] += now - start[c]
        big, small = (ca, cb) if len(members[ca]) >= len(members[cb]) else (cb, ca)
        shift = acc[small] - acc[big]
        for u in members[small]:
            off[u] += shift
            cid[u] = big
        members[big].extend(members[small])
        members[small] = []
        old_inc = {ca: list(inc[ca]), cb: list(inc[cb])}
        inc[big].extend(inc[small])
        inc[small] = []
        rem[big] = max(ra, 0.0) + max(rb, 0.0)
        active[big] = rem[big] > 0
        active[small] = False
        start[big] = now
        version[big] += 1
        version[small] += 1
        if active[big]:
            heapq.heappush(heap, (now + rem[big], 1, big, version[big]))
            for c in (ca, cb):
                if not was_active[c]:
                    for k in old_inc[c]:
                        push_edge(k)
    return forest


def _strong_prune(prize: Sequence[float], edges: Sequence[tuple], forest: Sequence[int]) -> tuple[set, list]:
    """Best-value subtree of the GW forest (node set, forest edge indices)."""
    adj: dict[int, list[tuple[int, int]]] = {}
    for k in forest:
        a, b, _, _ = edges[k]
        adj.setdefault(a, []).append((b, k))
        adj.setdefault(b, []).append((a, k))
    for lst in adj.values():
        lst.sort()
    value = list(prize)
    parent: dict[int, tuple[int, int] | None] = {}
    best_node, best_value = None, -math.inf
    for root in range(len(prize)):
        if root in parent:
            continue
        parent[root] = None
        order = [root]
        i = 0
        while i < len(order):
            x = order[i]
            i += 1
            for y, k in adj.get(x, ()):
                if y not in parent:
                    parent[y] = (x, k)
                    order.append(y)
        for x in reversed(order):
            p = parent[x]
            if p is not None:
                gain = value[x] - edges[p[1]][2]
                if gain > _EPS:
                    value[p[0]] += gain
        for x in sorted(order):
            if value[x] > best_value + _EPS:
                best_node, best_value = x, value[x]
    if best_node is None:
        return set(), []
    nodes, chosen = {best_node}, []
    stack = [best_node]
    while stack:
        x = stack.pop()
        for y, k in adj.get(x, ()):
            p = parent[y]
            if p is not None and p[0] == x and y not in nodes and value[y] - edges[k][2] > _EPS:
                nodes.add(y)
                chosen.append(k)
                stack.append(y)
    return nodes, chosen


def solve_pcst(instance: PcstInstance) -> SubgraphResult:
    """Goemans-Williamson PCST heuristic on the edge-subdivided graph, then strong pruning."""
    if not instance.nodes:
        return SubgraphResult(edge_cost=instance.edge_cost)
    tg = _Transformed(instance)
    forest = _gw_forest(tg.prize, tg.edges)
    tnodes, tedges = _strong_prune(tg.prize, tg.edges, forest)
    n_real = len(instance.nodes)
    nodes = {instance.nodes[i] for i in tnodes if i < n_real}
    triples = set()
    for x in tnodes:
        if x >= n_real:
            eid = tg.virtual_triple[x]
            triples.add(eid)
    for k in tedges:
        eid = tg.edges[k][3]
        if eid is not None:
            triples.add(eid)
    by_id = {e[0]: e for e in instance.edges}
    for eid in triples:
        nodes.update(by_id[eid][1:])
    # any positive-net edge inside the chosen node set only adds value
    for eid, u, v in instance.edges:
        if eid not in triples and u in nodes and v in nodes and instance.eprize(eid) - instance.edge_cost > 0:
            triples.add(eid)
    result = _result(instance, nodes, triples)
    single = _best_single(instance)
    if single.objective > result.objective + _EPS:
        return single
    return result


# -- outer search over edge cost ----------------------------------------------

Solver = Callable[[PcstInstance], SubgraphResult]


def search_instance(
    instance: PcstInstance,
    n: int,
    solver: Solver = solve_pcst,
    max_iter: int = 30,
) -> SubgraphResult:
    """Bisect the edge cost so the solution has about ``n`` edges.

    Size is only roughly monotone in the cost, so the best probe overall is
    returned (closest to ``n``, ties to the larger subgraph), not the last one.
    """
    if n < 1:
        raise ValueError("target size must be >= 1")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    instance = instance.relevant_part()
    max_prize = max(
        [0.0, *(instance.prize(v) for v in instance.nodes), *(instance.eprize(e[0]) for e in instance.edges)]
    )
    if max_prize == 0.0:
        return SubgraphResult(flag=NO_RELEVANT_CONTENT)

    best: SubgraphResult | None = None
    iterations = 0

    def probe(cost: float) -> SubgraphResult:
        nonlocal best, iterations
        iterations += 1
        res = solver(instance.with_cost(cost))
        if best is None or (abs(res.size - n), -res.size) < (abs(best.size - n), -best.size):
            best = res
        return res

    lo, hi = 0.0, 2.0 * max_prize
    first = probe(lo)
    if first.size > n:
        while iterations < max_iter:
            mid = 0.5 * (lo + hi)
            res = probe(mid)
            if res.size == n:
                break
            if res.size > n:
                lo = mid
            else:
                hi = mid
    flag = NO_RELEVANT_CONTENT if best.size == 0 else None
    return SubgraphResult(best.triples, best.nodes, best.objective, best.edge_cost, flag, iterations)


def search_subgraph(
    graph: PathwayGraph,
    query: Query | str,
    n: int,
    scorer: BM25Scorer | None = None,
    solver: Solver = solve_pcst,
    max_iter: int = 30,
    prizes: PrizeMap | None = None,
) -> SubgraphResult:
    """Connected subgraph of about ``n`` triples most relevant to ``query``."""
    if n < 1:
        raise ValueError("target size must be >= 1")
    if prizes is None:
        prizes = score_graph(graph, query, scorer)
    return search_instance(PcstInstance.from_graph(graph, prizes), n, solver, max_iter)


def neighbor_subgraph(
    graph: PathwayGraph,
    anchor: int,
    query: Query | str,
    n: int,
    hops: int = 2,
    scorer: BM25Scorer | None = None,
    solver: Solver = solve_pcst,
    max_iter: int = 30,
    prizes: PrizeMap | None = None,
) -> SubgraphResult:
    """Like :func:`search_subgraph`, restricted to triples within ``hops`` of ``anchor``."""
    pool = neighbors(graph, anchor, hops)
    if n < 1:
        raise ValueError("target size must be >= 1")
    if prizes is None:
        prizes = score_graph(graph, query, scorer)
    return search_instance(PcstInstance.from_graph(graph, prizes, triples=pool), n, solver, max_iter)


_SOLVERS = {"gw": solve_pcst, "exact": solve_pcst_exact}


class SubgraphRetriever(BaseEstimator):
    """Query -> connected subgraph retriever over one pathway graph.

    Parameters
    ----------
    n_triples : int
        Target subgraph size in triples.
    hops : int
        Neighborhood radius used by :meth:`search_neighbors`.
    max_iter : int
        Cap on edge-cost probes per search.
    solver : {"gw", "exact"}
    k1, b : float
        BM25 parameters of the relevance scorer.
    """

    def __init__(self, n_triples: int = 20, hops: int = 2, max_iter: int = 30, solver: str = "gw", k1: float = 1.2, b: float = 0.75):
        self.n_triples = n_triples
        self.hops = hops
        self.max_iter = max_iter
        self.solver = solver
        self.k1 = k1
        self.b = b

    def fit(self, graph: PathwayGraph, y=None):
        if self.solver not in _SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; expected one of {sorted(_SOLVERS)}")
        if self.n_triples < 1 or self.hops < 1 or self.max_iter < 1:
            raise ValueError("n_triples, hops and max_iter must be positive")
        self.graph_ = graph
        self.scorer_ = fit_graph_scorer(graph, self.k1, self.b)
        return self

    def prizes(self, query: Query | str) -> PrizeMap:
        check_is_fitted(self, "scorer_")
        return score_graph(self.graph_, query, self.scorer_)

    def search(self, query: Query | str, n: int | None = None) -> SubgraphResult:
        check_is_fitted(self, "scorer_")
        return search_subgraph(
            self.graph_, query, n or self.n_triples, self.scorer_, _SOLVERS[self.solver], self.max_iter
        )

    def search_neighbors(self, anchor: int, query: Query | str, n: int | None = None, hops: int | None = None) -> SubgraphResult:
        check_is_fitted(self, "scorer_")
        return neighbor_subgraph(
            self.graph_, anchor, query, n or self.n_triples, hops or self.hops,
            self.scorer_, _SOLVERS[self.solver], self.max_iter,
        )

    def transform(self, queries: Iterable[Query | str]) -> list[SubgraphResult]:
        return [self.search(q) for q in queries]
