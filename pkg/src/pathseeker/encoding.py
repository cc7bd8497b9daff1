"""Subgraph linearization: dedupe against the session, DFS-order, number the lines."""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

from .store import PathwayGraph, connected_components

NO_NEW_PATHWAYS = "No new pathways were found besides those previously seen."


class LedgerError(RuntimeError):
    """A triple was emitted twice in a session that forbids repeats."""


class SessionLedger:
    """Per-session record of emitted lines.

    ``lines[i]`` is the triple shown on line ``i``. Without repeats, the
    number of lines equals the number of distinct triples seen (TotalNum).
    """

    def __init__(self):
        self.lines: list[int] = []
        self.first_line: dict[int, int] = {}

    @property
    def seen(self) -> list[int]:
        return list(self.first_line)

    @property
    def total_num(self) -> int:
        return len(self.first_line)

    @property
    def next_line(self) -> int:
        return len(self.lines)

    def __contains__(self, triple: int) -> bool:
        return triple in self.first_line

    def triple_at(self, line_id: int) -> int:
        if not isinstance(line_id, int) or not 0 <= line_id < len(self.lines):
            raise KeyError(line_id)
        return self.lines[line_id]

    def record(self, triple: int) -> int:
        line = len(self.lines)
        self.lines.append(triple)
        self.first_line.setdefault(triple, line)
        return line

    def to_dict(self) -> dict:
        return {"lines": list(self.lines), "total_num": self.total_num}


def _triples_of(current) -> list[int]:
    return list(getattr(current, "triples", current))


def remove_seen(current, ledger: SessionLedger) -> list[int]:
    """Triples of ``current`` not yet emitted in this session. The ledger is not touched."""
    return sorted(t for t in set(_triples_of(current)) if t not in ledger)


def dfs_order(triples: Iterable[int], graph: PathwayGraph, prizes: Mapping[int, float] | None = None) -> list[int]:
    """Depth-first order over the endpoint-sharing graph of ``triples``.

    Each component starts from its highest-prize triple when ``prizes`` is
    given (lowest index otherwise); neighbors expand in ascending index and
    components follow in ascending order of their smallest index.
    """
    pool = set(triples)
    order: list[int] = []
    for comp in connected_components(graph, pool):
        if prizes:
            root = min(comp, key=lambda t: (-prizes.get(t, 0.0), t))
        else:
            root = comp[0]
        members = set(comp)
        visited = {root}
        order.append(root)
        stack = [iter(sorted(graph.adjacent_triples(root) & members))]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                continue
            if nxt in visited:
                continue
            visited.add(nxt)
            order.append(nxt)
            stack.append(iter(sorted(graph.adjacent_triples(nxt) & members)))
    return order


def triple_line(graph: PathwayGraph, index: int) -> str:
    t = graph.triples[index]
    return " | ".join(
        [graph.entries[t.head].display, graph.entries[t.tail].display, t.relation, " ".join(t.processes)]
    )


def raw_triple_line(graph: PathwayGraph, index: int) -> str:
    return f"triple#{index}"


def triple_to_text(ordered: Sequence[int], graph: PathwayGraph) -> str:
    return "\n".join(triple_line(graph, t) for t in ordered)


def triple_to_ordered_text(
    ordered: Sequence[int],
    graph: PathwayGraph,
    ledger: SessionLedger,
    allow_repeats: bool = False,
    render: Callable[[PathwayGraph, int], str] = triple_line,
) -> str:
    """Number lines from the ledger's next id and record them.

    Returns :data:`NO_NEW_PATHWAYS` (ledger unchanged) when ``ordered`` is empty.
    """
    ordered = list(ordered)
    if not ordered:
        return NO_NEW_PATHWAYS
    if len(set(ordered)) != len(ordered):
        raise LedgerError("ordered subgraph contains duplicate triples")
    if not allow_repeats:
        dup = [t for t in ordered if t in ledger]
        if dup:
            raise LedgerError(f"triples already emitted in this session: {dup}")
    lines = []
    for t in ordered:
        line_id = ledger.record(t)
        lines.append(f"{line_id}) {render(graph, t)}")
    return "\n".join(lines)
