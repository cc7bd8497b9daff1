"""Pathway graph store: entries, triples and the endpoint-sharing neighborhood."""

from __future__ import annotations

import enum
import io
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import IO, Iterable, Iterator, Mapping, NamedTuple

FORMAT_NAME = "pathseeker-graph"
FORMAT_VERSION = 1


class GraphDataError(ValueError):
    """Raised when a graph source cannot be loaded."""


class GraphFormatError(GraphDataError):
    def __init__(self, message: str, line: int | None = None, source: str = ""):
        self.line = line
        self.source = source
        where = f"{source} line {line}: " if line is not None else ""
        super().__init__(where + message)


class DanglingEndpointError(GraphDataError):
    def __init__(self, key: "EntryKey", line: int | None = None):
        self.key = key
        super().__init__(f"triple at line {line} cites unknown entry {key.canonical!r}")


class DuplicateEntryError(GraphDataError):
    def __init__(self, key: "EntryKey", line: int | None = None):
        self.key = key
        super().__init__(f"duplicate entry {key.canonical!r} at line {line}")


@dataclass(frozen=True)
class EntryKey:
    """Order-insensitive identity of a graph endpoint (one or more accessions)."""

    ids: tuple[str, ...]

    def __post_init__(self):
        if not self.ids:
            raise ValueError("EntryKey needs at least one id")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError(f"duplicate ids in EntryKey: {self.ids}")
        if list(self.ids) != sorted(self.ids):
            object.__setattr__(self, "ids", tuple(sorted(self.ids)))

    @classmethod
    def of(cls, ids: Iterable[str] | str) -> "EntryKey":
        if isinstance(ids, str):
            ids = ids.split()
        ids = tuple(str(i) for i in ids)
        if any(not i or any(c.isspace() for c in i) for i in ids):
            raise ValueError(f"ids must be non-empty and contain no whitespace: {ids}")
        return cls(tuple(sorted(ids)))

    @property
    def canonical(self) -> str:
        return " ".join(self.ids)

    def __lt__(self, other: "EntryKey") -> bool:
        return self.canonical < other.canonical

    def __str__(self) -> str:
        return self.canonical


class EntryKind(str, enum.Enum):
    COMPOUND = "compound"
    GENE_GROUP = "gene_group"
    OTHER = "other"


@dataclass(frozen=True)
class Entry:
    key: EntryKey
    names: tuple[str, ...] = ()
    description: str = ""
    kind: EntryKind = EntryKind.OTHER

    @property
    def display(self) -> str:
        """Rendered as ``<canonical ids>: <names joined by spaces>``."""
        return f"{self.key.canonical}: {' '.join(self.names)}"

    @property
    def text(self) -> str:
        return " ".join([self.key.canonical, *self.names, self.description])


@dataclass(frozen=True)
class Triple:
    head: EntryKey
    tail: EntryKey
    relation: str
    processes: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.relation or not self.relation.strip():
            raise ValueError("relation must be non-empty")

    @property
    def endpoints(self) -> tuple[EntryKey, ...]:
        return (self.head,) if self.head == self.tail else (self.head, self.tail)

    @property
    def process_ids(self) -> tuple[str, ...]:
        return tuple(p.split(":", 1)[0].strip() for p in self.processes)


class GraphStats(NamedTuple):
    entries: int
    triples: int
    processes: int


@dataclass(frozen=True, eq=False)
class PathwayGraph:
    """Immutable pathway network. Triples are addressed by their integer index."""

    entries: Mapping[EntryKey, Entry]
    triples: tuple[Triple, ...]
    adjacency: Mapping[EntryKey, frozenset[int]] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        entries = dict(self.entries)
        for idx, t in enumerate(self.triples):
            for k in (t.head, t.tail):
                if k not in entries:
                    raise DanglingEndpointError(k, idx)
        object.__setattr__(self, "entries", MappingProxyType(entries))
        object.__setattr__(self, "triples", tuple(self.triples))
        if self.adjacency is None:
            adjacency = build_adjacency(entries, self.triples)
        else:
            adjacency = {k: frozenset(v) for k, v in self.adjacency.items()}
        object.__setattr__(self, "adjacency", MappingProxyType(adjacency))

    def __len__(self) -> int:
        return len(self.triples)

    def entry(self, key: EntryKey) -> Entry:
        return self.entries[key]

    def check_triple(self, index: int) -> int:
        if not isinstance(index, int) or isinstance(index, bool) or not 0 <= index < len(self.triples):
            raise IndexError(f"invalid triple index: {index!r}")
        return index

    def adjacent_triples(self, index: int) -> set[int]:
        """Triples sharing at least one endpoint key with ``index`` (excluding itself)."""
        out: set[int] = set()
        for k in self.triples[index].endpoints:
            out |= self.adjacency[k]
        out.discard(index)
        return out

    def stats(self) -> GraphStats:
        return stats(self)


def build_adjacency(entries: Iterable[EntryKey], triples: Iterable[Triple]) -> dict[EntryKey, frozenset[int]]:
    acc: dict[EntryKey, set[int]] = {k: set() for k in entries}
    for idx, t in enumerate(triples):
        for k in t.endpoints:
            acc[k].add(idx)
    return {k: frozenset(v) for k, v in acc.items()}


def stats(graph: PathwayGraph) -> GraphStats:
    processes = {pid for t in graph.triples for pid in t.process_ids}
    return GraphStats(len(graph.entries), len(graph.triples), len(processes))


def neighbors(graph: PathwayGraph, seed_triple: int, hops: int) -> set[int]:
    """All triples within ``hops`` endpoint-sharing steps of ``seed_triple``, seed included."""
    graph.check_triple(seed_triple)
    if hops < 1:
        raise ValueError("hops must be >= 1")
    seen = {seed_triple}
    frontier = [seed_triple]
    for _ in range(hops):
        nxt = []
        for t in frontier:
            for u in graph.adjacent_triples(t):
                if u not in seen:
                    seen.add(u)
                    nxt.append(u)
        if not nxt:
            break
        frontier = nxt
    return seen


def connected_components(graph: PathwayGraph, triples: Iterable[int]) -> list[list[int]]:
    """Endpoint-sharing components of a triple subset, each sorted, ordered by minimum index."""
    pool = set(triples)
    comps = []
    for start in sorted(pool):
        if start not in pool:
            continue
        pool.discard(start)
        comp = [start]
        queue = deque([start])
        while queue:
            t = queue.popleft()
            for u in graph.adjacent_triples(t):
                if u in pool:
                    pool.discard(u)
                    comp.append(u)
                    queue.append(u)
        comps.append(sorted(comp))
    return comps


# -- ingestion --------------------------------------------------------------


def _records(stream: IO[bytes] | IO[str], source: str) -> Iterator[tuple[int, dict]]:
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    header_seen = False
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise GraphFormatError(f"invalid UTF-8: {exc}", lineno, source) from None
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"malformed JSON: {exc.msg}", lineno, source) from None
        if not isinstance(rec, dict):
            raise GraphFormatError("record is not a JSON object", lineno, source)
        if not header_seen:
            if rec.get("format") != FORMAT_NAME:
                raise GraphFormatError(f"missing {FORMAT_NAME!r} header record", lineno, source)
            if rec.get("version") != FORMAT_VERSION:
                raise GraphFormatError(f"unsupported version {rec.get('version')!r}", lineno, source)
            header_seen = True
            continue
        yield lineno, rec
    if not header_seen:
        raise GraphFormatError(f"missing {FORMAT_NAME!r} header record", None, source)


def _str_list(rec: dict, name: str, lineno: int, source: str, required: bool = True) -> list[str]:
    value = rec.get(name)
    if value is None and not required:
        return []
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise GraphFormatError(f"field {name!r} must be a list of strings", lineno, source)
    return value


def _key(rec: dict, name: str, lineno: int, source: str) -> EntryKey:
    try:
        return EntryKey.of(_str_list(rec, name, lineno, source))
    except ValueError as exc:
        if isinstance(exc, GraphFormatError):
            raise
        raise GraphFormatError(str(exc), lineno, source) from None


def load_graph(entries_source: IO[bytes], triples_source: IO[bytes]) -> PathwayGraph:
    """Load the line-delimited JSON ingestion format. Triple indices follow file order."""
    entries: dict[EntryKey, Entry] = {}
    for lineno, rec in _records(entries_source, "entries"):
        key = _key(rec, "ids", lineno, "entries")
        if key in entries:
            raise DuplicateEntryError(key, lineno)
        names = _str_list(rec, "names", lineno, "entries", required=False)
        description = rec.get("description", "")
        if not isinstance(description, str):
            raise GraphFormatError("field 'description' must be a string", lineno, "entries")
        try:
            kind = EntryKind(rec.get("kind", "other"))
        except ValueError:
            raise GraphFormatError(f"unknown kind {rec.get('kind')!r}", lineno, "entries") from None
        entries[key] = Entry(key, tuple(names), description, kind)

    triples: list[Triple] = []
    for lineno, rec in _records(triples_source, "triples"):
        head = _key(rec, "head", lineno, "triples")
        tail = _key(rec, "tail", lineno, "triples")
        for k in (head, tail):
            if k not in entries:
                raise DanglingEndpointError(k, lineno)
        relation = rec.get("relation")
        if not isinstance(relation, str) or not relation.strip():
            raise GraphFormatError("field 'relation' must be a non-empty string", lineno, "triples")
        processes = _str_list(rec, "processes", lineno, "triples", required=False)
        triples.append(Triple(head, tail, relation, tuple(processes)))

    return PathwayGraph(entries, tuple(triples))


def load_graph_files(entries_path: str | Path, triples_path: str | Path) -> PathwayGraph:
    with open(entries_path, "rb") as ef, open(triples_path, "rb") as tf:
        return load_graph(ef, tf)


def dump_graph(graph: PathwayGraph, entries_out: IO[str], triples_out: IO[str]) -> None:
    header = json.dumps({"format": FORMAT_NAME, "version": FORMAT_VERSION})
    entries_out.write(header + "\n")
    for e in graph.entries.values():
        rec = {"ids": list(e.key.ids), "names": list(e.names), "description": e.description, "kind": e.kind.value}
        entries_out.write(json.dumps(rec, ensure_ascii=False) + "\n")
    triples_out.write(header + "\n")
    for t in graph.triples:
        rec = {"head": list(t.head.ids), "tail": list(t.tail.ids), "relation": t.relation, "processes": list(t.processes)}
        triples_out.write(json.dumps(rec, ensure_ascii=False) + "\n")
