import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphtools import MINIMAL_ENTRIES, MINIMAL_TRIPLES, jsonl, make_graph
from pathseeker.store import (
    DanglingEndpointError,
    DuplicateEntryError,
    EntryKey,
    GraphFormatError,
    build_adjacency,
    dump_graph,
    load_graph,
    neighbors,
    stats,
)


def test_entry_key_is_order_insensitive():
    a = EntryKey.of(["5562", "51422", "53632"])
    b = EntryKey.of("53632 5562 51422")
    assert a == b and hash(a) == hash(b)
    assert a.canonical == "51422 53632 5562"


def test_entry_key_rejects_empty_and_duplicates():
    with pytest.raises(ValueError):
        EntryKey.of([])
    with pytest.raises(ValueError):
        EntryKey.of(["a", "a"])


def test_load_minimal(minimal_graph):
    g = minimal_graph
    assert len(g.entries) == 2 and len(g.triples) == 1
    for key in g.entries:
        assert len(g.adjacency[key]) == 1
    assert stats(g) == (2, 1, 1)


def test_display_text(minimal_graph):
    e = minimal_graph.entries[EntryKey.of(["C00469"])]
    assert e.display == "C00469: Ethanol; Ethyl alcohol; Methylcarbinol"


def test_dangling_endpoint_names_key():
    triples = [{"head": ["C00469"], "tail": ["X999"], "relation": "PCrel", "processes": []}]
    with pytest.raises(DanglingEndpointError, match="X999"):
        load_graph(jsonl(*MINIMAL_ENTRIES), jsonl(*triples))


def test_duplicate_entry():
    with pytest.raises(DuplicateEntryError):
        load_graph(jsonl(MINIMAL_ENTRIES[0], MINIMAL_ENTRIES[0]), jsonl())


@pytest.mark.parametrize(
    "payload, line",
    [
        (b'{"format":"pathseeker-graph","version":1}\n{"ids": ["A"]}\n{not json\n', 3),
        (b'{"format":"pathseeker-graph","version":1}\n{"ids": "A"}\n', 2),
        (b'{"format":"other"}\n', 1),
        (b'{"format":"pathseeker-graph","version":2}\n', 1),
    ],
)
def test_malformed_entries_report_line(payload, line):
    with pytest.raises(GraphFormatError) as err:
        load_graph(io.BytesIO(payload), jsonl())
    assert err.value.line == line


def test_empty_relation_rejected():
    triples = [{"head": ["C00469"], "tail": ["406999"], "relation": " ", "processes": []}]
    with pytest.raises(GraphFormatError):
        load_graph(jsonl(*MINIMAL_ENTRIES), jsonl(*triples))


def test_empty_graph_stats():
    assert stats(load_graph(jsonl(), jsonl())) == (0, 0, 0)


def test_process_count_uses_distinct_ids():
    g = make_graph([("a", "b"), ("b", "c")], processes=("hsa1: X", "hsa2: Y"))
    assert stats(g).processes == 2


def test_roundtrip_and_determinism(minimal_graph):
    e, t = io.StringIO(), io.StringIO()
    dump_graph(minimal_graph, e, t)
    g1 = load_graph(io.BytesIO(e.getvalue().encode()), io.BytesIO(t.getvalue().encode()))
    g2 = load_graph(io.BytesIO(e.getvalue().encode()), io.BytesIO(t.getvalue().encode()))
    assert g1.triples == g2.triples == minimal_graph.triples
    assert dict(g1.entries) == dict(minimal_graph.entries)


def test_graph_is_immutable(minimal_graph):
    with pytest.raises(TypeError):
        minimal_graph.entries[EntryKey.of(["zz"])] = None
    with pytest.raises(AttributeError):
        minimal_graph.triples = ()


CHAIN = [("A", "B"), ("B", "C"), ("C", "D")]


def test_neighbors_chain():
    g = make_graph(CHAIN)
    assert neighbors(g, 0, 1) == {0, 1}
    assert neighbors(g, 0, 2) == {0, 1, 2}


def test_neighbors_isolated():
    g = make_graph([("A", "B"), ("C", "D")])
    assert neighbors(g, 0, 5) == {0}


def test_neighbors_errors():
    g = make_graph(CHAIN)
    with pytest.raises(IndexError):
        neighbors(g, 7, 1)
    with pytest.raises(ValueError):
        neighbors(g, 0, 0)


def _bfs_oracle(edges, seed, hops):
    """k-fold composition of the one-step endpoint-sharing relation, by brute force."""
    def share(i, j):
        return bool({*edges[i]} & {*edges[j]})

    cur = {seed}
    for _ in range(hops):
        cur = cur | {j for j in range(len(edges)) for i in cur if share(i, j)}
    return cur


random_edges = st.lists(
    st.tuples(st.integers(0, 14).map(str), st.integers(0, 14).map(str)), min_size=1, max_size=50
)


@settings(max_examples=150, deadline=None)
@given(random_edges, st.data())
def test_neighbors_match_bfs_oracle(edges, data):
    g = make_graph(edges)
    seed = data.draw(st.integers(0, len(edges) - 1))
    hops = data.draw(st.integers(1, 5))
    got = neighbors(g, seed, hops)
    assert got == _bfs_oracle(edges, seed, hops)
    assert got <= neighbors(g, seed, hops + 1)


@settings(max_examples=100, deadline=None)
@given(random_edges)
def test_adjacency_matches_reconstruction(edges):
    g = make_graph(edges)
    assert dict(g.adjacency) == build_adjacency(g.entries, g.triples)
