import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphtools import make_graph
from pathseeker.encoding import (
    NO_NEW_PATHWAYS,
    LedgerError,
    SessionLedger,
    dfs_order,
    raw_triple_line,
    remove_seen,
    triple_line,
    triple_to_ordered_text,
    triple_to_text,
)

GOLDEN = (
    "0) C00469: Ethanol; Ethyl alcohol; Methylcarbinol | 406999: microRNA 217 MIR217 MIRN217 mir-217"
    " | PCrel indirect effect activation | hsa04936: Alcoholic liver disease"
)


def test_single_line_matches_golden(minimal_graph):
    ledger = SessionLedger()
    assert triple_to_ordered_text([0], minimal_graph, ledger) == GOLDEN
    assert ledger.total_num == 1 and ledger.next_line == 1


def test_empty_is_sentinel(minimal_graph):
    ledger = SessionLedger()
    assert triple_to_ordered_text([], minimal_graph, ledger) == NO_NEW_PATHWAYS
    assert ledger.next_line == 0


def test_repeat_rejected_without_flag(minimal_graph):
    ledger = SessionLedger()
    triple_to_ordered_text([0], minimal_graph, ledger)
    with pytest.raises(LedgerError):
        triple_to_ordered_text([0], minimal_graph, ledger)
    text = triple_to_ordered_text([0], minimal_graph, ledger, allow_repeats=True)
    assert text.startswith("1) C00469")
    assert ledger.total_num == 1 and ledger.next_line == 2
    assert ledger.first_line[0] == 0


def test_remove_seen():
    ledger = SessionLedger()
    for t in (3, 1):
        ledger.record(t)
    assert remove_seen([1, 2, 3, 4, 2], ledger) == [2, 4]
    assert ledger.lines == [3, 1]


def test_dfs_order_chain_and_components():
    # 0:A-B 1:C-D 2:B-C 3:X-Y 4:Y-Z
    g = make_graph([("A", "B"), ("C", "D"), ("B", "C"), ("X", "Y"), ("Y", "Z")])
    assert dfs_order([0, 1, 2, 3, 4], g) == [0, 2, 1, 3, 4]
    # a prize map moves the root of each component
    assert dfs_order([0, 1, 2], g, prizes={1: 5.0}) == [1, 2, 0]


def test_dfs_order_branching():
    # star around B: 0:A-B 1:B-C 2:B-D 3:D-E
    g = make_graph([("A", "B"), ("B", "C"), ("B", "D"), ("D", "E")])
    assert dfs_order([3, 2, 1, 0], g) == [0, 1, 2, 3]
    assert dfs_order([3, 1], g) == [1, 3]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=1, max_size=25), st.data())
def test_dfs_order_is_permutation_and_adjacent(edges, data):
    g = make_graph([(str(a), str(b)) for a, b in edges])
    pool = data.draw(st.sets(st.integers(0, len(edges) - 1), min_size=1))
    order = dfs_order(pool, g)
    assert sorted(order) == sorted(pool)
    assert order == dfs_order(sorted(pool, reverse=True), g)
    # an element starts a new component exactly when it touches nothing emitted before it,
    # and components appear in ascending order of their smallest triple
    ends = lambda t: set(g.triples[t].endpoints)
    roots = [i for i, t in enumerate(order) if not any(ends(t) & ends(s) for s in order[:i])]
    assert roots[0] == 0
    mins = [min(order[a:b]) for a, b in zip(roots, roots[1:] + [len(order)])]
    assert mins == sorted(mins)


def test_triple_to_text_plain(minimal_graph):
    assert triple_to_text([0], minimal_graph) == GOLDEN[len("0) "):]
    assert triple_to_text([], minimal_graph) == ""


def test_raw_render(minimal_graph):
    ledger = SessionLedger()
    assert triple_to_ordered_text([0], minimal_graph, ledger, render=raw_triple_line) == "0) triple#0"


def test_triple_line_multi_process():
    g = make_graph([("A", "B")], {"A": "alpha", "B": "beta"}, processes=("hsa1: One", "hsa2: Two"))
    assert triple_line(g, 0) == "A: alpha | B: beta | PPrel activation | hsa1: One hsa2: Two"


def test_ledger_lookup():
    ledger = SessionLedger()
    ledger.record(7)
    assert ledger.triple_at(0) == 7
    for bad in (1, -1, "0"):
        with pytest.raises(KeyError):
            ledger.triple_at(bad)


def run_session(rng, n_triples, turns, graph):
    """Random searches over a pool, some overlapping earlier ones; returns per-turn (start, ids)."""
    ledger = SessionLedger()
    record = []
    for _ in range(turns):
        k = rng.randint(0, n_triples)
        current = rng.sample(range(n_triples), k)
        fresh = dfs_order(remove_seen(current, ledger), graph)
        before = ledger.total_num
        text = triple_to_ordered_text(fresh, graph, ledger)
        if not fresh:
            assert text == NO_NEW_PATHWAYS
            record.append((before, []))
            continue
        ids = [int(line.split(")", 1)[0]) for line in text.splitlines()]
        record.append((before, ids))
    return ledger, record


def test_line_ids_contiguous_small():
    rng = random.Random(0)
    g = make_graph([(str(i), str(i + 1)) for i in range(12)])
    for _ in range(50):
        ledger, record = run_session(rng, 12, rng.randint(1, 6), g)
        emitted = [i for _, ids in record for i in ids]
        assert emitted == list(range(ledger.total_num))
        for start, ids in record:
            if ids:
                assert ids[0] == start
