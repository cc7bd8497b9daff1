import json
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from graphtools import case_graph
from pathseeker.clients import ScriptedClient
from pathseeker.pcst import SubgraphRetriever
from pathseeker.service import create_app


@pytest.fixture(scope="module")
def graph():
    return case_graph()


@pytest.fixture(scope="module")
def client(graph):
    factory = lambda: ScriptedClient(["Finished.", "Yes"])  # noqa: E731
    return TestClient(create_app(graph, client_factory=factory))


def test_health_and_stats(client):
    assert client.get("/healthz").json() == {"status": "ok"}
    assert client.get("/stats").json() == {"entries": 38, "triples": 39, "processes": 27}


def test_subgraph_matches_library(client, graph):
    resp = client.post("/search/subgraph", json={"query": "ethanol, liver", "n": 6})
    assert resp.status_code == 200
    lib = SubgraphRetriever().fit(graph).search("ethanol, liver", 6)
    assert resp.json()["triples"] == list(lib.triples)


def test_node_search(client):
    hits = client.post("/search/node", json={"query": "ethanol", "k": 2}).json()["hits"]
    assert hits[0]["ids"] == ["C00469"]


def test_bad_anchor_404(client):
    resp = client.post("/search/neighbors", json={"query": "x", "anchor": 500})
    assert resp.status_code == 404


@pytest.mark.parametrize(
    "path, body",
    [
        ("/search/subgraph", {"query": "x", "n": 0}),
        ("/search/subgraph", {"n": 3}),
        ("/search/neighbors", {"query": "x"}),
        ("/search/unknown", {"query": "x"}),
    ],
)
def test_bad_requests_400(client, path, body):
    assert client.post(path, json=body).status_code == 400


def test_agent_stream(client):
    resp = client.post("/agent/run", json={"question": "Does ethanol matter?"})
    assert resp.status_code == 200
    events = [json.loads(l) for l in resp.text.splitlines() if l]
    assert [e["event"] for e in events] == ["step", "done"]
    assert events[-1]["trajectory"]["final_answer"] == "Yes"


def test_agent_unconfigured_503(graph):
    c = TestClient(create_app(graph))
    assert c.post("/agent/run", json={"question": "Q?"}).status_code == 503


def test_concurrent_requests_identical(client):
    body = {"query": "adiponectin, fatty acid oxidation", "n": 8}

    def call(_):
        return client.post("/search/subgraph", json=body).text

    with ThreadPoolExecutor(8) as pool:
        outs = list(pool.map(call, range(100)))
    assert len(set(outs)) == 1
