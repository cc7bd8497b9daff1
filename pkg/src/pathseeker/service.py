"""Read-only JSON-over-HTTP service around one loaded pathway graph."""

from __future__ import annotations

import json
import queue
import threading
from typing import Callable, Literal

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .agent import AgentConfig, TaskInstruction, run_agent
from .clients import ChatClient
from .encoding import dfs_order, triple_to_text
from .pcst import SubgraphResult, SubgraphRetriever
from .search import DEFAULT_TOP_K, search_edges, search_nodes, search_triples
from .store import PathwayGraph


class SearchRequest(BaseModel):
    query: str
    n: int = Field(20, ge=1)
    k: int = Field(DEFAULT_TOP_K, ge=1)
    anchor: int | None = None
    hops: int = Field(2, ge=1)
    endpoint: str | None = None


class AgentRequest(BaseModel):
    question: str = Field(min_length=1)
    answer_mode: Literal["true_false", "open_ended"] = "true_false"
    task_id: str = "task"


def subgraph_payload(retriever: SubgraphRetriever, result: SubgraphResult) -> dict:
    body = result.to_dict()
    body["text"] = triple_to_text(dfs_order(result.triples, retriever.graph_), retriever.graph_)
    return body


def run_search(retriever: SubgraphRetriever, kind: str, req: SearchRequest) -> dict:
    """Shared by the CLI and the service so both return the same payloads."""
    graph, scorer = retriever.graph_, retriever.scorer_
    if kind == "subgraph":
        return subgraph_payload(retriever, retriever.search(req.query, req.n))
    if kind == "neighbors":
        if req.anchor is None:
            raise ValueError("neighbors search needs an anchor")
        graph.check_triple(req.anchor)
        return subgraph_payload(retriever, retriever.search_neighbors(req.anchor, req.query, req.n, req.hops))
    if kind == "node":
        hits = search_nodes(graph, req.query, scorer, req.k)
        return {"hits": [{"ids": list(h.item.ids), "display": graph.entries[h.item].display, "score": h.score} for h in hits]}
    if kind == "edge":
        hits = search_edges(graph, req.query, scorer, req.k)
    elif kind == "triple":
        hits = search_triples(graph, req.query, req.endpoint or "", scorer, req.k)
    else:
        raise KeyError(kind)
    return {
        "hits": [{"triple": h.item, "score": h.score} for h in hits],
        "text": triple_to_text([h.item for h in hits], graph),
    }


def create_app(
    graph: PathwayGraph,
    agent_config: AgentConfig | None = None,
    client_factory: Callable[[], ChatClient] | None = None,
    workers: int = 4,
    retriever: SubgraphRetriever | None = None,
) -> FastAPI:
    agent_config = agent_config or AgentConfig()
    retriever = retriever or SubgraphRetriever(n_triples=agent_config.default_n, hops=agent_config.hops).fit(graph)
    slots = threading.BoundedSemaphore(workers)
    app = FastAPI(title="pathseeker")

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": json.loads(json.dumps(exc.errors(), default=str))})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/stats")
    def get_stats():
        s = graph.stats()
        return {"entries": s.entries, "triples": s.triples, "processes": s.processes}

    @app.post("/search/{kind}")
    def search(kind: Literal["node", "edge", "triple", "subgraph", "neighbors"], req: SearchRequest):
        try:
            return run_search(retriever, kind, req)
        except IndexError as exc:
            raise HTTPException(404, str(exc)) from None
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from None

    @app.post("/agent/run")
    def agent_run(req: AgentRequest):
        if client_factory is None:
            raise HTTPException(503, "no model endpoint configured")
        try:
            client = client_factory()
        except Exception as exc:  # noqa: BLE001 - any construction failure means unreachable
            raise HTTPException(503, f"model endpoint unavailable: {exc}") from None
        task = TaskInstruction(req.question, req.answer_mode, task_id=req.task_id)
        events: queue.Queue = queue.Queue()
        done = object()

        def work():
            with slots:
                try:
                    run_agent(task, retriever, agent_config, client, on_event=events.put)
                except Exception as exc:  # noqa: BLE001 - surfaced to the stream
                    events.put({"event": "error", "detail": str(exc)})
                finally:
                    events.put(done)

        threading.Thread(target=work, daemon=True).start()

        def stream():
            while True:
                item = events.get()
                if item is done:
                    return
                yield json.dumps(item, ensure_ascii=False) + "\n"

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    return app
