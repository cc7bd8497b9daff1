"""Command line: ingest, query, agent, eval, serve.

Exit codes: 0 success, 1 usage error, 2 data error, 3 upstream model error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .agent import AgentConfig, TaskInstruction, run_agent, write_trajectory
from .clients import CachedClient, ChatClient, ChatTransportError, HttpChatClient, ScriptedClient
from .config import RunConfig
from .evaluation import TaskSchemaError, load_tasks, run_evaluation
from .pcst import SubgraphRetriever
from .service import SearchRequest, run_search
from .store import GraphDataError, load_graph_files

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_UPSTREAM = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _graph_args(p):
    p.add_argument("--config", help="JSON run config file")
    p.add_argument("--entries", help="entries JSONL (overrides config)")
    p.add_argument("--triples", help="triples JSONL (overrides config)")


def _model_args(p):
    p.add_argument("--scripted", help="JSON list of canned model responses (testing)")
    p.add_argument("--cache-dir", help="response cache directory")


def _agent_args(p):
    p.add_argument("--max-steps", type=int)
    p.add_argument("--n", type=int, dest="default_n", help="target subgraph size in triples")
    p.add_argument("--hops", type=int)
    for name in ("remove-seen", "dfs-order", "triple-to-text", "local-search", "final-reasoner"):
        p.add_argument(f"--no-{name}", action="store_true", help=f"ablation: disable {name.replace('-', ' ')}")
    p.add_argument("--extra-tools", action="store_true", help="expose node/edge/triple search to the agent")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pathseeker", description="Pathway graph retrieval and reasoning agent")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate and index a graph, print stats")
    _graph_args(p)

    p = sub.add_parser("query", help="run a retrieval API against a graph")
    _graph_args(p)
    p.add_argument("kind", choices=["node", "edge", "triple", "subgraph", "neighbors"])
    p.add_argument("--q", required=True, help="query keywords")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--k", type=int, default=10, help="top-k for node/edge/triple")
    p.add_argument("--anchor", type=int, help="anchor triple index for neighbors")
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--endpoint", help="endpoint keywords for triple search")
    p.add_argument("--json", action="store_true", help="print the JSON payload")

    p = sub.add_parser("agent", help="run the browsing agent on one question or a task file")
    _graph_args(p)
    _model_args(p)
    _agent_args(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--question")
    g.add_argument("--tasks", help="task JSONL")
    p.add_argument("--answer-mode", default="true_false", choices=["true_false", "open_ended"])
    p.add_argument("--out", help="run directory for trajectory logs")

    p = sub.add_parser("eval", help="evaluate CoT baseline or agent on a task file")
    _graph_args(p)
    _model_args(p)
    _agent_args(p)
    p.add_argument("--mode", required=True, choices=["cot", "agent"])
    p.add_argument("--tasks", required=True)
    p.add_argument("--shots", type=int, choices=[0, 2])
    p.add_argument("--repeats", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="run directory (report.json, report.txt)")

    p = sub.add_parser("serve", help="serve the retrieval and agent APIs over HTTP")
    _graph_args(p)
    _model_args(p)
    _agent_args(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    return parser


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "entries", None):
        cfg.graph.entries = args.entries
    if getattr(args, "triples", None):
        cfg.graph.triples = args.triples
    if getattr(args, "cache_dir", None):
        cfg.cache_dir = args.cache_dir
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    agent = cfg.agent
    if hasattr(args, "max_steps"):
        updates = {k: getattr(args, k) for k in ("max_steps", "default_n", "hops") if getattr(args, k) is not None}
        toggles = replace(
            agent.toggles,
            **{f: False for f in ("remove_seen", "dfs_order", "triple_to_text", "local_search", "final_reasoner") if getattr(args, f"no_{f}")},
        )
        agent = replace(agent, toggles=toggles, extra_tools=agent.extra_tools or args.extra_tools, **updates)
    if agent.seed is None and cfg.seed is not None:
        agent = replace(agent, seed=cfg.seed)
    cfg.agent = agent
    for name in ("shots", "repeats", "workers"):
        if getattr(args, name, None) is not None:
            setattr(cfg.eval, name, getattr(args, name))
    return cfg


def _load_graph(cfg: RunConfig):
    if not (cfg.graph.entries and cfg.graph.triples):
        raise UsageError("graph paths required: --entries and --triples (or a config file)")
    return load_graph_files(cfg.graph.entries, cfg.graph.triples)


def _client(args, cfg: RunConfig) -> ChatClient:
    if getattr(args, "scripted", None):
        responses = json.loads(Path(args.scripted).read_text(encoding="utf-8"))
        if not isinstance(responses, list) or not all(isinstance(r, str) for r in responses):
            raise UsageError("--scripted file must hold a JSON list of strings")
        client: ChatClient = ScriptedClient(responses)
    elif cfg.model.configured:
        client = HttpChatClient(cfg.model.base_url, cfg.model.name, cfg.model.api_key(), cfg.model.timeout)
    else:
        raise UsageError("no model configured: set model.base_url and model.name in the config, or pass --scripted")
    if cfg.cache_dir:
        client = CachedClient(client, cfg.cache_dir)
    return client


def _cmd_ingest(args) -> int:
    cfg = _run_config(args)
    s = _load_graph(cfg).stats()
    print(f"entries={s.entries} triples={s.triples} processes={s.processes}")
    return EXIT_OK


def _cmd_query(args) -> int:
    cfg = _run_config(args)
    graph = _load_graph(cfg)
    retriever = SubgraphRetriever(n_triples=args.n, hops=args.hops).fit(graph)
    if args.kind == "neighbors" and args.anchor is None:
        raise UsageError("neighbors needs --anchor")
    req = SearchRequest(query=args.q, n=args.n, k=args.k, anchor=args.anchor, hops=args.hops, endpoint=args.endpoint)
    try:
        payload = run_search(retriever, args.kind, req)
    except IndexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.json:
        print(json.dumps(payload, ensure_ascii=False, sort_keys=True))
    elif args.kind == "node":
        for h in payload["hits"]:
            print(h["display"])
    else:
        if payload["text"]:
            print(payload["text"])
    return EXIT_OK


def _cmd_agent(args) -> int:
    cfg = _run_config(args)
    graph = _load_graph(cfg)
    client = _client(args, cfg)
    retriever = SubgraphRetriever(n_triples=cfg.agent.default_n, hops=cfg.agent.hops).fit(graph)
    if args.question:
        tasks = [TaskInstruction(args.question, args.answer_mode)]
    else:
        tasks = [r.instruction() for r in load_tasks(args.tasks)]
    status = EXIT_OK
    for task in tasks:
        traj = run_agent(task, retriever, cfg.agent, client)
        if args.out:
            write_trajectory(traj, args.out, cfg.agent)
        print(traj.to_json())
        if traj.errored:
            status = EXIT_UPSTREAM
    return status


def _cmd_eval(args) -> int:
    cfg = _run_config(args)
    records = load_tasks(args.tasks)
    client = _client(args, cfg)
    env = None
    if args.mode == "agent":
        env = SubgraphRetriever(n_triples=cfg.agent.default_n, hops=cfg.agent.hops).fit(_load_graph(cfg))
    report = run_evaluation(
        records, args.mode, client, env, cfg.agent, cfg.eval.shots,
        workers=cfg.eval.workers, run_dir=cfg.output_dir, repeats=cfg.eval.repeats,
        run_config={"mode": args.mode, **cfg.to_dict()},
    )
    print(report.to_table(args.mode), end="")
    rows = report.per_task
    if rows and all(r.verdict == "errored" for r in rows):
        return EXIT_UPSTREAM
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _run_config(args)
    graph = _load_graph(cfg)
    factory = None
    if getattr(args, "scripted", None) or cfg.model.configured:
        factory = lambda: _client(args, cfg)  # noqa: E731
    app = create_app(graph, cfg.agent, factory, cfg.eval.workers)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


_COMMANDS = {"ingest": _cmd_ingest, "query": _cmd_query, "agent": _cmd_agent, "eval": _cmd_eval, "serve": _cmd_serve}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"pathseeker: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphDataError, TaskSchemaError, OSError, ValueError) as exc:
        print(f"pathseeker: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ChatTransportError as exc:
        print(f"pathseeker: model error: {exc}", file=sys.stderr)
        return EXIT_UPSTREAM


if __name__ == "__main__":
    sys.exit(main())
