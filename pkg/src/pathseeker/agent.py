"""Interactive pathway-browsing agent loop and its final reasoner."""

from __future__ import annotations

import ast
import enum
import json
import re
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .clients import ChatClient, ChatTransportError, complete_with_retries
from .encoding import (
    NO_NEW_PATHWAYS,
    SessionLedger,
    dfs_order,
    raw_triple_line,
    remove_seen,
    triple_line,
    triple_to_ordered_text,
)
from .pcst import SubgraphResult, SubgraphRetriever
from .relevance import Query
from .search import DEFAULT_TOP_K, search_edges, search_nodes, search_triples

GLOBAL_TOOL = "search_biopathway_subgraph_global"
LOCAL_TOOL = "search_biopathway_triple_N_hop_subgraph"
NODE_TOOL = "search_biopathway_node"
EDGE_TOOL = "search_biopathway_edge"
TRIPLE_TOOL = "search_biopathway_triple"

FINISHED_STATE = "You finished the task."
LOCAL_DISABLED = "Local search is disabled."
UNKNOWN_LINE = "Unknown line id."
NO_RELEVANT = "No relevant pathways were found for these keywords."
NO_ENTRIES = "No matching entries were found."
RETRY_PROMPT = (
    "Your last message did not contain a valid action. Write your thought, then one tool call "
    "between 'Action:' and 'End Action', or write 'Answer:' followed by 'Finished.' to stop."
)
STATE_PREFIX = "State: "

TASK_INTRO = "Please explore pathways to find relevant information regarding the following question: "

DEFAULT_PREAMBLE = """You are a biologist exploring a pathway graph database to gather evidence for a question.
Each retrieved pathway step is shown as one numbered line:
<line id>) <head ids>: <head names> | <tail ids>: <tail names> | <relation> | <biological processes>
Lines already shown are never repeated, and line ids keep counting across the whole session.

Tools:
{tools}
Reply in this format:
Action: Thought: <your reasoning about what to look up next>
Action:
<one tool call>
End Action

When you have gathered enough information, reply with:
Action: Thought: <why you are done>
Answer:
{finish}"""

TOOL_DOCS = {
    GLOBAL_TOOL: f"{GLOBAL_TOOL}(['keywords']) - retrieve a connected subgraph relevant to the keywords from the whole database.",
    LOCAL_TOOL: f"{LOCAL_TOOL}(line_id, ['keywords']) - retrieve a connected subgraph relevant to the keywords among the multi-hop neighbors of a previously shown line.",
    NODE_TOOL: f"{NODE_TOOL}(['keywords']) - list database entries matching the keywords.",
    EDGE_TOOL: f"{EDGE_TOOL}(['keywords']) - list single pathway steps matching the keywords.",
    TRIPLE_TOOL: f"{TRIPLE_TOOL}(['endpoint keywords'], ['keywords']) - list pathway steps matching the keywords whose head or tail matches the endpoint keywords.",
}

FINAL_PROMPTS = {
    "true_false": (
        "You are a biologist. Use the pathway information below, together with your own knowledge, "
        "to reason step by step about the question. End with a line 'Answer: Yes' or 'Answer: No'."
    ),
    "open_ended": (
        "You are a biologist. Use the pathway information below, together with your own knowledge, "
        "to reason step by step about the question. End with a line starting with 'Answer:' followed by your concise answer."
    ),
}


class ActionKind(str, enum.Enum):
    GLOBAL = "global_search"
    LOCAL = "local_search"
    NODE = "node_search"
    EDGE = "edge_search"
    TRIPLE = "triple_search"
    FINISH = "finish"


_TOOL_KIND = {
    LOCAL_TOOL: ActionKind.LOCAL,
    GLOBAL_TOOL: ActionKind.GLOBAL,
    TRIPLE_TOOL: ActionKind.TRIPLE,
    NODE_TOOL: ActionKind.NODE,
    EDGE_TOOL: ActionKind.EDGE,
}
_CALL_RE = re.compile(r"\b(" + "|".join(re.escape(n) for n in sorted(_TOOL_KIND, key=len, reverse=True)) + r")\s*\(")
_FINISHED = "Finished."


class ActionParseError(ValueError):
    pass


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    keywords: tuple[str, ...] = ()
    line_id: int | None = None
    endpoint_keywords: tuple[str, ...] = ()
    raw_text: str = ""

    @property
    def query(self) -> Query:
        return Query.from_keywords(self.keywords)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "keywords": list(self.keywords), "line_id": self.line_id, "raw_text": self.raw_text}
        if self.endpoint_keywords:
            d["endpoint_keywords"] = list(self.endpoint_keywords)
        return d


def _action_region(text: str) -> str:
    start = text.find("Action:")
    region = text[start + len("Action:"):] if start >= 0 else text
    end = region.find("End Action")
    return region if end < 0 else region[:end]


def _call_args(region: str, open_paren: int) -> str:
    depth, quote, i = 0, None, open_paren
    while i < len(region):
        ch = region[i]
        if quote:
            if ch == "\\":
                i += 1
            elif ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
            if depth == 0:
                return region[open_paren + 1:i]
        i += 1
    return region[open_paren + 1:]


def _split_outside_quotes(text: str) -> list[str]:
    parts, buf, quote = [], [], None
    for ch in text:
        if quote:
            buf.append(ch)
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
            buf.append(ch)
        elif ch == ",":
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    return [p.strip().strip("'\"").strip() for p in parts if p.strip().strip("'\"").strip()]


def _keyword_lists(args: str) -> tuple[list[int], list[list[str]]]:
    """Integers and string lists from a call's argument text, leniently."""
    try:
        value = ast.literal_eval(f"({args},)")
    except (ValueError, SyntaxError):
        value = None
    if value is not None:
        ints = [v for v in value if isinstance(v, int) and not isinstance(v, bool)]
        lists = []
        for v in value:
            if isinstance(v, (list, tuple)):
                lists.append([str(s).strip() for s in v if str(s).strip()])
            elif isinstance(v, str) and v.strip():
                lists.append([v.strip()])
        return ints, [lst for lst in lists if lst]
    ints = [int(m) for m in re.findall(r"(?<![\w'\"])(\d+)(?![\w'\"])", args.split("[", 1)[0])]
    lists = [_split_outside_quotes(m) for m in re.findall(r"\[(.*?)\]", args, flags=re.S)]
    if not lists:
        rest = re.sub(r"^\s*\d+\s*,", "", args) if ints else args
        lists = [_split_outside_quotes(rest)]
    return ints, [lst for lst in lists if lst]


def parse_action(model_text: str) -> Action:
    """Parse one agent turn into an :class:`Action`.

    Looks between ``Action:`` and ``End Action`` (or the end of the text) and
    takes whichever comes first: a recognized tool call or ``Finished.``.
    """
    region = _action_region(model_text)
    call = _CALL_RE.search(region)
    fin = region.find(_FINISHED)
    if call is None and fin < 0:
        raise ActionParseError("no recognizable action")
    if call is None or (0 <= fin < call.start()):
        return Action(ActionKind.FINISH, raw_text=model_text)
    kind = _TOOL_KIND[call.group(1)]
    ints, lists = _keyword_lists(_call_args(region, call.end() - 1))
    if kind is ActionKind.LOCAL:
        if not ints or not lists:
            raise ActionParseError(f"{LOCAL_TOOL} needs a line id and a keyword list")
        return Action(kind, tuple(lists[0]), ints[0], raw_text=model_text)
    if kind is ActionKind.TRIPLE:
        if len(lists) < 2:
            raise ActionParseError(f"{TRIPLE_TOOL} needs endpoint keywords and keywords")
        return Action(kind, tuple(lists[1]), endpoint_keywords=tuple(lists[0]), raw_text=model_text)
    if not lists:
        raise ActionParseError(f"{call.group(1)} needs a keyword list")
    return Action(kind, tuple(lists[0]), raw_text=model_text)


def answer_region(text: str) -> str:
    """Text after the last ``Answer:`` marker, or the whole text without one."""
    idx = text.rfind("Answer:")
    return (text[idx + len("Answer:"):] if idx >= 0 else text).strip()


# -- configuration and trajectory ---------------------------------------------


@dataclass
class Toggles:
    remove_seen: bool = True
    dfs_order: bool = True
    triple_to_text: bool = True
    local_search: bool = True
    final_reasoner: bool = True


@dataclass
class AgentConfig:
    max_steps: int = 15
    default_n: int = 20
    hops: int = 2
    toggles: Toggles = field(default_factory=Toggles)
    temperature: float | None = 0.0
    seed: int | None = None
    extra_tools: bool = False
    top_k: int = DEFAULT_TOP_K
    transport_retries: int = 3
    backoff: float = 0.5

    def __post_init__(self):
        if isinstance(self.toggles, dict):
            self.toggles = Toggles(**self.toggles)
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.default_n < 1 or self.hops < 1:
            raise ValueError("default_n and hops must be >= 1")

    @property
    def sampling(self) -> dict:
        return {"temperature": self.temperature, "seed": self.seed}

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TaskInstruction:
    question: str
    answer_mode: str = "true_false"
    task_id: str = "task"
    preamble: str | None = None
    final_prompt: str | None = None

    def __post_init__(self):
        if not self.question or not self.question.strip():
            raise ValueError("question must be non-empty")
        if self.answer_mode not in FINAL_PROMPTS:
            raise ValueError(f"unknown answer_mode {self.answer_mode!r}")


@dataclass
class Observation:
    text: str
    new_triples: list[tuple[int, int]] = field(default_factory=list)

    @property
    def body(self) -> str:
        return self.text[len(STATE_PREFIX):] if self.text.startswith(STATE_PREFIX) else self.text


@dataclass
class Step:
    action: Action
    observation: Observation


@dataclass
class Trajectory:
    task_id: str = "task"
    steps: list[Step] = field(default_factory=list)
    ledger: SessionLedger = field(default_factory=SessionLedger)
    final_answer: str | None = None
    api_counts: dict = field(default_factory=lambda: {"global": 0, "local": 0, "other": 0})
    parse_retries: int = 0
    parse_degraded: bool = False
    finished: bool = False
    errored: bool = False
    error: str | None = None
    elapsed: float = 0.0

    @property
    def step_count(self) -> int:
        return len(self.steps)

    @property
    def observations(self) -> list[Observation]:
        return [s.observation for s in self.steps if s.action.kind is not ActionKind.FINISH]

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "task_id": self.task_id,
            "steps": [
                {"action": s.action.to_dict(), "observation": {"text": s.observation.text, "new_triples": [list(p) for p in s.observation.new_triples]}}
                for s in self.steps
            ],
            "ledger": self.ledger.to_dict(),
            "api_counts": dict(self.api_counts),
            "step_count": self.step_count,
            "parse_retries": self.parse_retries,
            "parse_degraded": self.parse_degraded,
            "finished": self.finished,
            "errored": self.errored,
            "error": self.error,
            "final_answer": self.final_answer,
        }
        if include_timing:
            d["elapsed"] = self.elapsed
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), ensure_ascii=False, sort_keys=True)


# -- environment step -----------------------------------------------------------


def _state(text: str, new: list[tuple[int, int]] | None = None) -> Observation:
    return Observation(STATE_PREFIX + text, new or [])


def _emit(env: SubgraphRetriever, trajectory: Trajectory, triples: Sequence[int], config: AgentConfig, empty_text: str) -> Observation:
    tg = config.toggles
    graph = env.graph_
    ledger = trajectory.ledger
    pending = remove_seen(triples, ledger) if tg.remove_seen else sorted(set(triples))
    if not triples:
        return _state(empty_text)
    ordered = dfs_order(pending, graph) if tg.dfs_order else pending
    start = ledger.next_line
    text = triple_to_ordered_text(
        ordered, graph, ledger, allow_repeats=not tg.remove_seen,
        render=triple_line if tg.triple_to_text else raw_triple_line,
    )
    return _state(text, [(start + i, t) for i, t in enumerate(ordered)])


def step(env: SubgraphRetriever, trajectory: Trajectory, action: Action, config: AgentConfig) -> Observation:
    """Execute ``action`` against the graph and return the observation text."""
    kind = action.kind
    if kind is ActionKind.FINISH:
        trajectory.finished = True
        return _state(FINISHED_STATE)
    if kind is ActionKind.GLOBAL:
        trajectory.api_counts["global"] += 1
        result: SubgraphResult = env.search(action.query, config.default_n)
        return _emit(env, trajectory, result.triples, config, NO_RELEVANT)
    if kind is ActionKind.LOCAL:
        trajectory.api_counts["local"] += 1
        if not config.toggles.local_search:
            return _state(LOCAL_DISABLED)
        try:
            anchor = trajectory.ledger.triple_at(action.line_id)
        except KeyError:
            return _state(UNKNOWN_LINE)
        result = env.search_neighbors(anchor, action.query, config.default_n, config.hops)
        return _emit(env, trajectory, result.triples, config, NO_RELEVANT)

    trajectory.api_counts["other"] += 1
    if not config.extra_tools:
        return _state(f"Tool {kind.value} is not available.")
    graph, scorer = env.graph_, env.scorer_
    if kind is ActionKind.NODE:
        hits = search_nodes(graph, action.query, scorer, config.top_k)
        if not hits:
            return _state(NO_ENTRIES)
        return _state("\n".join(f"- {graph.entries[h.item].display}" for h in hits))
    if kind is ActionKind.EDGE:
        hits = search_edges(graph, action.query, scorer, config.top_k)
    else:
        hits = search_triples(graph, action.query, Query.from_keywords(action.endpoint_keywords), scorer, config.top_k)
    return _emit(env, trajectory, [h.item for h in hits], config, NO_RELEVANT)


# -- loop --------------------------------------------------------------------------


def build_preamble(config: AgentConfig) -> str:
    tools = [GLOBAL_TOOL]
    if config.toggles.local_search:
        tools.append(LOCAL_TOOL)
    if config.extra_tools:
        tools += [NODE_TOOL, EDGE_TOOL, TRIPLE_TOOL]
    finish = "Finished." if config.toggles.final_reasoner else "<your final answer>\nFinished."
    return DEFAULT_PREAMBLE.format(tools="\n".join(TOOL_DOCS[t] for t in tools), finish=finish)


def initial_messages(task: TaskInstruction, config: AgentConfig) -> list[dict]:
    return [
        {"role": "system", "content": task.preamble or build_preamble(config)},
        {"role": "user", "content": TASK_INTRO + task.question},
    ]


def final_reason(task: TaskInstruction, trajectory: Trajectory, client: ChatClient, config: AgentConfig | None = None, sleep: Callable[[float], None] = time.sleep) -> str:
    """Answer from the question and the observations only; no agent thoughts or actions."""
    config = config or AgentConfig()
    parts = [f"Question: {task.question}"]
    bodies = [o.body for o in trajectory.observations]
    if bodies:
        parts.append("Pathway information:\n" + "\n".join(bodies))
    messages = [
        {"role": "system", "content": task.final_prompt or FINAL_PROMPTS[task.answer_mode]},
        {"role": "user", "content": "\n\n".join(parts)},
    ]
    return complete_with_retries(client, messages, config.sampling, config.transport_retries, config.backoff, sleep)


def run_agent(
    task: TaskInstruction,
    env: SubgraphRetriever,
    config: AgentConfig,
    client: ChatClient,
    sleep: Callable[[float], None] = time.sleep,
    on_event: Callable[[dict], None] | None = None,
) -> Trajectory:
    """Run one browsing session, then the final reasoner (unless toggled off)."""
    t0 = time.perf_counter()
    traj = Trajectory(task_id=task.task_id)
    messages = initial_messages(task, config)
    last_text = ""

    def call(msgs):
        return complete_with_retries(client, msgs, config.sampling, config.transport_retries, config.backoff, sleep)

    try:
        while traj.step_count < config.max_steps and not traj.finished:
            text = call(messages)
            last_text = text
            try:
                action = parse_action(text)
            except ActionParseError:
                traj.parse_retries += 1
                messages = messages + [
                    {"role": "assistant", "content": text},
                    {"role": "user", "content": STATE_PREFIX + RETRY_PROMPT},
                ]
                text = call(messages)
                last_text = text
                try:
                    action = parse_action(text)
                except ActionParseError:
                    traj.parse_degraded = True
                    action = Action(ActionKind.FINISH, raw_text=text)
            obs = step(env, traj, action, config)
            traj.steps.append(Step(action, obs))
            if on_event:
                on_event({"event": "step", "index": traj.step_count - 1, "action": action.to_dict(), "observation": obs.text})
            messages = messages + [
                {"role": "assistant", "content": text},
                {"role": "user", "content": obs.text},
            ]
        if config.toggles.final_reasoner:
            traj.final_answer = final_reason(task, traj, client, config, sleep)
        else:
            traj.final_answer = answer_region(last_text)
    except ChatTransportError as exc:
        traj.errored = True
        traj.error = str(exc)
    traj.elapsed = time.perf_counter() - t0
    if on_event:
        on_event({"event": "done", "trajectory": traj.to_dict()})
    return traj


def write_trajectory(traj: Trajectory, run_dir: str | Path, config: AgentConfig | None = None) -> Path:
    out = Path(run_dir) / "trajectories"
    out.mkdir(parents=True, exist_ok=True)
    record = traj.to_dict(include_timing=True)
    if config is not None:
        record["config"] = config.to_dict()
    path = out / f"{re.sub(r'[^A-Za-z0-9_.-]', '_', traj.task_id)}.json"
    path.write_text(json.dumps(record, ensure_ascii=False, indent=2, sort_keys=True), encoding="utf-8")
    return path
