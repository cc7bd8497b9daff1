"""Evaluation harness: task files, answer scoring, CoT baseline and report aggregation."""

from __future__ import annotations

import json
import math
import re
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import IO, Callable, Iterable, Sequence

from .agent import AgentConfig, TaskInstruction, answer_region, run_agent, write_trajectory
from .clients import ChatClient, ChatTransportError, complete_with_retries
from .pcst import SubgraphRetriever

ANSWER_MODES = ("true_false", "open_ended")
DIMENSIONS = {
    "inquiry_type": ("normal", "perturbed"),
    "extra_condition": ("natural", "intervened"),
    "investigation_target": ("single", "interaction", "function"),
}
VERDICTS = ("correct", "incorrect", "unresolved", "errored")
STEP_BUCKETS = (("1-4", 0, 4), ("4-6", 4, 6), ("6-8", 6, 8), ("8-10", 8, 10), (">=10", 10, math.inf))
UNRESOLVED = "Unresolved"


class TaskSchemaError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class TaskRecord:
    id: str
    question: str
    gold_answer: str
    answer_mode: str
    categories: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.id or not self.question or not self.question.strip():
            raise ValueError("id and question must be non-empty")
        if self.answer_mode not in ANSWER_MODES:
            raise ValueError(f"answer_mode must be one of {ANSWER_MODES}, got {self.answer_mode!r}")
        if self.answer_mode == "true_false" and self.gold_answer not in ("Yes", "No"):
            raise ValueError(f"true_false gold answer must be Yes or No, got {self.gold_answer!r}")
        for dim, value in self.categories.items():
            if dim not in DIMENSIONS:
                raise ValueError(f"unknown category dimension {dim!r}")
            if value not in DIMENSIONS[dim]:
                raise ValueError(f"{dim} must be one of {DIMENSIONS[dim]}, got {value!r}")

    def instruction(self) -> TaskInstruction:
        return TaskInstruction(self.question, self.answer_mode, task_id=self.id)


def load_tasks(source: str | Path | IO) -> list[TaskRecord]:
    """Read line-delimited JSON task records; duplicate ids are rejected."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return load_tasks(fh)
    tasks, ids = [], set()
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise TaskSchemaError(f"malformed JSON: {exc.msg}", lineno) from None
        if not isinstance(rec, dict):
            raise TaskSchemaError("record is not an object", lineno)
        missing = [k for k in ("id", "question", "gold_answer", "answer_mode") if k not in rec]
        if missing:
            raise TaskSchemaError(f"missing fields {missing}", lineno)
        try:
            task = TaskRecord(
                str(rec["id"]), rec["question"], rec["gold_answer"], rec["answer_mode"], dict(rec.get("categories") or {})
            )
        except (ValueError, TypeError) as exc:
            raise TaskSchemaError(str(exc), lineno) from None
        if task.id in ids:
            raise TaskSchemaError(f"duplicate task id {task.id!r}", lineno)
        ids.add(task.id)
        tasks.append(task)
    return tasks


# -- scoring ----------------------------------------------------------------------


def extract_tf_answer(answer_text: str | None) -> str:
    """Yes, No, or Unresolved when the answer region has both or neither."""
    if not answer_text:
        return UNRESOLVED
    found = set(re.findall(r"\b(yes|no)\b", answer_region(answer_text).lower()))
    if len(found) != 1:
        return UNRESOLVED
    return found.pop().capitalize()


def tf_verdict(gold: str, answer_text: str | None) -> str:
    pred = extract_tf_answer(answer_text)
    if pred == UNRESOLVED:
        return "unresolved"
    return "correct" if pred == gold else "incorrect"


def balanced_accuracy(rows: Iterable[tuple[str, str]]) -> float:
    """Mean of per-class accuracy over gold-Yes and gold-No rows; non-correct verdicts count as wrong."""
    totals, hits = Counter(), Counter()
    for gold, verdict in rows:
        totals[gold] += 1
        hits[gold] += verdict == "correct"
    classes = [c for c in ("Yes", "No") if totals[c]]
    if not classes:
        raise ValueError("balanced_accuracy needs at least one row")
    if len(classes) == 1:
        warnings.warn(f"only gold={classes[0]} rows present; reporting that class's accuracy", RuntimeWarning, stacklevel=2)
    return sum(hits[c] / totals[c] for c in classes) / len(classes)


def answer_entropy(samples: Sequence[str], repeats: int = 5) -> float:
    """Shannon entropy (bits) of the answer distribution over repeated samples."""
    if len(samples) != repeats:
        raise ValueError(f"expected {repeats} samples, got {len(samples)}")
    counts = Counter(samples)
    n = len(samples)
    return max(0.0, -sum((c / n) * math.log2(c / n) for c in counts.values()))


def _load_json(name: str):
    return json.loads(resources.files("pathseeker").joinpath("data", name).read_text(encoding="utf-8"))


JUDGE_INSTRUCTION = (
    "You grade answers to biology pathway questions. Compare the candidate answer with the reference "
    "answer. The candidate is CORRECT if it states the same effect or conclusion as the reference, even "
    "with different wording or extra correct detail. It is INCORRECT if it contradicts the reference, "
    "misses the requested effect, or is too vague to commit to it. Explain briefly, then finish with a "
    "final line containing only CORRECT or INCORRECT."
)


@dataclass(frozen=True)
class JudgeResult:
    verdict: str
    flagged: bool = False
    raw: str = ""


def _norm(text: str) -> str:
    return " ".join(text.lower().split()).rstrip(".")


def judge_messages(question: str, gold: str, candidate: str, examples: Sequence[dict] | None = None) -> list[dict]:
    examples = _load_json("judge_examples.json") if examples is None else examples
    shots = "\n\n".join(
        f"Question: {e['question']}\nReference answer: {e['gold']}\nCandidate answer: {e['candidate']}\n"
        f"Grading: {e['reasoning']}\n{e['verdict']}"
        for e in examples
    )
    user = f"{shots}\n\nQuestion: {question}\nReference answer: {gold}\nCandidate answer: {candidate}\nGrading:"
    return [{"role": "system", "content": JUDGE_INSTRUCTION}, {"role": "user", "content": user}]


def parse_judge_verdict(text: str) -> str | None:
    tokens = re.findall(r"\b(CORRECT|INCORRECT)\b", text.upper())
    return tokens[-1].lower() if tokens else None


def judge_open_ended(question: str, gold: str, candidate: str | None, client: ChatClient, sampling: dict | None = None, sleep=None) -> JudgeResult:
    """One judge call with five worked examples; exact matches and empty answers skip the call."""
    candidate = (candidate or "").strip()
    if not candidate:
        return JudgeResult("incorrect")
    if _norm(candidate) == _norm(gold):
        return JudgeResult("correct")
    kw = {} if sleep is None else {"sleep": sleep}
    raw = complete_with_retries(client, judge_messages(question, gold, candidate), sampling or {"temperature": 0.0}, **kw)
    verdict = parse_judge_verdict(raw)
    if verdict is None:
        return JudgeResult("incorrect", True, raw)
    return JudgeResult(verdict, False, raw)


COT_INSTRUCTION = {
    "true_false": "Answer the biology question. Think step by step about the pathway involved, then end with 'Answer: Yes' or 'Answer: No'.",
    "open_ended": "Answer the biology question. Think step by step about the pathway involved, then end with a line starting with 'Answer:' followed by your concise answer.",
}


def cot_messages(task: TaskRecord | TaskInstruction, shots: int = 0) -> list[dict]:
    if shots not in (0, 2):
        raise ValueError("shots must be 0 or 2")
    mode = task.answer_mode
    parts = []
    if shots:
        for ex in _load_json("cot_examples.json")[mode]:
            parts.append(f"Question: {ex['question']}\nReasoning: {ex['reasoning']}\nAnswer: {ex['answer']}")
    parts.append(f"Question: {task.question}\nReasoning:")
    return [{"role": "system", "content": COT_INSTRUCTION[mode]}, {"role": "user", "content": "\n\n".join(parts)}]


def cot_baseline(task: TaskRecord | TaskInstruction, client: ChatClient, shots: int = 0, sampling: dict | None = None, sleep=None) -> str:
    kw = {} if sleep is None else {"sleep": sleep}
    return complete_with_retries(client, cot_messages(task, shots), sampling or {}, **kw)


# -- runs and reports -------------------------------------------------------------


@dataclass
class TaskOutcome:
    id: str
    answer_mode: str
    gold: str
    predicted: str | None
    verdict: str
    categories: dict = field(default_factory=dict)
    steps: int | None = None
    api_counts: dict | None = None
    judge_flagged: bool = False
    samples: list | None = None
    error: str | None = None


def _metric(mode: str, rows: Sequence[TaskOutcome]) -> float | None:
    if not rows:
        return None
    if mode == "true_false":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return balanced_accuracy((r.gold, r.verdict) for r in rows)
    return sum(r.verdict == "correct" for r in rows) / len(rows)


def step_histogram(step_counts: Iterable[int]) -> dict[str, float]:
    """Percentage of sessions per step bucket; buckets are half-open [lo, hi)."""
    counts = Counter()
    total = 0
    for s in step_counts:
        total += 1
        for label, lo, hi in STEP_BUCKETS:
            if lo <= s < hi:
                counts[label] += 1
                break
    return {label: (100.0 * counts[label] / total if total else 0.0) for label, _, _ in STEP_BUCKETS}


@dataclass
class EvalReport:
    per_task: list[TaskOutcome]
    aggregates: dict
    run_config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"run_config": self.run_config, "aggregates": self.aggregates, "per_task": [asdict(r) for r in self.per_task]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True)

    def to_table(self, method: str = "method") -> str:
        cols = [v for vals in DIMENSIONS.values() for v in vals]
        lines = []
        for mode, agg in sorted(self.aggregates.get("by_mode", {}).items()):
            header = ["Method", "Overall", *[c.capitalize() for c in cols]]
            cells = [method, _pct(agg["overall"])]
            for dim, vals in DIMENSIONS.items():
                cells += [_pct(agg["by_category"].get(dim, {}).get(v)) for v in vals]
            widths = [max(len(h), len(c)) for h, c in zip(header, cells)]
            lines.append(f"[{mode}] n={agg['n']}")
            lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
            lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
        if self.aggregates.get("steps"):
            lines.append("steps %: " + "  ".join(f"{k}={v:.2f}" for k, v in self.aggregates["steps"].items()))
        if self.aggregates.get("api_means"):
            api = self.aggregates["api_means"]
            lines.append(f"api means: global={api['global']:.2f} local={api['local']:.2f}")
        if self.aggregates.get("mean_entropy") is not None:
            lines.append(f"mean entropy (bits): {self.aggregates['mean_entropy']:.4f}")
        return "\n".join(lines) + "\n"


def _pct(x: float | None) -> str:
    return "-" if x is None else f"{100 * x:.2f}"


def aggregate(outcomes: Sequence[TaskOutcome], run_config: dict | None = None) -> EvalReport:
    """Overall and per-category metrics per answer mode, plus agent step/API statistics."""
    rows = sorted(outcomes, key=lambda r: r.id)
    by_mode = {}
    for mode in ANSWER_MODES:
        mrows = [r for r in rows if r.answer_mode == mode]
        if not mrows:
            continue
        cats = {}
        for dim, values in DIMENSIONS.items():
            cells = {}
            for v in values:
                sub = [r for r in mrows if r.categories.get(dim) == v]
                if sub:
                    cells[v] = _metric(mode, sub)
            cats[dim] = cells
        by_mode[mode] = {
            "n": len(mrows),
            "overall": _metric(mode, mrows),
            "by_category": cats,
            "verdicts": {v: sum(r.verdict == v for r in mrows) for v in VERDICTS},
        }
    aggregates: dict = {"by_mode": by_mode}
    agent_rows = [r for r in rows if r.steps is not None]
    if agent_rows:
        aggregates["steps"] = step_histogram(r.steps for r in agent_rows)
        aggregates["api_means"] = {
            k: sum((r.api_counts or {}).get(k, 0) for r in agent_rows) / len(agent_rows) for k in ("global", "local")
        }
    sampled = [r for r in rows if r.samples]
    if sampled:
        aggregates["mean_entropy"] = sum(answer_entropy(r.samples, len(r.samples)) for r in sampled) / len(sampled)
    return EvalReport(rows, aggregates, dict(run_config or {}))


def evaluate_task(
    record: TaskRecord,
    mode: str,
    client: ChatClient,
    env: SubgraphRetriever | None = None,
    config: AgentConfig | None = None,
    shots: int = 0,
    judge_client: ChatClient | None = None,
    run_dir: str | Path | None = None,
    repeats: int = 1,
    sleep: Callable[[float], None] | None = None,
) -> TaskOutcome:
    """Answer one task with ``mode`` ("cot" or "agent") and score it."""
    config = config or AgentConfig()
    sleep_kw = {} if sleep is None else {"sleep": sleep}
    answers, steps, api = [], None, None
    try:
        for r in range(repeats):
            cfg = config if r == 0 or config.seed is None else replace(config, seed=config.seed + r)
            if mode == "cot":
                answers.append(cot_baseline(record, client, shots, cfg.sampling, **sleep_kw))
            elif mode == "agent":
                if env is None:
                    raise ValueError("agent mode needs a fitted SubgraphRetriever")
                traj = run_agent(record.instruction(), env, cfg, client, **sleep_kw)
                if run_dir is not None and r == 0:
                    write_trajectory(traj, run_dir, cfg)
                if traj.errored:
                    raise ChatTransportError(traj.error or "agent session errored")
                if r == 0:
                    steps, api = traj.step_count, dict(traj.api_counts)
                answers.append(traj.final_answer)
            else:
                raise ValueError(f"unknown mode {mode!r}")
    except ChatTransportError as exc:
        return TaskOutcome(record.id, record.answer_mode, record.gold_answer, None, "errored", dict(record.categories), steps, api, error=str(exc))

    predicted = answers[0]
    flagged = False
    if record.answer_mode == "true_false":
        verdict = tf_verdict(record.gold_answer, predicted)
    else:
        try:
            jr = judge_open_ended(record.question, record.gold_answer, answer_region(predicted or ""), judge_client or client, **sleep_kw)
        except ChatTransportError as exc:
            return TaskOutcome(record.id, record.answer_mode, record.gold_answer, predicted, "errored", dict(record.categories), steps, api, error=str(exc))
        verdict, flagged = jr.verdict, jr.flagged
    samples = [extract_tf_answer(a) for a in answers] if repeats > 1 and record.answer_mode == "true_false" else None
    return TaskOutcome(record.id, record.answer_mode, record.gold_answer, predicted, verdict, dict(record.categories), steps, api, flagged, samples)


def run_evaluation(
    records: Sequence[TaskRecord],
    mode: str,
    client: ChatClient,
    env: SubgraphRetriever | None = None,
    config: AgentConfig | None = None,
    shots: int = 0,
    judge_client: ChatClient | None = None,
    workers: int = 4,
    run_dir: str | Path | None = None,
    repeats: int = 1,
    run_config: dict | None = None,
    sleep: Callable[[float], None] | None = None,
) -> EvalReport:
    """Evaluate all records on a bounded thread pool; rows come back ordered by task id."""
    if workers < 1:
        raise ValueError("workers must be >= 1")

    def one(rec):
        return evaluate_task(rec, mode, client, env, config, shots, judge_client, run_dir, repeats, sleep)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(one, records))
    report = aggregate(outcomes, run_config)
    if run_dir is not None:
        out = Path(run_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "report.txt").write_text(report.to_table(mode), encoding="utf-8")
    return report
