"""Run configuration, loaded from a JSON file and overridable from the command line.

Example file::

    {
      "graph": {"entries": "graph/entries.jsonl", "triples": "graph/triples.jsonl"},
      "model": {"base_url": "http://localhost:8000/v1", "name": "llama-3.1-8b-instruct",
                "api_key_env": "PATHSEEKER_API_KEY"},
      "agent": {"max_steps": 15, "default_n": 20, "hops": 2,
                "toggles": {"remove_seen": true, "local_search": true}},
      "eval": {"shots": 0, "repeats": 1, "workers": 4},
      "output_dir": "runs/default",
      "cache_dir": null,
      "seed": 0
    }

The model key itself never goes in the file; ``api_key_env`` names the
environment variable holding it.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .agent import AgentConfig, Toggles

DEFAULT_KEY_ENV = "PATHSEEKER_API_KEY"


@dataclass
class GraphPaths:
    entries: str | None = None
    triples: str | None = None


@dataclass
class ModelConfig:
    base_url: str | None = None
    name: str | None = None
    api_key_env: str = DEFAULT_KEY_ENV
    timeout: float = 120.0

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env)

    @property
    def configured(self) -> bool:
        return bool(self.base_url and self.name)


@dataclass
class EvalOptions:
    shots: int = 0
    repeats: int = 1
    workers: int = 4


@dataclass
class RunConfig:
    graph: GraphPaths = field(default_factory=GraphPaths)
    model: ModelConfig = field(default_factory=ModelConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    eval: EvalOptions = field(default_factory=EvalOptions)
    output_dir: str = "runs/default"
    cache_dir: str | None = None
    seed: int | None = 0

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {"graph", "model", "agent", "eval", "output_dir", "cache_dir", "seed"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        agent = dict(data.get("agent") or {})
        agent["toggles"] = Toggles(**(agent.get("toggles") or {}))
        return cls(
            graph=GraphPaths(**(data.get("graph") or {})),
            model=ModelConfig(**(data.get("model") or {})),
            agent=AgentConfig(**agent),
            eval=EvalOptions(**(data.get("eval") or {})),
            output_dir=data.get("output_dir", "runs/default"),
            cache_dir=data.get("cache_dir"),
            seed=data.get("seed", 0),
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)
