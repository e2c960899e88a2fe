"""One JSON config file drives every subcommand; flags override by dotted path."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import CorpusConfig
from .errors import ConfigurationError
from .model import ModelConfig
from .training import TrainConfig
from .triplets import PipelineConfig


@dataclass(frozen=True)
class RunPaths:
    out_dir: Path

    @property
    def corpus_file(self) -> Path:
        return self.out_dir / "corpus.jsonl"

    @property
    def dataset_file(self) -> Path:
        return self.out_dir / "dataset.jsonl"

    @property
    def model_file(self) -> Path:
        return self.out_dir / "model.npz"

    @property
    def train_log(self) -> Path:
        return self.out_dir / "train_log.jsonl"

    @property
    def metrics_json(self) -> Path:
        return self.out_dir / "metrics.json"

    @property
    def metrics_tsv(self) -> Path:
        return self.out_dir / "metrics.tsv"

    @property
    def embeddings_tsv(self) -> Path:
        return self.out_dir / "embeddings.tsv"

    @property
    def ablation_tsv(self) -> Path:
        return self.out_dir / "ablation.tsv"

    @property
    def figures_dir(self) -> Path:
        return self.out_dir / "figures"


@dataclass
class RunConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "runs/default"
    host: str = "127.0.0.1"
    port: int = 8765
    serve_split: str = "test"
    eval_split: str = "test"

    def validate(self) -> None:
        self.corpus.validate()
        self.pipeline.validate()
        self.model.validate()
        self.train.validate()
        if not 1024 <= self.port <= 65535:
            raise ConfigurationError(f"port must lie in [1024, 65535], got {self.port}")
        for name in ("serve_split", "eval_split"):
            if getattr(self, name) not in ("train", "val", "test"):
                raise ConfigurationError(f"{name} must be train, val, or test")
        if not str(self.out_dir).strip():
            raise ConfigurationError("out_dir must not be empty")
        if Path(self.out_dir).is_file():
            raise ConfigurationError(f"out_dir {self.out_dir} is a file")

    @property
    def paths(self) -> RunPaths:
        return RunPaths(Path(self.out_dir))

    def to_dict(self) -> dict:
        return {
            "corpus": self.corpus.to_dict(),
            "pipeline": {"k": self.pipeline.k, "p_mention": self.pipeline.p_mention,
                         "seed": self.pipeline.seed},
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "out_dir": self.out_dir,
            "host": self.host,
            "port": self.port,
            "serve_split": self.serve_split,
            "eval_split": self.eval_split,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"corpus", "pipeline", "model", "train", "out_dir", "host", "port",
                 "serve_split", "eval_split"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config field: {sorted(unknown)[0]}")
        pipeline_d = d.get("pipeline", {})
        unknown_p = set(pipeline_d) - {"k", "p_mention", "seed"}
        if unknown_p:
            raise ConfigurationError(f"unknown config field: pipeline.{sorted(unknown_p)[0]}")
        return cls(
            corpus=CorpusConfig.from_dict(d.get("corpus", {})),
            pipeline=PipelineConfig(**pipeline_d),
            model=ModelConfig.from_dict(d.get("model", {})),
            train=TrainConfig.from_dict(d.get("train", {})),
            out_dir=d.get("out_dir", "runs/default"),
            host=d.get("host", "127.0.0.1"),
            port=d.get("port", 8765),
            serve_split=d.get("serve_split", "test"),
            eval_split=d.get("eval_split", "test"),
        )


def _parse_override(raw: str) -> tuple[list[str], object]:
    if "=" not in raw:
        raise ConfigurationError(f"override {raw!r} must look like section.field=value")
    key, value = raw.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigurationError(f"override {raw!r} has an empty key")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return path, parsed


def load_run_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    data: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc.msg}") from exc
    for raw in overrides or []:
        key_path, value = _parse_override(raw)
        node = data
        for part in key_path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {raw!r} descends into a non-object")
        node[key_path[-1]] = value
    config = RunConfig.from_dict(data)
    config.validate()
    return config
