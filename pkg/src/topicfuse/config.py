"""Flat ``key=value`` experiment configuration."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import ConfigError, ContractError
from .trainer import MODES, TrainConfig


def _seeds(text: str) -> tuple[int, ...]:
    parts = [t.strip() for t in text.split(",") if t.strip()]
    if not parts:
        raise ValueError("empty seed list")
    return tuple(int(t) for t in parts)


# key -> (parser, default); paths default to empty (unset)
SCHEMA: dict[str, tuple] = {
    "corpus.train": (str, ""),
    "corpus.dev": (str, ""),
    "corpus.test": (str, ""),
    "corpus.stopwords": (str, ""),
    "vocab.f_min": (int, 10),
    "nvdm.k": (int, 100),
    "nvdm.h": (int, 256),
    "nvdm.samples": (int, 10),
    "nvdm.lr": (float, 0.001),
    "nvdm.epochs": (int, 15),
    "nvdm.batch": (int, 32),
    "enc.layers": (int, 2),
    "enc.hidden": (int, 64),
    "enc.heads": (int, 4),
    "enc.lr": (float, 2e-4),
    "enc.max_len": (int, 512),
    "enc.min_count": (int, 5),
    "enc.dropout": (float, 0.1),
    "train.epochs": (int, 15),
    "train.batch": (int, 4),
    "train.alpha": (float, 0.9),
    "train.p": (int, 1),
    "train.seeds": (_seeds, (1, 2, 3)),
    "mode": (str, "topicfused"),
}


@dataclass
class Config:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    def with_overrides(self, **overrides) -> "Config":
        vals = dict(self.values)
        for k, v in overrides.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key: {key}")
            vals[key] = v
        return Config(vals)

    def train_config(self) -> TrainConfig:
        v = self.values
        try:
            return TrainConfig(
                epochs=v["train.epochs"], batch_size=v["train.batch"], nvdm_lr=v["nvdm.lr"], enc_lr=v["enc.lr"],
                alpha=v["train.alpha"], p=v["train.p"], seeds=v["train.seeds"], mode=v["mode"],
                max_len=v["enc.max_len"], n_topics=v["nvdm.k"], nvdm_hidden=v["nvdm.h"],
                samples=v["nvdm.samples"], nvdm_epochs=v["nvdm.epochs"], nvdm_batch=v["nvdm.batch"],
                enc_layers=v["enc.layers"], enc_hidden=v["enc.hidden"], enc_heads=v["enc.heads"],
                dropout=v["enc.dropout"], f_min=v["vocab.f_min"], seq_min_count=v["enc.min_count"],
            )
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc

    def dumps(self) -> str:
        """Canonical text: every key, sorted, seeds comma-joined."""
        lines = []
        for k in sorted(self.values):
            v = self.values[k]
            if isinstance(v, tuple):
                v = ",".join(str(s) for s in v)
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, source: str = "<config>") -> Config:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    cfg = Config()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown config key: {key}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key: {key}")
        seen.add(key)
        parser = SCHEMA[key][0]
        try:
            cfg.values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {value!r}") from exc
    if cfg.values["mode"] not in MODES:
        raise ConfigError(f"{source}: mode must be one of {', '.join(MODES)}")
    return cfg


def load_config(path: str | Path) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"config file not found: {path}") from exc
    return parse_config(text, str(path))
