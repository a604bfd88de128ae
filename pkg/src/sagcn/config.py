"""Run configuration: defaults, config-file parsing, flag precedence, hashing.

Config files are flat ``key = value`` text, one pair per line, with ``#``
comments. Command-line flags override file values, which override the
defaults below; the precedence is total per key. The config hash is the
first 8 bytes of BLAKE2b over the canonical (sorted, fully resolved) text,
so identical effective configurations hash identically regardless of how
they were supplied.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .datasets import SplitSpec
from .distances import DistanceKind
from .errors import ConfigError
from .propagation import Aggregator, FusionConfig
from .training import TrainConfig

DEFAULT_ALPHA_GRID = (0.5, 0.8, 1.0, 1.2, 1.5, 2.0, 5.0)


@dataclass
class RunConfig:
    data: str = ""
    out: str = "runs/out"
    seed: int = 0
    aggregator: str = "sagcn"
    distance: str = "euclidean"
    alpha: float = 1.5
    beta: float | None = None  # resolved per distance kind when unset
    layers: int = 3
    dim: int = 64
    lr: float = 1e-3
    reg: float = 1e-4
    batch: int = 2048
    epochs: int = 200
    patience: int = 5
    k: tuple[int, ...] = (10, 20, 50)
    train_fraction: float = 0.8
    val_fraction: float = 0.1

    def fusion_config(self) -> FusionConfig:
        try:
            return FusionConfig(
                distance_kind=DistanceKind.from_token(self.distance),
                alpha=self.alpha,
                beta=self.beta,
                num_layers=self.layers,
                aggregator=Aggregator.from_token(self.aggregator),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(
                learning_rate=self.lr,
                reg_lambda=self.reg,
                batch_size=self.batch,
                max_epochs=self.epochs,
                patience=self.patience,
                seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def split_spec(self) -> SplitSpec:
        try:
            return SplitSpec(
                train_fraction=self.train_fraction,
                validation_fraction=self.val_fraction,
                seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved_beta(self) -> float:
        return self.fusion_config().beta

    def canonical_text(self) -> str:
        """Effective configuration as sorted ``key = value`` lines.

        The output directory is excluded: it determines where artifacts
        land, not what is computed, so runs differing only in ``out`` hash
        identically.
        """
        values = {}
        for f in fields(self):
            if f.name == "out":
                continue
            v = getattr(self, f.name)
            if f.name == "beta":
                v = self.resolved_beta()
            elif f.name == "k":
                v = ",".join(str(c) for c in v)
            values[f.name] = v
        return "".join(f"{k} = {values[k]}\n" for k in sorted(values))

    def config_hash(self) -> int:
        digest = hashlib.blake2b(self.canonical_text().encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")


_COERCERS = {
    "data": str,
    "out": str,
    "seed": int,
    "aggregator": str,
    "distance": str,
    "alpha": float,
    "beta": float,
    "layers": int,
    "dim": int,
    "lr": float,
    "reg": float,
    "batch": int,
    "epochs": int,
    "patience": int,
    "k": lambda s: tuple(int(t) for t in str(s).split(",") if t.strip()),
    "train_fraction": float,
    "val_fraction": float,
}


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read a flat key = value config file; unknown keys are rejected."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _COERCERS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value
    return values


def build_run_config(file_values: dict | None = None, flag_values: dict | None = None) -> RunConfig:
    """Merge defaults < config file < flags into a validated RunConfig."""
    merged: dict = {}
    for source in (file_values or {}), (flag_values or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in _COERCERS:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                merged[key] = _COERCERS[key](value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    cfg = RunConfig(**merged)
    cfg.fusion_config()  # validate eagerly
    cfg.train_config()
    cfg.split_spec()
    return cfg
