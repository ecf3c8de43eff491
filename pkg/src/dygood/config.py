"""Experiment configuration (YAML on disk, ``schema_version`` 1)."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import ValidationError

SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    """All knobs of one run.

    ``splits`` gives train/val/test timestep counts in temporal order; when
    unset it is derived as roughly 50/25/25 with every part at least one
    window long. ``data_path`` unset selects the bundled synthetic generator
    (``synthetic`` holds its overrides).
    """

    task: str = "node"
    num_layers: int = 2
    hidden_dim: int = 32
    window: int = 3
    epochs: int = 100
    lr: float = 0.01
    momentum: float = 0.0
    optimizer: str = "sgd"
    seed: int = 0
    rho1: float = 0.6
    rho2: float = 0.8
    ce_weight: float = 1.0
    r: float = 0.3
    gamma: float = 0.5
    clamp: float = 10.0
    aggregation: str = "mean"
    per_node: bool = False
    augmentation: str = "verbatim"
    kl_warmup_epochs: int = 0
    head_combine: str = "concat"
    ood_kind: str = "sm"
    sbm_blocks: int = 4
    sbm_out_ratio: float = 0.2
    fi_lambda: Optional[float] = None
    data_path: Optional[str] = None
    id_test_path: Optional[str] = None
    ood_test_path: Optional[str] = None
    splits: Optional[list] = None
    test_sequences: int = 20
    synthetic: dict = field(default_factory=dict)
    dense_limit: int = 2000
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> "ExperimentConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported schema_version {self.schema_version}")
        if self.task not in ("node", "edge", "link"):
            raise ValidationError(f"unknown task {self.task!r}")
        if self.num_layers < 1 or self.hidden_dim < 1 or self.window < 1 or self.epochs < 0:
            raise ValidationError("layers, hidden_dim and window must be positive; epochs >= 0")
        if self.rho1 < 0 or self.rho2 < 0 or self.ce_weight < 0:
            raise ValidationError("loss weights must be non-negative")
        if not 0.0 <= self.r < 1.0:
            raise ValidationError("r must lie in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.aggregation not in ("mean", "max"):
            raise ValidationError(f"unknown aggregation {self.aggregation!r}")
        if self.augmentation not in ("verbatim", "weighted"):
            raise ValidationError(f"unknown augmentation mode {self.augmentation!r}")
        if self.ood_kind not in ("sm", "fi"):
            raise ValidationError(f"unknown OOD kind {self.ood_kind!r}")
        return self

    def resolve_splits(self, total: int) -> tuple:
        """Train/val/test counts partitioning ``[0, total)``."""
        if self.splits is not None:
            tr, va, te = (int(x) for x in self.splits)
        else:
            va = te = max(self.window, total // 4)
            tr = total - va - te
        if tr + va + te != total:
            raise ValidationError(f"splits {tr}/{va}/{te} do not partition {total} timesteps")
        if min(tr, va) < self.window or te < 0:
            raise ValidationError(
                f"train and val splits must each hold a window of {self.window}; got {tr}/{va}/{te}"
            )
        return tr, va, te

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return hashlib.sha1(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    data = yaml.safe_load(p.read_text()) or {}
    return ExperimentConfig.from_dict(data)


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))
