"""Synthetic benchmark plumbing shared by the CLI, scripts and acceptance tests.

ID test sequences are fresh draws from the training generator; OOD test
sequences are transformed draws from a disjoint seed range. Both keep only the
test split of each draw so they never overlap the training time range.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

from .config import ExperimentConfig
from .errors import ValidationError
from .graph import DynamicGraphSequence
from .oodgen import FISpec, SBMSpec, make_ood_testset
from .synthetic import SyntheticSpec, make_synthetic
from .training import EvaluationResult, TrainingState, evaluate, train

ID_SEED_BASE = 10_000
OOD_SEED_BASE = 20_000


def synthetic_spec(config: ExperimentConfig) -> SyntheticSpec:
    return SyntheticSpec(**config.synthetic)


def holdout_split(seq: DynamicGraphSequence, config: ExperimentConfig) -> DynamicGraphSequence:
    tr, va, te = config.resolve_splits(seq.total_timesteps)
    if te < config.window:
        raise ValidationError(f"test split of {te} timesteps cannot hold a window of {config.window}")
    return seq.slice(tr + va, seq.total_timesteps)


def ood_spec(config: ExperimentConfig, kind: str, lam: Optional[float] = None):
    if kind == "sm":
        return SBMSpec(num_blocks=config.sbm_blocks, out_ratio=config.sbm_out_ratio, seed=config.seed)
    return FISpec(lam=config.fi_lambda if lam is None else lam, seed=config.seed)


def synthetic_id_tests(config: ExperimentConfig) -> list:
    spec = synthetic_spec(config)
    base = ID_SEED_BASE + 100 * config.seed
    return [holdout_split(make_synthetic(spec, base + i), config) for i in range(config.test_sequences)]


def synthetic_ood_tests(config: ExperimentConfig, kind: str, lam: Optional[float] = None) -> list:
    spec = synthetic_spec(config)
    base = OOD_SEED_BASE + 100 * config.seed
    sources = [holdout_split(make_synthetic(spec, base + i), config) for i in range(config.test_sequences)]
    return [make_ood_testset(s, kind, ood_spec(config, kind, lam)) for s in sources]


@dataclass
class SyntheticRun:
    state: TrainingState
    results: dict

    @property
    def val_f1(self) -> float:
        return self.state.val_f1

    def auroc(self, name: str) -> float:
        return self.results[name].report.auroc


# name -> (OOD kind, fixed interpolation coefficient)
SCENARIOS = {"sm": ("sm", None), "fi": ("fi", None), "null": ("fi", 1.0)}


def run_synthetic(config: ExperimentConfig, scenarios=("sm", "fi", "null")) -> SyntheticRun:
    """Train on one synthetic draw and evaluate each OOD scenario."""
    data = make_synthetic(synthetic_spec(config), config.seed)
    state = train(config, data)
    id_tests = synthetic_id_tests(config)
    results: dict[str, EvaluationResult] = {}
    for name in scenarios:
        kind, lam = SCENARIOS[name]
        results[name] = evaluate(state, config, id_tests, synthetic_ood_tests(config, kind, lam))
    return SyntheticRun(state, results)


ABLATIONS = {
    "full": {},
    "no_ce": {"ce_weight": 0.0},
    "no_kl": {"rho1": 0.0},
    "no_cl": {"rho2": 0.0},
}


def ablation_aurocs(config: ExperimentConfig, scenario: str = "sm") -> dict:
    """AUROC of the full objective and of each single-term-removed variant."""
    return {
        name: run_synthetic(dataclasses.replace(config, **override), (scenario,)).auroc(scenario)
        for name, override in ABLATIONS.items()
    }
