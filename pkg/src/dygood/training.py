"""Training loop, window scoring, evaluation and checkpoints."""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from . import edl, losses, metrics
from .config import ExperimentConfig
from .encoder import EvolvingGCN, TaskHead
from .errors import TrainingDivergedError, ValidationError
from .graph import DynamicGraphSequence, PropagatedWindow, iter_windows, propagate
from .spectral import SpectralCache, negative_window

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class DetectorModel(nn.Module):
    """Evolving GCN encoder followed by a task head producing K logits."""

    def __init__(self, dims: Sequence[int], num_classes: int, task: str, combine: str, seed: int):
        super().__init__()
        self.dims = list(dims)
        self.encoder = EvolvingGCN(dims, seed=seed)
        self.head = TaskHead(task, dims[-1], num_classes, combine=combine, seed=seed + 1)

    @property
    def num_classes(self) -> int:
        return self.head.num_classes

    def forward(self, pw: PropagatedWindow, targets) -> torch.Tensor:
        emb = self.encoder(pw.props, pw.features)
        return self.head(emb.final, targets)


def window_targets(pw: PropagatedWindow, task: str, seed: int = 0):
    """Targets scored by the head and their labels (``None`` where unlabeled)."""
    snap = pw.target
    if task == "node":
        if snap.label_kind == "node":
            ids = np.flatnonzero(snap.labels >= 0)
            return torch.as_tensor(ids), torch.as_tensor(snap.labels[ids])
        return torch.arange(snap.num_nodes), None
    if task == "edge":
        pairs = torch.as_tensor(snap.edges)
        labels = torch.as_tensor(snap.labels) if snap.label_kind == "edge" else None
        return pairs, labels
    # link prediction: observed edges against an equal number of sampled non-edges
    rng = np.random.default_rng(seed + pw.start)
    n = snap.num_nodes
    present = set(map(tuple, snap.edges.tolist()))
    negatives = []
    budget = max(1, snap.num_edges)
    for _ in range(20 * budget):
        if len(negatives) >= budget:
            break
        i, j = sorted(rng.integers(0, n, size=2).tolist())
        if i != j and (i, j) not in present:
            negatives.append((i, j))
    pairs = np.concatenate([snap.edges, np.asarray(negatives, dtype=np.int64).reshape(-1, 2)])
    labels = np.r_[np.ones(snap.num_edges, np.int64), np.zeros(len(negatives), np.int64)]
    return torch.as_tensor(pairs), torch.as_tensor(labels)


@dataclass
class TrainingState:
    config: ExperimentConfig
    model: DetectorModel
    epoch: int = 0
    history: list = field(default_factory=list)
    best_params: Optional[dict] = None
    best_val: float = math.inf
    best_epoch: int = 0
    val_f1: Optional[float] = None
    optimizer_state: Optional[dict] = None

    def best_model(self) -> DetectorModel:
        if self.best_params is None:
            return self.model
        m = copy.deepcopy(self.model)
        m.load_state_dict(self.best_params)
        return m


def build_model(config: ExperimentConfig, feature_dim: int, num_classes: int) -> DetectorModel:
    dims = [feature_dim] + [config.hidden_dim] * config.num_layers
    return DetectorModel(dims, num_classes, config.task, config.head_combine, config.seed)


def _optimizer(config: ExperimentConfig, params):
    if config.optimizer == "adam":
        return torch.optim.Adam(params, lr=config.lr)
    return torch.optim.SGD(params, lr=config.lr, momentum=config.momentum)


def _clone_params(model: nn.Module) -> dict:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def forward_opinion(model, pw, targets, clamp) -> edl.DirichletOpinion:
    return edl.opinion_from_logits(model(pw, targets), clamp)


def window_loss(model, pw, nw, targets, labels, config, rho1) -> losses.LossBreakdown:
    op = forward_opinion(model, pw, targets, config.clamp)
    y = losses.one_hot(labels, model.num_classes)
    p = edl.expected_probability(op)
    p_neg = None
    if config.rho2 > 0:
        p_neg = edl.expected_probability(forward_opinion(model, nw, targets, config.clamp))
    return losses.total_loss(op.alpha, y, p, p_neg, rho1, config.rho2, config.ce_weight)


def split_windows(config: ExperimentConfig, data: DynamicGraphSequence):
    """Raw training windows and propagated validation windows; the splits never overlap."""
    tr, va, _ = config.resolve_splits(data.total_timesteps)
    train = list(iter_windows(data, config.window, 0, tr))
    val = [propagate(w) for w in iter_windows(data, config.window, tr, tr + va)]
    return train, val


def _labelled(pw, config):
    targets, labels = window_targets(pw, config.task, config.seed)
    if labels is None or len(labels) == 0:
        raise ValidationError(f"window at t={pw.start} has no labelled targets")
    return targets, labels


@torch.no_grad()
def validation_metrics(model, windows, config) -> tuple:
    """Mean evidential CE and F1 over labelled targets of ``windows``."""
    ce, preds, labs = [], [], []
    for pw in windows:
        targets, labels = _labelled(pw, config)
        op = forward_opinion(model, pw, targets, config.clamp)
        ce.append(losses.ce_edl(op.alpha, losses.one_hot(labels, model.num_classes)).mean().item())
        preds.append(edl.expected_probability(op).argmax(-1).numpy())
        labs.append(labels.numpy())
    f1 = metrics.f1(np.concatenate(preds), np.concatenate(labs), model.num_classes)
    return float(np.mean(ce)), f1


def train(config: ExperimentConfig, data: DynamicGraphSequence, model: Optional[DetectorModel] = None) -> TrainingState:
    """Fit the detector on the training split; keep the best validation-CE parameters."""
    config.validate()
    model = model or build_model(config, data.feature_dim, data.num_classes)
    raw_train, val_w = split_windows(config, data)
    train_w = [propagate(w) for w in raw_train]
    negatives = [None] * len(train_w)
    if config.rho2 > 0:
        cache = SpectralCache(config.dense_limit)
        negatives = [negative_window(w, config.r, config.augmentation, cache) for w in raw_train]
    targets = [_labelled(pw, config) for pw in train_w]
    opt = _optimizer(config, model.parameters())
    state = TrainingState(config, model)
    state.best_params = _clone_params(model)
    if val_w:
        state.best_val, state.val_f1 = validation_metrics(model, val_w, config)

    for epoch in range(config.epochs):
        rho1 = config.rho1
        if config.kl_warmup_epochs > 0:
            rho1 *= min(1.0, (epoch + 1) / config.kl_warmup_epochs)
        sums = {"ce_edl": 0.0, "kl": 0.0, "cl": 0.0, "total": 0.0}
        for pw, nw, (tg, lab) in zip(train_w, negatives, targets):
            opt.zero_grad()
            br = window_loss(model, pw, nw, tg, lab, config, rho1)
            if not torch.isfinite(br.total):
                record = {"epoch": epoch + 1, "window_start": pw.start, **br.as_floats()}
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch + 1}", record)
            br.total.backward()
            opt.step()
            for k, v in br.as_floats().items():
                sums[k] += v
        row = {"epoch": epoch + 1, **{k: v / len(train_w) for k, v in sums.items()}}
        state.history.append(row)
        state.epoch = epoch + 1
        if val_w:
            val_ce, val_f1 = validation_metrics(model, val_w, config)
            if val_ce < state.best_val:
                state.best_val, state.val_f1, state.best_epoch = val_ce, val_f1, epoch + 1
                state.best_params = _clone_params(model)
        log.debug("epoch %d %s", epoch + 1, row)
    state.optimizer_state = opt.state_dict()
    return state


# --------------------------------------------------------------------------
# scoring and evaluation


@dataclass
class WindowScores:
    """Per-window (or per-target) scores for one side of the test set."""

    starts: list
    uncertainty: np.ndarray
    msp: np.ndarray
    entropy: np.ndarray
    predictions: np.ndarray
    labels: np.ndarray


@torch.no_grad()
def score_sequences(model, sequences: Sequence[DynamicGraphSequence], config: ExperimentConfig) -> WindowScores:
    starts, unc, msp, ent, preds, labs = [], [], [], [], [], []
    for seq in sequences:
        for win in iter_windows(seq, config.window):
            pw = propagate(win)
            targets, labels = window_targets(pw, config.task, config.seed)
            if len(targets) == 0:
                continue
            logits = model(pw, targets)
            op = edl.opinion_from_logits(logits, config.clamp)
            u = op.uncertainty.numpy()
            b_msp = metrics.baseline_scores(logits, "msp")
            b_ent = metrics.baseline_scores(logits, "entropy")
            if config.per_node:
                starts.extend([pw.start] * len(u))
                unc.extend(u)
                msp.extend(b_msp)
                ent.extend(b_ent)
            else:
                starts.append(pw.start)
                unc.append(metrics.aggregate_window_score(u, config.aggregation))
                msp.append(metrics.aggregate_window_score(b_msp, config.aggregation))
                ent.append(metrics.aggregate_window_score(b_ent, config.aggregation))
            if labels is not None:
                preds.append(edl.expected_probability(op).argmax(-1).numpy())
                labs.append(labels.numpy())
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)
    return WindowScores(starts, np.asarray(unc), np.asarray(msp), np.asarray(ent), cat(preds), cat(labs))


@dataclass
class EvaluationResult:
    report: metrics.MetricsReport
    baselines: dict
    id_scores: WindowScores
    ood_scores: WindowScores
    curves: list

    def flags(self, gamma: float) -> tuple:
        f = lambda s: [metrics.detect(x, gamma).flag for x in s]
        return f(self.id_scores.uncertainty), f(self.ood_scores.uncertainty)


def evaluate(
    state: TrainingState,
    config: ExperimentConfig,
    id_test: Sequence[DynamicGraphSequence],
    ood_test: Sequence[DynamicGraphSequence],
) -> EvaluationResult:
    """Score ID and OOD windows with the best model; uncertainty is the OOD score."""
    if isinstance(id_test, DynamicGraphSequence):
        id_test = [id_test]
    if isinstance(ood_test, DynamicGraphSequence):
        ood_test = [ood_test]
    if not id_test or not ood_test:
        raise ValidationError("ID and OOD test sets must be non-empty")
    model = state.best_model()
    model.eval()
    ids = score_sequences(model, id_test, config)
    oods = score_sequences(model, ood_test, config)
    if ids.uncertainty.size == 0 or oods.uncertainty.size == 0:
        raise ValidationError("test sets contain no scorable windows")
    f1 = None
    if ids.labels.size:
        f1 = metrics.f1(ids.predictions, ids.labels, model.num_classes)
    report = metrics.detection_report(ids.uncertainty, oods.uncertainty, f1)
    baselines = {
        kind: metrics.detection_report(getattr(ids, kind), getattr(oods, kind), f1)
        for kind in ("msp", "entropy")
    }
    curves = metrics.curve_rows(ids.uncertainty, oods.uncertainty)
    return EvaluationResult(report, baselines, ids, oods, curves)


# --------------------------------------------------------------------------
# checkpoints: manifest.json (names, shapes, config hash) + tensors.npz


def save_checkpoint(state: TrainingState, directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    arrays, entries = {}, []

    def put(name, tensor):
        arr = tensor.detach().cpu().numpy()
        arrays[name] = arr
        entries.append({"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)})

    for k, v in state.model.state_dict().items():
        put(f"model/{k}", v)
    for k, v in (state.best_params or {}).items():
        put(f"best/{k}", v)
    opt_meta = None
    if state.optimizer_state is not None:
        opt_meta = {"param_groups": state.optimizer_state["param_groups"], "state": {}}
        for idx, slots in state.optimizer_state["state"].items():
            opt_meta["state"][str(idx)] = {}
            for name, val in slots.items():
                if torch.is_tensor(val):
                    put(f"optim/{idx}/{name}", val)
                    opt_meta["state"][str(idx)][name] = {"tensor": f"optim/{idx}/{name}"}
                else:
                    opt_meta["state"][str(idx)][name] = {"value": val}
    np.savez(out / "tensors.npz", **arrays)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "config": state.config.to_dict(),
        "config_hash": state.config.digest(),
        "model": {"dims": state.model.dims, "num_classes": state.model.num_classes},
        "tensors": entries,
        "epoch": state.epoch,
        "history": state.history,
        "best_val": state.best_val,
        "best_epoch": state.best_epoch,
        "val_f1": state.val_f1,
        "has_best": state.best_params is not None,
        "optimizer": opt_meta,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out


def load_checkpoint(directory) -> TrainingState:
    src = Path(directory)
    if not (src / "manifest.json").exists():
        raise FileNotFoundError(f"no checkpoint manifest in {src}")
    manifest = json.loads((src / "manifest.json").read_text())
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise ValidationError("unsupported checkpoint version")
    config = ExperimentConfig.from_dict(manifest["config"])
    if config.digest() != manifest["config_hash"]:
        raise ValidationError("checkpoint config hash mismatch")
    with np.load(src / "tensors.npz") as npz:
        arrays = {k: npz[k] for k in npz.files}
    for e in manifest["tensors"]:
        if list(arrays[e["name"]].shape) != e["shape"]:
            raise ValidationError(f"tensor {e['name']} has wrong shape")
    dims = manifest["model"]["dims"]
    model = DetectorModel(dims, manifest["model"]["num_classes"], config.task, config.head_combine, config.seed)
    grab = lambda prefix: {
        k[len(prefix):]: torch.from_numpy(v.copy()) for k, v in arrays.items() if k.startswith(prefix)
    }
    model.load_state_dict(grab("model/"))
    best = grab("best/") if manifest["has_best"] else None
    opt_state = None
    if manifest["optimizer"] is not None:
        om = manifest["optimizer"]
        opt_state = {"param_groups": om["param_groups"], "state": {}}
        for idx, slots in om["state"].items():
            opt_state["state"][int(idx)] = {
                name: torch.from_numpy(arrays[s["tensor"]].copy()) if "tensor" in s else s["value"]
                for name, s in slots.items()
            }
    return TrainingState(
        config,
        model,
        manifest["epoch"],
        manifest["history"],
        best,
        manifest["best_val"],
        manifest["best_epoch"],
        manifest["val_f1"],
        opt_state,
    )


def write_loss_log(history, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,ce_edl,kl,cl,total\n")
        for row in history:
            fh.write(f"{row['epoch']},{row['ce_edl']!r},{row['kl']!r},{row['cl']!r},{row['total']!r}\n")


def write_scores(scores: WindowScores, path) -> None:
    with open(path, "w") as fh:
        fh.write("window_start,score,msp,entropy\n")
        for s, u, m, e in zip(scores.starts, scores.uncertainty, scores.msp, scores.entropy):
            fh.write(f"{s},{float(u)!r},{float(m)!r},{float(e)!r}\n")


def write_curves(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write("threshold,tpr,fpr,precision,recall\n")
        for row in rows:
            fh.write(",".join(repr(v) for v in row) + "\n")
