"""Window scoring, thresholded detection and ranking metrics.

OOD is the positive class throughout: a higher score means "more OOD".
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch
from scipy.stats import rankdata

from .errors import ValidationError

DEFAULT_GAMMA = 0.5


def aggregate_window_score(per_target_u, mode: str = "mean") -> float:
    u = np.asarray(per_target_u, dtype=np.float64).ravel()
    if u.size == 0:
        raise ValidationError("no per-target scores to aggregate")
    if mode == "mean":
        return float(u.mean())
    if mode == "max":
        return float(u.max())
    raise ValidationError(f"unknown aggregation mode {mode!r}")


@dataclass(frozen=True)
class DetectionResult:
    score: float
    threshold: float
    flag: int


def detect(score: float, gamma: float = DEFAULT_GAMMA) -> DetectionResult:
    return DetectionResult(float(score), float(gamma), int(score >= gamma))


def _split(id_scores, ood_scores):
    a = np.asarray(id_scores, dtype=np.float64).ravel()
    b = np.asarray(ood_scores, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValidationError("both ID and OOD score sets must be non-empty")
    return a, b


def auroc(id_scores, ood_scores) -> float:
    """Mann-Whitney estimate ``P(ood > id) + 0.5 P(tie)`` via midranks."""
    a, b = _split(id_scores, ood_scores)
    ranks = rankdata(np.concatenate([a, b]))
    n, m = a.size, b.size
    u_stat = ranks[n:].sum() - m * (m + 1) / 2.0
    return float(u_stat / (n * m))


def _operating_points(a: np.ndarray, b: np.ndarray):
    """Thresholds (unique scores, descending) with cumulative TP/FP counts at ``score >= t``."""
    scores = np.concatenate([a, b])
    is_pos = np.concatenate([np.zeros(a.size), np.ones(b.size)])
    order = np.argsort(-scores, kind="stable")
    s, pos = scores[order], is_pos[order]
    tp = np.cumsum(pos)
    fp = np.cumsum(1.0 - pos)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    return s[last], tp[last], fp[last]


def aupr(id_scores, ood_scores) -> float:
    """Area under the interpolated precision envelope as a step function of recall."""
    a, b = _split(id_scores, ood_scores)
    _, tp, fp = _operating_points(a, b)
    recall = tp / b.size
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    d_recall = np.diff(np.r_[0.0, recall])
    return float(np.sum(d_recall * envelope))


def fpr_at_tpr(id_scores, ood_scores, tpr_level: float = 0.95) -> float:
    """Smallest FPR over observed-score thresholds whose TPR reaches ``tpr_level``."""
    a, b = _split(id_scores, ood_scores)
    _, tp, fp = _operating_points(a, b)
    ok = tp / b.size >= tpr_level
    return float(np.min(fp[ok] / a.size))


def fpr95(id_scores, ood_scores) -> float:
    return fpr_at_tpr(id_scores, ood_scores, 0.95)


def curve_rows(id_scores, ood_scores) -> list:
    """Rows ``(threshold, tpr, fpr, precision, recall)`` for every observed score."""
    a, b = _split(id_scores, ood_scores)
    thr, tp, fp = _operating_points(a, b)
    tpr = tp / b.size
    return [
        (float(t), float(r), float(f / a.size), float(p / (p + f)), float(r))
        for t, r, p, f in zip(thr, tpr, tp, fp)
    ]


def f1(predictions, labels, num_classes: Optional[int] = None) -> float:
    """Binary F1 for two classes (class 1 positive), macro F1 otherwise."""
    pred = np.asarray(predictions).ravel()
    lab = np.asarray(labels).ravel()
    if pred.shape != lab.shape:
        raise ValidationError("predictions and labels differ in length")
    if pred.size == 0:
        raise ValidationError("no predictions")
    K = num_classes or int(max(pred.max(), lab.max())) + 1
    classes = [1] if K <= 2 else range(K)
    scores = []
    for c in classes:
        tp = np.sum((pred == c) & (lab == c))
        fp = np.sum((pred == c) & (lab != c))
        fn = np.sum((pred != c) & (lab == c))
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 or tp == 0 else 2.0 * tp / denom)
    return float(np.mean(scores))


def baseline_scores(logits, kind: str) -> np.ndarray:
    """Softmax baselines: ``msp`` gives 1 - max prob, ``entropy`` the Shannon entropy."""
    z = torch.as_tensor(logits, dtype=torch.float64)
    logp = torch.log_softmax(z, dim=-1)
    p = logp.exp()
    if kind == "msp":
        out = 1.0 - p.max(-1).values
    elif kind == "entropy":
        out = -(p * logp).sum(-1)
    else:
        raise ValidationError(f"unknown baseline {kind!r}")
    return out.detach().numpy()


@dataclass
class MetricsReport:
    auroc: float
    aupr: float
    fpr95: float
    f1: Optional[float]
    n_id: int
    n_ood: int

    def as_dict(self) -> dict:
        return asdict(self)

    def to_line(self) -> str:
        return " ".join(f"{k}={v!r}" for k, v in self.as_dict().items())


def detection_report(id_scores, ood_scores, f1_score: Optional[float] = None) -> MetricsReport:
    a, b = _split(id_scores, ood_scores)
    return MetricsReport(
        auroc(a, b), aupr(a, b), fpr95(a, b), f1_score, int(a.size), int(b.size)
    )
