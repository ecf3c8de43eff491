"""Evidential cross-entropy, masked KL regularizer and contrastive term."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch

from .edl import _as_tensor
from .errors import ValidationError

PROB_FLOOR = 1e-12


def _check_one_hot(y: torch.Tensor, alpha: torch.Tensor):
    if y.shape != alpha.shape:
        raise ValidationError(f"label shape {tuple(y.shape)} != alpha shape {tuple(alpha.shape)}")
    if not (((y == 0) | (y == 1)).all() and (y.sum(-1) == 1).all()):
        raise ValidationError("labels must be one-hot")


def one_hot(labels, num_classes: int) -> torch.Tensor:
    labels = torch.as_tensor(labels, dtype=torch.long)
    return torch.nn.functional.one_hot(labels, num_classes).to(torch.float64)


def ce_edl(alpha, y) -> torch.Tensor:
    """Expected negative log-likelihood under Dir(alpha): ``psi(S) - psi(alpha_y)``."""
    alpha, y = _as_tensor(alpha), _as_tensor(y)
    _check_one_hot(y, alpha)
    S = alpha.sum(-1, keepdim=True)
    return (y * (torch.digamma(S) - torch.digamma(alpha))).sum(-1)


def adjusted_concentration(alpha, y) -> torch.Tensor:
    """Concentration with the target entry reset to 1."""
    return y + (1.0 - y) * alpha


def kl_to_uniform(alpha, y) -> torch.Tensor:
    """KL(Dir(alpha_hat) || Dir(1)), alpha_hat masking out the target class."""
    alpha, y = _as_tensor(alpha), _as_tensor(y)
    _check_one_hot(y, alpha)
    a = adjusted_concentration(alpha, y)
    K = a.shape[-1]
    S = a.sum(-1)
    return (
        torch.lgamma(S)
        - torch.lgamma(torch.tensor(float(K), dtype=torch.float64))
        - torch.lgamma(a).sum(-1)
        + ((a - 1.0) * (torch.digamma(a) - torch.digamma(S).unsqueeze(-1))).sum(-1)
    )


def contrastive(p, p_neg) -> torch.Tensor:
    """``sum_i p_i * log(p_neg_i)``, with ``p_neg`` floored at 1e-12."""
    p, p_neg = _as_tensor(p), _as_tensor(p_neg)
    if p.shape != p_neg.shape:
        raise ValidationError("probability vectors differ in shape")
    for name, v in (("p", p), ("p_neg", p_neg)):
        if (v < -1e-6).any() or ((v.sum(-1) - 1.0).abs() > 1e-6).any():
            raise ValidationError(f"{name} is not on the probability simplex")
    return (p * torch.log(torch.clamp_min(p_neg, PROB_FLOOR))).sum(-1)


@dataclass
class LossBreakdown:
    ce_edl: torch.Tensor
    kl: torch.Tensor
    cl: torch.Tensor
    rho1: float
    rho2: float
    total: torch.Tensor

    def as_floats(self) -> dict:
        return {
            "ce_edl": self.ce_edl.item(),
            "kl": self.kl.item(),
            "cl": self.cl.item(),
            "total": self.total.item(),
        }


def total_loss(
    alpha,
    y,
    p,
    p_neg: Optional[torch.Tensor],
    rho1: float,
    rho2: float,
    ce_weight: float = 1.0,
) -> LossBreakdown:
    """Batch-mean of each term combined as ``ce + rho1*kl + rho2*cl``.

    ``p_neg`` may be ``None`` only when ``rho2 == 0``; the contrastive term is
    then reported as zero and no negative branch is needed. ``ce_weight=0``
    drops the cross-entropy term (ablation only).
    """
    alpha, y = _as_tensor(alpha), _as_tensor(y)
    if alpha.ndim == 1:
        alpha, y = alpha.unsqueeze(0), y.unsqueeze(0)
        p = None if p is None else _as_tensor(p).unsqueeze(0)
        p_neg = None if p_neg is None else _as_tensor(p_neg).unsqueeze(0)
    if alpha.shape[0] == 0:
        raise ValidationError("empty batch")
    if rho1 < 0 or rho2 < 0:
        raise ValidationError("balancing factors must be non-negative")
    ce = ce_edl(alpha, y).mean()
    kl = kl_to_uniform(alpha, y).mean()
    if p_neg is None:
        if rho2 != 0:
            raise ValidationError("contrastive term requested without a negative branch")
        cl = torch.zeros((), dtype=torch.float64)
    else:
        cl = contrastive(p, p_neg).mean()
    total = ce_weight * ce + rho1 * kl + rho2 * cl
    return LossBreakdown(ce, kl, cl, rho1, rho2, total)
