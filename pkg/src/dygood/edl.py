"""Evidence collection and Dirichlet / subjective-logic opinions.

All functions work on the last axis of a float64 tensor, so a batch of
``(M, K)`` logits yields ``(M, K)`` evidence and ``(M,)`` uncertainties.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import NumericError, ValidationError

DEFAULT_CLAMP = 10.0


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x if x.dtype == torch.float64 else x.to(torch.float64)
    return torch.as_tensor(x, dtype=torch.float64)


def collect_evidence(logits, clamp: float = DEFAULT_CLAMP) -> torch.Tensor:
    """``max(0, exp(clip(logits, -clamp, clamp)) - 1)``.

    Negative logits would give evidence in (-1, 0); it is clipped to zero so
    every concentration stays >= 1.
    """
    logits = _as_tensor(logits)
    if logits.shape[-1] < 2:
        raise ValidationError("need at least two classes")
    if clamp <= 0:
        raise ValidationError("clamp must be positive")
    if not torch.isfinite(logits).all():
        raise NumericError("non-finite logit")
    return torch.clamp_min(torch.expm1(torch.clamp(logits, -clamp, clamp)), 0.0)


@dataclass(frozen=True)
class DirichletOpinion:
    """Dirichlet posterior under a uniform prior (base rate 1/K, weight K)."""

    alpha: torch.Tensor

    @property
    def num_classes(self) -> int:
        return self.alpha.shape[-1]

    @property
    def alpha_sum(self) -> torch.Tensor:
        return self.alpha.sum(-1)

    @property
    def base_rate(self) -> torch.Tensor:
        K = self.num_classes
        return torch.full_like(self.alpha, 1.0 / K)

    @property
    def prior_weight(self) -> float:
        return float(self.num_classes)

    @property
    def belief(self) -> torch.Tensor:
        return (self.alpha - self.base_rate * self.prior_weight) / self.alpha_sum.unsqueeze(-1)

    @property
    def uncertainty(self) -> torch.Tensor:
        return self.prior_weight / self.alpha_sum

    @property
    def evidence(self) -> torch.Tensor:
        return self.alpha - 1.0

    @classmethod
    def from_belief(cls, belief, uncertainty) -> "DirichletOpinion":
        """Inverse of the opinion mapping: ``alpha = b * S + beta * w`` with ``S = w / u``."""
        belief = _as_tensor(belief)
        u = _as_tensor(uncertainty)
        K = belief.shape[-1]
        S = K / u
        return cls(belief * S.unsqueeze(-1) + 1.0)


def to_opinion(evidence) -> DirichletOpinion:
    e = _as_tensor(evidence)
    if (e < 0).any():
        raise ValidationError("evidence must be non-negative")
    return DirichletOpinion(e + 1.0)


def expected_probability(op: DirichletOpinion) -> torch.Tensor:
    return op.alpha / op.alpha_sum.unsqueeze(-1)


def uncertainty(op: DirichletOpinion) -> torch.Tensor:
    return op.uncertainty


def opinion_from_logits(logits, clamp: float = DEFAULT_CLAMP) -> DirichletOpinion:
    return to_opinion(collect_evidence(logits, clamp))


def write_opinions(op: DirichletOpinion, fh) -> None:
    """Dump rows ``alpha_1..alpha_K,u,b_1..b_K`` as CSV."""
    alpha = op.alpha.detach().reshape(-1, op.num_classes)
    u = op.uncertainty.detach().reshape(-1)
    b = op.belief.detach().reshape(-1, op.num_classes)
    K = op.num_classes
    fh.write(
        ",".join([f"alpha_{i + 1}" for i in range(K)] + ["u"] + [f"b_{i + 1}" for i in range(K)])
        + "\n"
    )
    for a_row, u_val, b_row in zip(alpha.tolist(), u.tolist(), b.tolist()):
        fh.write(",".join(repr(v) for v in a_row + [u_val] + b_row) + "\n")
