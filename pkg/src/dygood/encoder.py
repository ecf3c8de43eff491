"""GCN encoder whose layer weights evolve through a matrix-valued GRU.

At every timestep each layer first advances its weight matrix with the GRU,
using a top-k summary of the layer input as the GRU input, and then applies
the graph convolution with the new weights. The summary keeps ``k = d_out``
rows so its transpose has the weight matrix's shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import torch
from torch import nn

from .errors import DimensionError, ValidationError

Activation = Optional[Callable[[torch.Tensor], torch.Tensor]]


def _uniform(shape, bound: float, gen: torch.Generator) -> torch.Tensor:
    return (torch.rand(*shape, generator=gen, dtype=torch.float64) * 2.0 - 1.0) * bound


def gcn_layer(P, Z, W, activation: Activation = torch.relu) -> torch.Tensor:
    """``activation(P @ Z @ W)``; pass ``activation=None`` for identity."""
    if P.shape[0] != P.shape[1] or P.shape[1] != Z.shape[0] or Z.shape[1] != W.shape[0]:
        raise DimensionError(
            f"incompatible shapes P{tuple(P.shape)} Z{tuple(Z.shape)} W{tuple(W.shape)}"
        )
    out = P @ (Z @ W)
    return out if activation is None else activation(out)


def summarize_embeddings(Z: torch.Tensor, q: torch.Tensor, k: int) -> torch.Tensor:
    """Top-k pooling: the k rows scoring highest on ``Z q / |q|``, each scaled by tanh(score).

    Rows come out in descending score order; with fewer than k rows the
    result is padded with zero rows.
    """
    scores = Z @ q / torch.clamp_min(q.norm(), 1e-12)
    order = torch.argsort(scores, descending=True, stable=True)[:k]
    out = Z[order] * torch.tanh(scores[order]).unsqueeze(1)
    if out.shape[0] < k:
        pad = torch.zeros(k - out.shape[0], Z.shape[1], dtype=Z.dtype)
        out = torch.cat([out, pad], dim=0)
    return out


class MatrixGRUCell(nn.Module):
    """GRU gates over a ``d_in x d_out`` weight matrix treated as hidden state.

    Gate matrices are ``d_in x d_in``; biases have the hidden-state shape.
    """

    def __init__(self, d_in: int, d_out: int, gen: Optional[torch.Generator] = None):
        super().__init__()
        gen = gen or torch.Generator().manual_seed(0)
        b = 1.0 / math.sqrt(d_in)
        self.d_in, self.d_out = d_in, d_out
        for gate in ("update", "reset", "cand"):
            setattr(self, f"W_{gate}", nn.Parameter(_uniform((d_in, d_in), b, gen)))
            setattr(self, f"U_{gate}", nn.Parameter(_uniform((d_in, d_in), b, gen)))
            setattr(self, f"b_{gate}", nn.Parameter(_uniform((d_in, d_out), b, gen)))
        self.q = nn.Parameter(_uniform((d_in,), b, gen))


def evolve_weights(Z_prev: torch.Tensor, W_prev: torch.Tensor, cell: MatrixGRUCell) -> torch.Tensor:
    if W_prev.shape != (cell.d_in, cell.d_out) or Z_prev.shape[1] != cell.d_in:
        raise DimensionError(
            f"cell expects Z(N, {cell.d_in}) and W({cell.d_in}, {cell.d_out}); "
            f"got Z{tuple(Z_prev.shape)} W{tuple(W_prev.shape)}"
        )
    X = summarize_embeddings(Z_prev, cell.q, cell.d_out).T
    z = torch.sigmoid(cell.W_update @ X + cell.U_update @ W_prev + cell.b_update)
    r = torch.sigmoid(cell.W_reset @ X + cell.U_reset @ W_prev + cell.b_reset)
    cand = torch.tanh(cell.W_cand @ X + cell.U_cand @ (r * W_prev) + cell.b_cand)
    return (1.0 - z) * W_prev + z * cand


@dataclass
class EmbeddingState:
    """Per-layer activations at the last timestep and the advanced weights."""

    layers: list
    weights: list

    @property
    def final(self) -> torch.Tensor:
        return self.layers[-1]


def _tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(torch.float64)
    return torch.as_tensor(x, dtype=torch.float64)


def encode_window(props: Sequence, features: Sequence, init: Sequence, cells: Sequence) -> EmbeddingState:
    """Run the evolving GCN over a window of (propagation, features) pairs."""
    if len(props) == 0:
        raise ValidationError("empty window")
    if len(props) != len(features):
        raise ValidationError("props and features differ in length")
    weights = list(init)
    n_layers = len(weights)
    layers: list = []
    for P, X in zip(props, features):
        P, Z = _tensor(P), _tensor(X)
        layers = [Z]
        for l in range(n_layers):
            weights[l] = evolve_weights(Z, weights[l], cells[l])
            act = torch.relu if l < n_layers - 1 else None
            Z = gcn_layer(P, Z, weights[l], act)
            layers.append(Z)
    return EmbeddingState(layers, weights)


class EvolvingGCN(nn.Module):
    def __init__(self, dims: Sequence[int], seed: int = 0):
        super().__init__()
        if len(dims) < 2:
            raise ValidationError("need at least one layer")
        gen = torch.Generator().manual_seed(seed)
        self.dims = list(dims)
        self.init_weights = nn.ParameterList()
        self.cells = nn.ModuleList()
        for d_in, d_out in zip(dims, dims[1:]):
            self.init_weights.append(nn.Parameter(_uniform((d_in, d_out), 1.0 / math.sqrt(d_in), gen)))
            self.cells.append(MatrixGRUCell(d_in, d_out, gen))

    def forward(self, props, features) -> EmbeddingState:
        return encode_window(props, features, list(self.init_weights), list(self.cells))


COMBINE_RULES = ("concat", "symmetric")


class TaskHead(nn.Module):
    """Linear classifier over node embeddings or endpoint-pair embeddings.

    ``kind`` is ``node``, ``edge`` or ``link`` (link prediction is the edge
    head with two classes). Pairs are combined by concatenation, or with
    ``combine="symmetric"`` by ``[z_i + z_j, z_i * z_j]`` which ignores order.
    """

    def __init__(
        self,
        kind: str,
        emb_dim: int,
        num_classes: int,
        combine: str = "concat",
        seed: int = 0,
    ):
        super().__init__()
        if kind not in ("node", "edge", "link"):
            raise ValidationError(f"unknown head kind {kind!r}")
        if combine not in COMBINE_RULES:
            raise ValidationError(f"unknown combination rule {combine!r}")
        if kind == "link":
            num_classes = 2
        self.kind, self.combine, self.num_classes = kind, combine, num_classes
        in_dim = emb_dim if kind == "node" else 2 * emb_dim
        gen = torch.Generator().manual_seed(seed)
        b = 1.0 / math.sqrt(in_dim)
        self.weight = nn.Parameter(_uniform((in_dim, num_classes), b, gen))
        # zero bias keeps initial logits centred so the zero-clipped evidence has gradient
        self.bias = nn.Parameter(torch.zeros(num_classes, dtype=torch.float64))

    def pair_features(self, Z: torch.Tensor, pairs: torch.Tensor) -> torch.Tensor:
        zi, zj = Z[pairs[:, 0]], Z[pairs[:, 1]]
        if self.combine == "concat":
            return torch.cat([zi, zj], dim=1)
        return torch.cat([zi + zj, zi * zj], dim=1)

    def forward(self, Z: torch.Tensor, targets) -> torch.Tensor:
        targets = torch.as_tensor(targets, dtype=torch.long)
        n = Z.shape[0]
        if targets.numel() and (targets.min() < 0 or targets.max() >= n):
            raise IndexError(f"target id outside [0, {n})")
        if self.kind == "node":
            H = Z[targets.reshape(-1)]
        else:
            H = self.pair_features(Z, targets.reshape(-1, 2))
        return H @ self.weight + self.bias


def apply_head(emb: EmbeddingState, head: TaskHead, targets) -> torch.Tensor:
    return head(emb.final, targets)
