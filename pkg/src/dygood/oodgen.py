"""Synthetic OOD test data: SBM structure resampling and feature interpolation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ValidationError
from .graph import DynamicGraphSequence, GraphSnapshot


@dataclass(frozen=True)
class SBMSpec:
    """Stochastic block model parameters.

    With ``p_in`` unset, ``p_in`` is calibrated so the expected edge count
    equals the source snapshot's and ``p_out = out_ratio * p_in``.
    ``block_probs`` unset means balanced blocks assigned by a random permutation.
    """

    num_blocks: int = 4
    block_probs: Optional[Sequence[float]] = None
    p_in: Optional[float] = None
    p_out: Optional[float] = None
    out_ratio: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.num_blocks < 2:
            raise ValidationError("SBM needs at least two blocks")
        if self.p_in is not None:
            p_out = self.p_out if self.p_out is not None else self.out_ratio * self.p_in
            if not 0.0 <= p_out <= self.p_in <= 1.0:
                raise ValidationError("need 0 <= p_out <= p_in <= 1")


@dataclass(frozen=True)
class FISpec:
    """Feature interpolation ``x_i' = lam_i x_i + (1 - lam_i) x_perm(i)``.

    ``lam`` fixes every coefficient; otherwise each is drawn from
    ``uniform(low, high)``. ``permutation`` overrides the seeded pairing.
    """

    lam: Optional[float] = None
    low: float = 0.0
    high: float = 1.0
    permutation: Optional[Sequence[int]] = None
    seed: int = 0

    def __post_init__(self):
        if self.lam is not None and not 0.0 <= self.lam <= 1.0:
            raise ValidationError("interpolation coefficient must lie in [0, 1]")
        if not 0.0 <= self.low <= self.high <= 1.0:
            raise ValidationError("coefficient range must lie inside [0, 1]")


def _assign_blocks(n: int, spec: SBMSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.block_probs is None:
        return rng.permutation(np.arange(n) % spec.num_blocks)
    probs = np.asarray(spec.block_probs, dtype=np.float64)
    if probs.shape != (spec.num_blocks,) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValidationError("block_probs must be a distribution over num_blocks")
    return rng.choice(spec.num_blocks, size=n, p=probs)


def calibrate(blocks: np.ndarray, target_edges: int, out_ratio: float) -> tuple:
    """``(p_in, p_out)`` whose expected edge count equals ``target_edges``."""
    sizes = np.bincount(blocks).astype(np.float64)
    n = sizes.sum()
    within = float(np.sum(sizes * (sizes - 1) / 2))
    across = float(n * (n - 1) / 2 - within)
    capacity = within + out_ratio * across
    if capacity == 0:
        raise ValidationError("block structure admits no edges")
    p_in = target_edges / capacity
    if p_in > 1.0:
        raise ValidationError(
            f"cannot reach {target_edges} expected edges: at most {capacity:.1f} with p_in=1"
        )
    return p_in, out_ratio * p_in


def sm_generate(snap: GraphSnapshot, spec: SBMSpec) -> GraphSnapshot:
    """Resample the edge set from an SBM; nodes, features and node labels are kept."""
    rng = np.random.default_rng(spec.seed)
    n = snap.num_nodes
    blocks = _assign_blocks(n, spec, rng)
    if spec.p_in is None:
        p_in, p_out = calibrate(blocks, snap.num_edges, spec.out_ratio)
    else:
        p_in = spec.p_in
        p_out = spec.p_out if spec.p_out is not None else spec.out_ratio * p_in
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(blocks[iu] == blocks[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    if snap.label_kind == "node":
        labels, kind = snap.labels, "node"
    else:
        labels, kind = None, None
    return GraphSnapshot(snap.timestep, n, edges, snap.features.copy(), labels, kind)


def fi_generate(snap: GraphSnapshot, spec: FISpec) -> GraphSnapshot:
    """Interpolate each node's features with a randomly paired node's."""
    rng = np.random.default_rng(spec.seed)
    n = snap.num_nodes
    if spec.permutation is not None:
        perm = np.asarray(spec.permutation, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(n)):
            raise ValidationError("permutation must be a permutation of the node set")
    else:
        perm = rng.permutation(n)
    if spec.lam is not None:
        lam = np.full(n, spec.lam)
    else:
        lam = rng.uniform(spec.low, spec.high, size=n)
    X = snap.features
    Xn = lam[:, None] * X + (1.0 - lam[:, None]) * X[perm]
    return GraphSnapshot(snap.timestep, n, snap.edges.copy(), Xn, snap.labels, snap.label_kind)


def make_ood_testset(
    seq: DynamicGraphSequence, kind: str, spec: Union[SBMSpec, FISpec]
) -> DynamicGraphSequence:
    """Apply SM or FI to every snapshot with seed ``spec.seed + timestep``."""
    kind = kind.lower()
    if kind == "sm":
        fn, expected = sm_generate, SBMSpec
    elif kind == "fi":
        fn, expected = fi_generate, FISpec
    else:
        raise ValidationError(f"unknown OOD kind {kind!r}")
    if not isinstance(spec, expected):
        raise ValidationError(f"{kind} needs a {expected.__name__}")
    seeds, snaps = [], []
    for s in seq.snapshots:
        seed = spec.seed + s.timestep
        seeds.append(seed)
        snaps.append(fn(s, dataclasses.replace(spec, seed=seed)))
    meta = dict(seq.meta)
    meta["ood_seeds"] = seeds
    meta["ood_spec"] = dataclasses.asdict(spec)
    return DynamicGraphSequence(snaps, seq.num_classes, kind, meta)
