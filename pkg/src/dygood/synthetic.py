"""Two-community dynamic SBM with community-correlated labels and drifting features.

Node labels are community indices. Feature means are ``+/- signal`` along a
direction in the first two coordinates that rotates by ``drift`` radians per
timestep; every entry gets independent Gaussian noise. Edges are redrawn
independently at every timestep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import DynamicGraphSequence, GraphSnapshot


@dataclass(frozen=True)
class SyntheticSpec:
    num_nodes: int = 60
    timesteps: int = 12
    feature_dim: int = 8
    p_in: float = 0.2
    p_out: float = 0.02
    signal: float = 1.0
    noise: float = 1.0
    drift: float = 0.05


def make_synthetic(spec: SyntheticSpec = SyntheticSpec(), seed: int = 0) -> DynamicGraphSequence:
    rng = np.random.default_rng(seed)
    n, d = spec.num_nodes, spec.feature_dim
    community = rng.permutation(np.arange(n) % 2)
    sign = np.where(community == 1, 1.0, -1.0)
    same = community[:, None] == community[None, :]
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(same[iu, ju], spec.p_in, spec.p_out)
    snaps = []
    for t in range(spec.timesteps):
        direction = np.zeros(d)
        direction[0] = np.cos(spec.drift * t)
        direction[1] = np.sin(spec.drift * t)
        X = spec.signal * sign[:, None] * direction[None, :] + spec.noise * rng.standard_normal((n, d))
        keep = rng.random(iu.size) < prob
        edges = np.stack([iu[keep], ju[keep]], axis=1)
        snaps.append(GraphSnapshot(t, n, edges, X, community.copy(), "node"))
    return DynamicGraphSequence(snaps, 2, "id", {"generator": "two-community-sbm", "seed": seed})
