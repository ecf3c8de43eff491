import numpy as np
import pytest
from hypothesis import settings

from dygood.graph import DynamicGraphSequence, GraphSnapshot

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_snapshot(rng, n, p=0.3, d=3, t=0, labels=True):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    feats = rng.normal(size=(n, d))
    if labels:
        return GraphSnapshot(t, n, edges, feats, rng.integers(0, 2, n), "node")
    return GraphSnapshot(t, n, edges, feats)


def random_sequence(rng, n=6, T=4, d=3, p=0.4):
    return DynamicGraphSequence([random_snapshot(rng, n, p, d, t) for t in range(T)], 2)


def complete_graph(n, d=2):
    iu, ju = np.triu_indices(n, k=1)
    return GraphSnapshot(0, n, np.stack([iu, ju], axis=1), np.zeros((n, d)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
