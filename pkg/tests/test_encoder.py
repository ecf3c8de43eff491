import math

import numpy as np
import pytest
import torch

import dygood.encoder as enc
from dygood.config import ExperimentConfig
from dygood.encoder import (
    EvolvingGCN,
    MatrixGRUCell,
    TaskHead,
    apply_head,
    encode_window,
    evolve_weights,
    gcn_layer,
    summarize_embeddings,
)
from dygood.errors import DimensionError
from dygood.graph import DynamicGraphSequence, normalize_propagation, propagate, window
from dygood.losses import one_hot
from dygood.spectral import negative_window
from dygood.training import DetectorModel, window_loss

from conftest import random_sequence, random_snapshot


def T(x):
    return torch.tensor(x, dtype=torch.float64)


def zero_cell(d_in, d_out):
    cell = MatrixGRUCell(d_in, d_out)
    with torch.no_grad():
        for p in cell.parameters():
            p.zero_()
    return cell


def test_gcn_examples():
    assert gcn_layer(T([[1.0]]), T([[-2.0, 3.0]]), torch.eye(2, dtype=torch.float64)).tolist() == [[0.0, 3.0]]
    P = torch.full((3, 3), 1 / 3, dtype=torch.float64)
    Z = T([[1.0, -2.0]] * 3)
    out = gcn_layer(P, Z, T([[0.5, 1.0], [2.0, -1.0]]))
    assert torch.equal(out[0], out[1]) and torch.equal(out[1], out[2])
    out = gcn_layer(T([[0.5, 0.5], [0.5, 0.5]]), T([[1.0, 0.0], [0.0, 1.0]]), torch.eye(2, dtype=torch.float64), None)
    assert out.tolist() == [[0.5, 0.5], [0.5, 0.5]]


def test_gcn_shape_mismatch():
    with pytest.raises(DimensionError):
        gcn_layer(torch.eye(2, dtype=torch.float64), torch.ones(3, 2, dtype=torch.float64), torch.eye(2, dtype=torch.float64))
    with pytest.raises(DimensionError):
        gcn_layer(torch.eye(3, dtype=torch.float64), torch.ones(3, 2, dtype=torch.float64), torch.eye(3, dtype=torch.float64))


def test_summary_sorted_by_aligned_coordinate():
    Z = T([[0.2, 5.0], [0.9, -1.0], [-0.4, 0.0]])
    out = summarize_embeddings(Z, T([1.0, 0.0]), 3)
    assert out[:, 0].tolist() == pytest.approx([0.9 * math.tanh(0.9), 0.2 * math.tanh(0.2), -0.4 * math.tanh(-0.4)])


def test_summary_pads_short_inputs():
    out = summarize_embeddings(T([[1.0, 2.0]]), T([0.0, 1.0]), 3)
    assert out.shape == (3, 2)
    assert out[1:].abs().sum().item() == 0.0


def test_summary_single_dominant_row():
    # q = (3, 4), |q| = 5: scores are 1.0, 3.4, -1.24
    Z = T([[1.0, 0.5], [3.0, 2.0], [-1.0, -0.8]])
    out = summarize_embeddings(Z, T([3.0, 4.0]), 1)
    np.testing.assert_allclose(out.numpy(), [[3.0 * math.tanh(3.4), 2.0 * math.tanh(3.4)]], atol=1e-15)


def test_evolve_zero_params_halves_weights():
    cell = zero_cell(3, 2)
    W = T([[1.0, -2.0], [0.5, 4.0], [3.0, 0.0]])
    out = evolve_weights(torch.randn(5, 3, dtype=torch.float64), W, cell)
    assert torch.equal(out, 0.5 * W)


def test_evolve_saturated_gates():
    W = T([[1.0, -2.0], [0.5, 4.0], [3.0, 0.0]])
    Z = torch.randn(4, 3, dtype=torch.float64)
    cell = zero_cell(3, 2)
    with torch.no_grad():
        cell.b_update.fill_(-1e3)
    assert torch.equal(evolve_weights(Z, W, cell), W)
    with torch.no_grad():
        cell.b_update.fill_(1e3)
        cell.b_cand.fill_(0.7)
    np.testing.assert_allclose(evolve_weights(Z, W, cell).detach().numpy(), np.full((3, 2), math.tanh(0.7)), atol=1e-15)


def test_evolve_shape_mismatch():
    with pytest.raises(DimensionError):
        evolve_weights(torch.ones(4, 3, dtype=torch.float64), torch.ones(2, 2, dtype=torch.float64), zero_cell(3, 2))


def count_evolve(monkeypatch):
    calls = []
    real = enc.evolve_weights

    def counting(*args):
        calls.append(1)
        return real(*args)

    monkeypatch.setattr(enc, "evolve_weights", counting)
    return calls


def test_single_step_single_layer_calls(monkeypatch, rng):
    calls = count_evolve(monkeypatch)
    gcn_calls = []
    real_gcn = enc.gcn_layer
    monkeypatch.setattr(enc, "gcn_layer", lambda *a: gcn_calls.append(1) or real_gcn(*a))
    seq = random_sequence(rng, n=5, T=1)
    EvolvingGCN([3, 4])(*_pf(propagate(window(seq, 0, 1))))
    assert len(calls) == 1 and len(gcn_calls) == 1


def test_window_of_three_advances_weights_three_times(monkeypatch, rng):
    calls = count_evolve(monkeypatch)
    seq = random_sequence(rng, n=5, T=3)
    EvolvingGCN([3, 4])(*_pf(propagate(window(seq, 0, 3))))
    assert len(calls) == 3


def _pf(pw):
    return pw.props, pw.features


def test_frozen_weights_on_repeated_snapshot(rng):
    snap = random_snapshot(rng, 6)
    P = normalize_propagation(snap)
    model = EvolvingGCN([3, 4, 2], seed=1)
    with torch.no_grad():
        for cell in model.cells:
            cell.b_update.fill_(-1e3)
    one = model([P], [snap.features]).final
    three = model([P, P, P], [snap.features] * 3).final
    assert torch.equal(one, three)


def test_permutation_equivariance(rng):
    snaps = [random_snapshot(rng, 6, 0.5, t=t) for t in range(3)]
    perm = rng.permutation(6)
    model = EvolvingGCN([3, 5, 4], seed=2)
    props = [normalize_propagation(s) for s in snaps]
    feats = [s.features for s in snaps]
    out = model(props, feats).final
    out_p = model([P[np.ix_(perm, perm)] for P in props], [X[perm] for X in feats]).final
    assert torch.max(torch.abs(out[perm] - out_p)).item() < 1e-8


def test_deterministic_given_seed(rng):
    seq = random_sequence(rng, n=6, T=3)
    pw = propagate(window(seq, 0, 3))
    a = EvolvingGCN([3, 4], seed=5)(*_pf(pw)).final
    b = EvolvingGCN([3, 4], seed=5)(*_pf(pw)).final
    assert torch.equal(a, b)


def test_head_examples():
    head = TaskHead("node", 3, 4)
    with torch.no_grad():
        head.weight.zero_()
    assert head(torch.randn(5, 3, dtype=torch.float64), [0, 2]).abs().sum().item() == 0.0
    head = TaskHead("node", 2, 2)
    with torch.no_grad():
        head.weight.copy_(torch.eye(2))
    assert head(T([[0.3, -1.2]]), [0]).tolist() == [[0.3, -1.2]]
    with pytest.raises(IndexError):
        head(T([[0.3, -1.2]]), [1])


def test_symmetric_combination_ignores_order():
    Z = torch.randn(4, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    head = TaskHead("edge", 3, 3, combine="symmetric", seed=4)
    a = head(Z, [[0, 3], [1, 2]])
    b = head(Z, [[3, 0], [2, 1]])
    assert torch.equal(a, b)
    concat = TaskHead("edge", 3, 3, seed=4)
    assert not torch.equal(concat(Z, [[0, 3]]), concat(Z, [[3, 0]]))
    assert TaskHead("link", 3, 7).num_classes == 2


def test_apply_head_uses_last_layer(rng):
    seq = random_sequence(rng, n=5, T=2)
    pw = propagate(window(seq, 0, 2))
    emb = EvolvingGCN([3, 4, 2])(*_pf(pw))
    head = TaskHead("node", 2, 2)
    assert torch.equal(apply_head(emb, head, [0, 1]), head(emb.final, [0, 1]))


# ---- whole pipeline gradient: encoder + head + evidential loss -------------

def test_pipeline_gradients_match_finite_differences():
    from test_losses import central_fd, rel_err

    gen = np.random.default_rng(77)
    checked = 0
    for trial in range(20):
        n = int(gen.integers(3, 7))
        dt = int(gen.integers(1, 4))
        K = int(gen.integers(2, 6))
        snaps = []
        for t in range(dt):
            s = random_snapshot(gen, n, 0.5, d=3, t=t, labels=False)
            s.labels, s.label_kind = gen.integers(0, K, n), "node"
            snaps.append(s)
        seq = DynamicGraphSequence(snaps, K)
        win = window(seq, 0, dt)
        pw, nw = propagate(win), negative_window(win, 0.3)
        model = DetectorModel([3, 4, 3], K, "node", "concat", seed=trial)
        with torch.no_grad():
            model.head.weight.mul_(4.0)  # spread logits so evidence is active
            # nodes with all-zero embeddings would sit on the evidence kink at logit 0
            model.head.bias.uniform_(0.2, 1.0, generator=torch.Generator().manual_seed(trial))
        cfg = ExperimentConfig(rho1=0.6, rho2=0.8)
        targets = torch.arange(n)
        labels = torch.as_tensor(snaps[-1].labels)
        params = list(model.parameters())
        flat = torch.cat([p.detach().reshape(-1) for p in params])

        def loss_at(vec):
            offset = 0
            with torch.no_grad():
                for p in params:
                    p.copy_(vec[offset : offset + p.numel()].reshape(p.shape))
                    offset += p.numel()
            return window_loss(model, pw, nw, targets, labels, cfg, cfg.rho1).total

        loss_at(flat)
        model.zero_grad()
        window_loss(model, pw, nw, targets, labels, cfg, cfg.rho1).total.backward()
        grad = torch.cat([p.grad.reshape(-1) for p in params])
        fd = central_fd(lambda v: loss_at(v).detach(), flat.clone())
        assert rel_err(grad, fd) < 1e-4, trial
        checked += 1
    assert checked == 20
