import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dygood.errors import ValidationError
from dygood.graph import DynamicGraphSequence, GraphSnapshot, window
from dygood.spectral import (
    SpectralCache,
    _kept_sum,
    augment,
    eigendecompose,
    laplacian,
    negative_window,
    write_spectrum,
)

from conftest import complete_graph, random_snapshot

PATH2 = GraphSnapshot(0, 2, [[0, 1]], np.zeros((2, 1)))


def test_laplacian_examples():
    single = GraphSnapshot(0, 1, np.zeros((0, 2)), np.zeros((1, 1)))
    assert np.array_equal(laplacian(single), [[0.0]])
    np.testing.assert_allclose(laplacian(PATH2), [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)
    np.testing.assert_allclose(laplacian(complete_graph(3)), np.eye(3) - np.ones((3, 3)) / 3, atol=1e-15)


def test_two_node_eigenpairs():
    dec = eigendecompose(laplacian(PATH2))
    np.testing.assert_allclose(dec.eigenvalues, [0.0, 1.0], atol=1e-14)
    s = 1 / math.sqrt(2)
    np.testing.assert_allclose(dec.eigenvectors[:, 0], [s, s], atol=1e-14)
    np.testing.assert_allclose(dec.eigenvectors[:, 1], [s, -s], atol=1e-14)


def test_single_node_eigenpairs():
    dec = eigendecompose(np.zeros((1, 1)))
    assert dec.eigenvalues.tolist() == [0.0] and dec.eigenvectors.tolist() == [[1.0]]


def test_degenerate_eigenspace_projector():
    dec = eigendecompose(laplacian(complete_graph(3)))
    np.testing.assert_allclose(dec.eigenvalues, [0, 1, 1], atol=1e-14)
    U = dec.eigenvectors[:, 1:]
    np.testing.assert_allclose(U @ U.T, np.eye(3) - np.ones((3, 3)) / 3, atol=1e-14)


def test_asymmetric_and_nonsquare_rejected():
    with pytest.raises(ValidationError):
        eigendecompose(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValidationError):
        eigendecompose(np.zeros((2, 3)))


def test_reconstruction_fifty_graphs():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 201))
        snap = random_snapshot(rng, n, p=float(rng.uniform(0, 0.3)), labels=False)
        L = laplacian(snap)
        dec = eigendecompose(L)
        worst = max(worst, np.max(np.abs(dec.reconstruct() - L)))
        assert dec.eigenvalues.min() >= -1e-12 and dec.eigenvalues.max() < 2.0
        assert np.all(np.diff(dec.eigenvalues) >= -1e-14)
        U = dec.eigenvectors
        for j in range(n):
            nz = np.flatnonzero(np.abs(U[:, j]) > 1e-10)
            assert U[nz[0], j] > 0
    assert worst < 1e-8


def test_negative_two_node_r0():
    neg = augment(eigendecompose(laplacian(PATH2)), 0.0)
    np.testing.assert_allclose(neg.laplacian, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-14)


def test_negative_triangle_r08_is_identity():
    neg = augment(eigendecompose(laplacian(complete_graph(3))), 0.8)
    assert np.max(np.abs(neg.laplacian - np.eye(3))) < 1e-10
    assert np.max(np.abs(neg.propagation)) < 1e-10


def test_full_low_band_is_complete_basis():
    # keeping all floor(N/2) low eigenspaces plus the high band spans everything
    rng = np.random.default_rng(5)
    for n in (4, 10, 30):
        dec = eigendecompose(laplacian(random_snapshot(rng, n, 0.5, labels=False)))
        np.testing.assert_allclose(_kept_sum(dec, n // 2, "verbatim"), np.eye(n), atol=1e-10)
        near_one = augment(dec, 0.999)
        # r < 1 always drops at least one low eigenspace for even N
        assert np.linalg.matrix_rank(near_one.laplacian, tol=1e-8) == n - 1


@given(st.integers(2, 40), st.floats(0, 0.999), st.integers(0, 2**31))
def test_verbatim_negative_is_projector(n, r, seed):
    dec = eigendecompose(laplacian(random_snapshot(np.random.default_rng(seed), n, 0.3, labels=False)))
    Ln = augment(dec, r).laplacian
    assert np.max(np.abs(Ln @ Ln - Ln)) < 1e-8
    assert np.array_equal(Ln, Ln.T)
    expected_rank = math.floor(r * n / 2) + (n - n // 2)
    assert round(np.trace(Ln)) == expected_rank


@given(st.integers(2, 30), st.floats(0, 0.999), st.integers(0, 2**31))
def test_weighted_negative_keeps_selected_eigenvalues(n, r, seed):
    dec = eigendecompose(laplacian(random_snapshot(np.random.default_rng(seed), n, 0.3, labels=False)))
    Ln = augment(dec, r, "weighted").laplacian
    k = math.floor(r * n / 2)
    kept = np.sort(np.r_[dec.eigenvalues[:k], dec.eigenvalues[n // 2 :]])
    got = np.sort(np.linalg.eigvalsh(Ln))[-kept.size :] if kept.size else np.array([])
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(Ln)), np.sort(np.r_[kept, np.zeros(n - kept.size)]), atol=1e-9)


def test_invalid_ratio_and_mode():
    dec = eigendecompose(laplacian(PATH2))
    for r in (-0.1, 1.0, 1.5):
        with pytest.raises(ValidationError):
            augment(dec, r)
    with pytest.raises(ValidationError):
        augment(dec, 0.3, "other")


def test_partial_spectrum_matches_dense():
    rng = np.random.default_rng(11)
    for n in (9, 20):
        L = laplacian(random_snapshot(rng, n, 0.4, labels=False))
        full, part = eigendecompose(L), eigendecompose(L, dense_limit=4)
        assert not part.complete and part.eigenvalues.size == n // 2
        for mode in ("verbatim", "weighted"):
            for r in (0.0, 0.3, 0.9):
                np.testing.assert_allclose(augment(part, r, mode).laplacian, augment(full, r, mode).laplacian, atol=1e-9)


def test_cache_counts_one_decomposition_per_snapshot():
    rng = np.random.default_rng(2)
    snaps = [random_snapshot(rng, 8, 0.4, t=t, labels=False) for t in range(4)]
    seq = DynamicGraphSequence(snaps, 2)
    cache = SpectralCache()
    negative_window(window(seq, 0, 3), 0.3, cache=cache)
    assert cache.computed == 3
    negative_window(window(seq, 1, 3), 0.3, cache=cache)
    assert cache.computed == 4


def test_identical_snapshots_share_negative():
    rng = np.random.default_rng(4)
    base = random_snapshot(rng, 7, 0.5, labels=False)
    snaps = [GraphSnapshot(t, 7, base.edges, base.features) for t in range(3)]
    cache = SpectralCache()
    pw = negative_window(window(DynamicGraphSequence(snaps, 2), 0, 3), 0.4, cache=cache)
    assert cache.computed == 1
    assert all(np.array_equal(pw.props[0], P) for P in pw.props)


def test_write_spectrum():
    buf = io.StringIO()
    write_spectrum(buf, [(0, [0.0, 1.0], [1.0, 1.0])])
    assert buf.getvalue().splitlines() == ["timestep,index,eigenvalue,neg_eigenvalue", "0,0,0.0,1.0", "0,1,1.0,1.0"]


def test_degenerate_basis_independent_of_solver_rotation():
    from dygood.spectral import _canonicalize
    from scipy.stats import special_ortho_group

    # three components: zero eigenvalue with multiplicity three
    snap = GraphSnapshot(0, 7, [[0, 1], [2, 3], [3, 4], [5, 6]], np.zeros((7, 1)))
    lam, U = np.linalg.eigh(laplacian(snap))
    R = special_ortho_group.rvs(3, random_state=0)
    U_rot = U.copy()
    U_rot[:, :3] = U[:, :3] @ R
    _, A = _canonicalize(lam, U)
    _, B = _canonicalize(lam, U_rot)
    np.testing.assert_allclose(A, B, atol=1e-12)
    # one vector per component, supported on that component only
    supports = [set(np.flatnonzero(np.abs(A[:, j]) > 1e-10)) for j in range(3)]
    assert supports == [{0, 1}, {2, 3, 4}, {5, 6}]
