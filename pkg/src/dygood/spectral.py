"""Normalized Laplacian spectra and low-frequency-perturbed negative samples.

A negative sample keeps the first ``floor(r*N/2)`` low-frequency eigenspaces
and all high-frequency ones (indices ``floor(N/2)`` onward). In ``verbatim``
mode every kept projector has unit weight, so the result is itself a
projector; ``weighted`` mode scales each kept projector by its eigenvalue.
The encoder consumes ``P_neg = I - L_neg`` in place of the propagation matrix.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ValidationError
from .graph import GraphSnapshot, PropagatedWindow, SnapshotWindow, normalize_propagation

SYMMETRY_TOL = 1e-10
SIGN_TOL = 1e-10
DENSE_LIMIT = 2000


def laplacian(snap: GraphSnapshot) -> np.ndarray:
    P = normalize_propagation(snap)
    return np.eye(snap.num_nodes) - P


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenpairs of a normalized Laplacian.

    When ``complete`` is false only the ``floor(N/2)`` lowest pairs are held
    (large-graph mode) and ``matrix`` keeps the Laplacian so the high-frequency
    part can be recovered as a complement.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n: int
    complete: bool = True
    matrix: Optional[np.ndarray] = None

    def reconstruct(self) -> np.ndarray:
        U, lam = self.eigenvectors, self.eigenvalues
        return (U * lam) @ U.T


def _eigenspace_basis(U: np.ndarray) -> np.ndarray:
    """Basis-independent orthonormal basis of ``span(U)``.

    Gram-Schmidt over the columns of the projector ``U U^T`` in node order,
    so any rotation of ``U`` gives the same vectors. For the zero eigenspace
    of a graph with several components this yields one vector per component.
    """
    m = U.shape[1]
    proj = U @ U.T
    basis = []
    for j in range(proj.shape[0]):
        v = proj[:, j].copy()
        for b in basis:
            v -= (b @ v) * b
        # projector columns have norm <= 1; smaller residuals are dependent
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            basis.append(v / norm)
            if len(basis) == m:
                break
    return np.stack(basis, axis=1)


def _groups(lam: np.ndarray):
    start = 0
    for i in range(1, len(lam) + 1):
        if i == len(lam) or lam[i] - lam[i - 1] > SYMMETRY_TOL:
            yield start, i
            start = i


def _canonicalize(lam: np.ndarray, U: np.ndarray):
    U = U.copy()
    for a, b in _groups(lam):
        if b - a > 1:
            U[:, a:b] = _eigenspace_basis(U[:, a:b])
    for j in range(U.shape[1]):
        nz = np.flatnonzero(np.abs(U[:, j]) > SIGN_TOL)
        if nz.size and U[nz[0], j] < 0:
            U[:, j] = -U[:, j]
    return lam, U


def eigendecompose(L: np.ndarray, dense_limit: int = DENSE_LIMIT) -> SpectralDecomposition:
    """Eigendecomposition with ascending eigenvalues and a fixed basis convention.

    Repeated eigenvalues get the projector-derived basis of
    ``_eigenspace_basis``; each eigenvector's first entry above 1e-10 in
    magnitude is then made positive. Above ``dense_limit`` nodes only the
    lower half of the spectrum is computed.
    """
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValidationError("Laplacian must be square")
    if not np.allclose(L, L.T, rtol=0.0, atol=SYMMETRY_TOL):
        raise ValidationError("Laplacian is not symmetric")
    n = L.shape[0]
    if n > dense_limit and n >= 2:
        half = n // 2
        top = half
        while True:
            # fetch past the cut until the eigenspace at the cut is complete
            lam, U = scipy.linalg.eigh(L, subset_by_index=[0, top])
            if top == n - 1 or lam[top] - lam[half - 1] > SYMMETRY_TOL:
                break
            top = min(n - 1, 2 * top)
        lam, U = _canonicalize(lam, U)
        return SpectralDecomposition(lam[:half], U[:, :half], n, complete=False, matrix=L)
    lam, U = np.linalg.eigh(L)
    lam, U = _canonicalize(lam, U)
    return SpectralDecomposition(lam, U, n)


@dataclass(frozen=True)
class NegativeSample:
    laplacian: np.ndarray
    propagation: np.ndarray
    r: float
    mode: str


def _projector(U: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
    if weights is None:
        return U @ U.T
    return (U * weights) @ U.T


def _kept_sum(dec: SpectralDecomposition, n_low: int, mode: str) -> np.ndarray:
    half = dec.n // 2
    U, lam = dec.eigenvectors, dec.eigenvalues
    w_low = None if mode == "verbatim" else lam[:n_low]
    low = _projector(U[:, :n_low], w_low)
    if dec.complete:
        w_high = None if mode == "verbatim" else lam[half:]
        high = _projector(U[:, half:], w_high)
    elif mode == "verbatim":
        high = np.eye(dec.n) - _projector(U[:, :half])
    else:
        high = dec.matrix - _projector(U[:, :half], lam[:half])
    return low + high


def augment(dec: SpectralDecomposition, r: float, mode: str = "verbatim") -> NegativeSample:
    if not 0.0 <= r < 1.0:
        raise ValidationError(f"preservation ratio must lie in [0, 1), got {r}")
    if mode not in ("verbatim", "weighted"):
        raise ValidationError(f"unknown augmentation mode {mode!r}")
    n_low = math.floor(r * dec.n / 2)
    Lneg = _kept_sum(dec, n_low, mode)
    Lneg = 0.5 * (Lneg + Lneg.T)
    return NegativeSample(Lneg, np.eye(dec.n) - Lneg, r, mode)


class SpectralCache:
    """Decompositions keyed by snapshot structure; counts fresh computations."""

    def __init__(self, dense_limit: int = DENSE_LIMIT):
        self.dense_limit = dense_limit
        self.computed = 0
        self._store: dict = {}
        self._lock = threading.Lock()

    def get(self, snap: GraphSnapshot) -> SpectralDecomposition:
        key = snap.structure_key()
        dec = self._store.get(key)
        if dec is None:
            dec = eigendecompose(laplacian(snap), self.dense_limit)
            with self._lock:
                if key not in self._store:
                    self._store[key] = dec
                    self.computed += 1
                dec = self._store[key]
        return dec


def negative_window(
    win: SnapshotWindow,
    r: float,
    mode: str = "verbatim",
    cache: Optional[SpectralCache] = None,
) -> PropagatedWindow:
    """Replace each snapshot's propagation matrix with its spectral negative."""
    cache = cache if cache is not None else SpectralCache()
    props = tuple(augment(cache.get(s), r, mode).propagation for s in win.snapshots)
    return PropagatedWindow(win.start, props, tuple(s.features for s in win.snapshots), win.last)


def write_spectrum(fh, rows) -> None:
    """CSV dump ``timestep,index,eigenvalue[,neg_eigenvalue]``."""
    fh.write("timestep,index,eigenvalue,neg_eigenvalue\n")
    for t, lam, lam_neg in rows:
        for i, (a, b) in enumerate(zip(lam, lam_neg)):
            fh.write(f"{t},{i},{float(a)!r},{float(b)!r}\n")
