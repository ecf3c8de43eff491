"""Temporal graph containers, edge-list ingestion and propagation matrices.

Node identity is global per sequence: every snapshot has the same ``num_nodes``
and nodes that are inactive at a timestep carry zero feature rows and no edges.
Graphs are undirected; directed input is symmetrized on construction.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import EmptyDatasetError, OutOfRangeError, ParseError, ValidationError

FORMAT_VERSION = 1


def _canonical_edges(edges, num_nodes: int, labels=None):
    """Symmetrize, drop self-loops and collapse duplicates.

    Returns edges as an ``(E, 2)`` int64 array with ``src < dst`` in
    lexicographic order, plus labels aligned with it (first occurrence wins).
    """
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if arr.size and (arr.min() < 0 or arr.max() >= num_nodes):
        raise ValidationError(f"edge endpoint outside [0, {num_nodes})")
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    keep = lo != hi
    lo, hi = lo[keep], hi[keep]
    key = lo * num_nodes + hi
    _, first = np.unique(key, return_index=True)
    # np.unique sorts keys, so ``first`` is already in lexicographic edge order
    out = np.stack([lo[first], hi[first]], axis=1) if first.size else np.zeros((0, 2), np.int64)
    if labels is None:
        return out, None
    lab = np.asarray(labels, dtype=np.int64)[keep][first]
    return out, lab


@dataclass(eq=False)
class GraphSnapshot:
    """One timestep of a dynamic graph.

    ``labels`` holds class indices per node (``label_kind == "node"``, with -1
    for unlabeled nodes) or per edge aligned with ``edges`` (``"edge"``).
    """

    timestep: int
    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    label_kind: Optional[str] = None

    def __post_init__(self):
        if self.timestep < 0:
            raise ValidationError("timestep must be >= 0")
        if self.num_nodes <= 0:
            raise ValidationError("num_nodes must be positive")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.num_nodes:
            raise ValidationError(
                f"feature matrix must have {self.num_nodes} rows, got shape {feats.shape}"
            )
        self.features = feats
        edge_labels = self.labels if self.label_kind == "edge" else None
        self.edges, edge_labels = _canonical_edges(self.edges, self.num_nodes, edge_labels)
        if self.label_kind == "edge":
            self.labels = edge_labels
        elif self.label_kind == "node":
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (self.num_nodes,):
                raise ValidationError("node labels must have one entry per node")
            self.labels = lab
        elif self.labels is not None or self.label_kind is not None:
            raise ValidationError(f"unknown label kind {self.label_kind!r}")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self, sparse: bool = False):
        n = self.num_nodes
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        A = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
        return A if sparse else A.toarray()

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes)

    def structure_key(self) -> str:
        """Hash of the node count and edge set (features excluded)."""
        h = hashlib.sha1()
        h.update(str(self.num_nodes).encode())
        h.update(np.ascontiguousarray(self.edges).tobytes())
        return h.hexdigest()

    def content_hash(self) -> str:
        h = hashlib.sha1(self.structure_key().encode())
        h.update(str(self.timestep).encode())
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(str(self.label_kind).encode())
        if self.labels is not None:
            h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, GraphSnapshot):
            return NotImplemented
        return self.content_hash() == other.content_hash() and np.array_equal(
            self.features, other.features
        )

    __hash__ = None


@dataclass(eq=False)
class DynamicGraphSequence:
    snapshots: tuple
    num_classes: int
    provenance: str = "id"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.snapshots = tuple(self.snapshots)
        if not self.snapshots:
            raise EmptyDatasetError("sequence has no snapshots")
        steps = [s.timestep for s in self.snapshots]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValidationError("snapshot timesteps must be strictly increasing")
        sizes = {s.num_nodes for s in self.snapshots}
        if len(sizes) != 1:
            raise ValidationError(f"snapshots disagree on node count: {sorted(sizes)}")
        dims = {s.feature_dim for s in self.snapshots}
        if len(dims) != 1:
            raise ValidationError(f"snapshots disagree on feature dimension: {sorted(dims)}")

    @property
    def total_timesteps(self) -> int:
        return len(self.snapshots)

    @property
    def feature_dim(self) -> int:
        return self.snapshots[0].feature_dim

    @property
    def num_nodes(self) -> int:
        return self.snapshots[0].num_nodes

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]

    def slice(self, start: int, stop: int) -> "DynamicGraphSequence":
        return DynamicGraphSequence(
            self.snapshots[start:stop], self.num_classes, self.provenance, dict(self.meta)
        )

    def content_hash(self) -> str:
        """Hash over the graph data only; provenance and meta are excluded."""
        h = hashlib.sha1(str(self.num_classes).encode())
        for s in self.snapshots:
            h.update(s.content_hash().encode())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, DynamicGraphSequence):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.provenance == other.provenance
            and len(self) == len(other)
            and all(a == b for a, b in zip(self.snapshots, other.snapshots))
        )

    __hash__ = None


@dataclass(frozen=True)
class SnapshotWindow:
    start: int
    length: int
    snapshots: tuple

    @property
    def last(self) -> GraphSnapshot:
        return self.snapshots[-1]


def window(seq: DynamicGraphSequence, t: int, dt: int) -> SnapshotWindow:
    """Contiguous slice ``seq[t : t + dt]``."""
    if t < 0 or dt < 1:
        raise ValidationError(f"need t >= 0 and dt >= 1, got t={t}, dt={dt}")
    if t + dt > seq.total_timesteps:
        raise OutOfRangeError(
            f"window [{t}, {t + dt}) exceeds sequence length {seq.total_timesteps}"
        )
    return SnapshotWindow(t, dt, seq.snapshots[t : t + dt])


def iter_windows(seq: DynamicGraphSequence, dt: int, start: int = 0, stop: Optional[int] = None):
    """All stride-1 windows lying entirely inside ``[start, stop)``."""
    stop = seq.total_timesteps if stop is None else stop
    for t in range(start, stop - dt + 1):
        yield window(seq, t, dt)


def normalize_propagation(snap: GraphSnapshot, sparse: bool = False):
    """Symmetric propagation matrix ``D^-1/2 (A + I) D^-1/2``.

    ``D`` is the degree matrix of ``A + I``, so isolated nodes get degree 1.
    """
    A = snap.adjacency(sparse=True) + sp.identity(snap.num_nodes, format="csr")
    dinv = 1.0 / np.sqrt(np.asarray(A.sum(axis=1)).ravel())
    if sparse:
        D = sp.diags(dinv)
        return (D @ A @ D).tocsr()
    # the outer product is exactly symmetric, which keeps P == P.T bitwise
    scale = dinv[:, None] * dinv[None, :]
    return A.toarray() * scale


# --------------------------------------------------------------------------
# ingestion


@dataclass
class EdgeListSchema:
    """Column mapping for temporal edge lists.

    ``columns`` names the fields in file order; when ``header`` is true the
    names are taken from the first line instead. Recognised names are
    ``src``, ``dst``, ``t`` and ``label``; other columns are ignored.
    ``time_bucket`` groups raw timestamps into snapshots of that width.
    ``binarize_labels`` maps a signed label (e.g. trust ratings) to
    ``1 if value > 0 else 0``.
    """

    columns: Sequence[str] = ("src", "dst", "t")
    header: bool = False
    delimiter: Optional[str] = None
    time_bucket: Optional[float] = None
    feature_dim: int = 8
    binarize_labels: bool = False


def _open_text(source) -> list[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    elif hasattr(source, "read"):
        data = source.read()
    else:
        data = source
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data.splitlines()


def _sniff_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def _read_rows(lines: list[str], delimiter: Optional[str]):
    """Yield (line_number, fields) for non-blank, non-comment lines."""
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        delim = delimiter or _sniff_delimiter(line)
        yield lineno, [f.strip() for f in next(csv.reader([line], delimiter=delim))]


def _node_order(tokens) -> list[str]:
    uniq = set(tokens)
    try:
        return sorted(uniq, key=lambda s: (float(s), s))
    except ValueError:
        return sorted(uniq)


def load_temporal_edgelist(
    source: Union[IO, bytes, str, os.PathLike],
    schema: Optional[EdgeListSchema] = None,
    features: Union[IO, bytes, str, os.PathLike, None] = None,
    node_labels: Union[IO, bytes, str, os.PathLike, None] = None,
) -> DynamicGraphSequence:
    """Parse a temporal edge list into a dense-indexed sequence.

    Rows are ``src, dst, t[, label]`` per ``schema``. Timesteps are bucketed,
    then compacted to ``0..T-1``; gaps are recorded in ``meta["warnings"]``.
    Without a feature file each active node gets a one-hot encoding of
    ``min(degree, feature_dim - 1)``. ``node_labels`` rows are ``node_id,label``.
    """
    schema = schema or EdgeListSchema()
    lines = _open_text(source)
    rows = list(_read_rows(lines, schema.delimiter))
    columns = list(schema.columns)
    if schema.header and rows:
        columns = [c.lower() for c in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise EmptyDatasetError("edge list contains no data rows")
    for needed in ("src", "dst", "t"):
        if needed not in columns:
            raise ValidationError(f"schema lacks required column {needed!r}")
    ci = {name: columns.index(name) for name in ("src", "dst", "t")}
    label_col = columns.index("label") if "label" in columns else None

    srcs, dsts, times, labels = [], [], [], []
    for lineno, fields in rows:
        if len(fields) < len(columns):
            raise ParseError(f"expected {len(columns)} fields, got {len(fields)}", lineno)
        try:
            tval = float(fields[ci["t"]])
        except ValueError:
            raise ParseError(f"timestep {fields[ci['t']]!r} is not a number", lineno) from None
        if not math.isfinite(tval):
            raise ParseError("timestep is not finite", lineno)
        if schema.time_bucket is None and tval != int(tval):
            raise ParseError("timestep must be an integer without time_bucket", lineno)
        srcs.append(fields[ci["src"]])
        dsts.append(fields[ci["dst"]])
        times.append(tval)
        if label_col is not None:
            try:
                lab = float(fields[label_col])
            except ValueError:
                raise ParseError(f"label {fields[label_col]!r} is not a number", lineno) from None
            if schema.binarize_labels:
                lab = 1 if lab > 0 else 0
            elif lab < 0 or lab != int(lab):
                raise ParseError("label must be a non-negative integer", lineno)
            labels.append(int(lab))

    feat_map = None
    if features is not None:
        feat_map = {}
        flines = _open_text(features)
        for lineno, fields in _read_rows(flines, schema.delimiter):
            try:
                feat_map[fields[0]] = np.array([float(v) for v in fields[1:]])
            except ValueError:
                raise ParseError("non-numeric feature value", lineno) from None
        dims = {len(v) for v in feat_map.values()}
        if len(dims) != 1:
            raise ValidationError("feature rows have inconsistent lengths")
    label_map = None
    if node_labels is not None:
        label_map = {}
        llines = _open_text(node_labels)
        for lineno, fields in _read_rows(llines, schema.delimiter):
            try:
                label_map[fields[0]] = int(fields[1])
            except (ValueError, IndexError):
                raise ParseError("node label must be an integer", lineno) from None

    tokens = srcs + dsts + list(feat_map or ()) + list(label_map or ())
    order = _node_order(tokens)
    index = {tok: i for i, tok in enumerate(order)}
    n = len(order)

    t_arr = np.asarray(times)
    if schema.time_bucket is not None:
        t_arr = np.floor((t_arr - t_arr.min()) / schema.time_bucket)
    t_arr = t_arr.astype(np.int64)
    uniq_t = np.unique(t_arr)
    meta: dict = {"node_ids": order, "warnings": []}
    if uniq_t[0] != 0 or uniq_t[-1] != len(uniq_t) - 1:
        msg = (
            f"timesteps {uniq_t[0]}..{uniq_t[-1]} are not contiguous from 0; "
            f"compacted to 0..{len(uniq_t) - 1}"
        )
        meta["warnings"].append(msg)
        warnings.warn(msg, stacklevel=2)
    compact = np.searchsorted(uniq_t, t_arr)

    src_idx = np.array([index[s] for s in srcs], dtype=np.int64)
    dst_idx = np.array([index[d] for d in dsts], dtype=np.int64)
    lab_arr = np.asarray(labels, dtype=np.int64) if label_col is not None else None
    if label_map is not None:
        num_classes = max(label_map.values()) + 1
    elif lab_arr is not None:
        num_classes = int(lab_arr.max()) + 1
    else:
        num_classes = 2

    d = len(next(iter(feat_map.values()))) if feat_map else schema.feature_dim
    snaps = []
    for t in range(len(uniq_t)):
        mask = compact == t
        edges = np.stack([src_idx[mask], dst_idx[mask]], axis=1)
        if lab_arr is not None:
            kind, lab = "edge", lab_arr[mask]
        elif label_map is not None:
            kind = "node"
            lab = np.full(n, -1, dtype=np.int64)
            for tok, v in label_map.items():
                lab[index[tok]] = v
        else:
            kind, lab = None, None
        proto = GraphSnapshot(t, n, edges, np.zeros((n, d)), lab, kind)
        active = np.zeros(n, dtype=bool)
        active[proto.edges.ravel()] = True
        X = np.zeros((n, d))
        if feat_map is not None:
            for tok, vec in feat_map.items():
                i = index[tok]
                if active[i]:
                    X[i] = vec
        else:
            deg = proto.degrees()
            rows = np.flatnonzero(active)
            X[rows, np.minimum(deg[rows], d - 1)] = 1.0
        proto.features = X
        snaps.append(proto)
    return DynamicGraphSequence(snaps, num_classes, "id", meta)


# --------------------------------------------------------------------------
# on-disk sequence format: one CSV per snapshot array plus manifest.json


def _save_array(path: Path, arr: np.ndarray, fmt: str):
    arr2 = arr.reshape(len(arr), -1) if arr.ndim > 1 else arr.reshape(-1, 1)
    with open(path, "w") as fh:
        if len(arr2):
            np.savetxt(fh, arr2, fmt=fmt, delimiter=",")


def _load_array(path: Path, dtype, cols: int) -> np.ndarray:
    text = path.read_text()
    if not text.strip():
        return np.zeros((0, cols), dtype=dtype)
    arr = np.loadtxt(io.StringIO(text), delimiter=",", dtype=dtype, ndmin=2)
    return arr.reshape(-1, cols)


def save_sequence(seq: DynamicGraphSequence, directory: Union[str, os.PathLike]) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in seq.snapshots:
        stem = f"snap_{s.timestep:05d}"
        _save_array(out / f"{stem}_edges.csv", s.edges, "%d")
        _save_array(out / f"{stem}_features.csv", s.features, "%.17g")
        entry = {
            "timestep": s.timestep,
            "edges": f"{stem}_edges.csv",
            "features": f"{stem}_features.csv",
            "label_kind": s.label_kind,
        }
        if s.labels is not None:
            _save_array(out / f"{stem}_labels.csv", s.labels, "%d")
            entry["labels"] = f"{stem}_labels.csv"
        entries.append(entry)
    manifest = {
        "format_version": FORMAT_VERSION,
        "num_nodes": seq.num_nodes,
        "feature_dim": seq.feature_dim,
        "num_classes": seq.num_classes,
        "provenance": seq.provenance,
        "meta": seq.meta,
        "snapshots": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    return out


def load_sequence(directory: Union[str, os.PathLike]) -> DynamicGraphSequence:
    src = Path(directory)
    manifest_path = src / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no sequence manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported sequence format {manifest.get('format_version')}")
    n, d = manifest["num_nodes"], manifest["feature_dim"]
    snaps = []
    for e in manifest["snapshots"]:
        edges = _load_array(src / e["edges"], np.int64, 2)
        feats = _load_array(src / e["features"], np.float64, d)
        labels = None
        if "labels" in e:
            labels = _load_array(src / e["labels"], np.int64, 1).ravel()
        snaps.append(GraphSnapshot(e["timestep"], n, edges, feats, labels, e["label_kind"]))
    return DynamicGraphSequence(
        snaps, manifest["num_classes"], manifest.get("provenance", "id"), manifest.get("meta", {})
    )


@dataclass(frozen=True)
class PropagatedWindow:
    """Encoder input: per-timestep propagation operators and feature matrices.

    ``target`` is the last snapshot of the source window; it supplies the
    labels and the node/edge targets scored by the task head.
    """

    start: int
    props: tuple
    features: tuple
    target: GraphSnapshot

    @property
    def length(self) -> int:
        return len(self.props)


def propagate(win: SnapshotWindow) -> PropagatedWindow:
    return PropagatedWindow(
        win.start,
        tuple(normalize_propagation(s) for s in win.snapshots),
        tuple(s.features for s in win.snapshots),
        win.last,
    )
