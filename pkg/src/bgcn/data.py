"""Dataset bundles: graph, feature and label containers plus loading.

A bundle directory holds five files:

    manifest.json   {"num_nodes", "num_features", "num_classes", "num_edges",
                     "checksums": {filename: sha256-hex}}  (checksums optional)
    edges.tsv       one "u<TAB>v" line per undirected edge, u < v, 0-based
    features.tsv    "node<TAB>col<TAB>value" triplets, value >= 0
    labels.tsv      "node<TAB>class", exactly one line per node
    splits.json     {"train20": [...], "val": [...], "test": [...]}

All containers are immutable after construction and safe to share across
threads.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class BundleError(ValueError):
    """Malformed or inconsistent dataset bundle."""


@dataclass(frozen=True)
class SparseGraph:
    """Symmetric non-negative weighted adjacency in CSR form, zero diagonal."""

    num_nodes: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_edges(cls, num_nodes: int, u, v, w=None) -> "SparseGraph":
        """Build from undirected edge endpoints; symmetrizes and deduplicates.

        Duplicate pairs must carry equal weights; self-loops are rejected.
        """
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if w is None:
            w = np.ones(u.shape[0])
        w = np.asarray(w, dtype=np.float64)
        if u.shape != v.shape or u.shape != w.shape:
            raise BundleError("edge arrays have mismatched lengths")
        if u.size and (u.min() < 0 or v.min() < 0 or max(u.max(), v.max()) >= num_nodes):
            raise BundleError("edge endpoint out of range")
        if np.any(u == v):
            raise BundleError("self-loop in edge list")
        if np.any(w < 0):
            raise BundleError("negative edge weight")

        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        vals = np.concatenate([w, w])
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            keep = np.ones(rows.size, dtype=bool)
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if np.any(dup & (vals[1:] != vals[:-1])):
                raise BundleError("duplicate edge with conflicting weight")
            keep[1:] = ~dup
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        row_ptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=num_nodes), out=row_ptr[1:])
        return cls(num_nodes, row_ptr, cols, vals)

    def to_csr(self) -> sp.csr_array:
        return sp.csr_array((self.weights, self.col_idx, self.row_ptr),
                            shape=(self.num_nodes, self.num_nodes))

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def degrees(self) -> np.ndarray:
        """Weighted degree per node."""
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self.row_ptr))
        return np.bincount(rows, weights=self.weights, minlength=self.num_nodes)

    def structural_degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def edge_count(self) -> int:
        """Number of undirected edges."""
        return self.col_idx.size // 2

    def upper_pairs(self):
        """(i, j, w) arrays over stored entries with i < j."""
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self.row_ptr))
        keep = rows < self.col_idx
        return rows[keep], self.col_idx[keep], self.weights[keep]

    def row(self, i: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]

    def validate(self) -> "SparseGraph":
        n = self.num_nodes
        if len(self.row_ptr) != n + 1 or self.row_ptr[0] != 0:
            raise BundleError("bad row_ptr")
        if np.any(np.diff(self.row_ptr) < 0) or self.row_ptr[-1] != self.col_idx.size:
            raise BundleError("row_ptr not monotone or inconsistent")
        if self.col_idx.size != self.weights.size:
            raise BundleError("col/weight length mismatch")
        rows = np.repeat(np.arange(n), np.diff(self.row_ptr))
        if np.any(rows == self.col_idx):
            raise BundleError("nonzero diagonal")
        if self.col_idx.size and (self.col_idx.min() < 0 or self.col_idx.max() >= n):
            raise BundleError("column index out of range")
        for i in range(n):
            seg = self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]
            if np.any(np.diff(seg) <= 0):
                raise BundleError(f"row {i} not strictly sorted")
        if np.any(self.weights < 0):
            raise BundleError("negative weight")
        a = self.to_csr()
        if (a != a.T).nnz != 0:
            raise BundleError("not symmetric")
        return self


@dataclass(frozen=True)
class NodeFeatures:
    """N x d sparse non-negative feature matrix."""

    matrix: sp.csr_array

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def row_normalized(self) -> "NodeFeatures":
        """Scale each row to unit sum; all-zero rows are left untouched."""
        sums = np.asarray(self.matrix.sum(axis=1)).ravel()
        scale = np.where(sums > 0, 1.0 / np.where(sums > 0, sums, 1.0), 1.0)
        return NodeFeatures(sp.csr_array(self.matrix.multiply(scale[:, None])))


@dataclass(frozen=True)
class LabelInfo:
    """Per-node class ids plus ordered train/validation/test index lists."""

    labels: np.ndarray
    num_classes: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    def validate(self, num_nodes: int) -> "LabelInfo":
        if self.labels.shape != (num_nodes,):
            raise BundleError(f"labels file has {self.labels.size} rows, expected {num_nodes}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise BundleError("label id out of range")
        if self.train_idx.size == 0:
            raise BundleError("empty training split")
        all_idx = np.concatenate([self.train_idx, self.val_idx, self.test_idx])
        if all_idx.size and (all_idx.min() < 0 or all_idx.max() >= num_nodes):
            raise BundleError("split index out of range")
        if len(np.unique(all_idx)) != all_idx.size:
            raise BundleError("train/val/test splits overlap")
        return self


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Self-loop renormalized operator, same CSR layout with diagonal stored."""

    num_nodes: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    weights: np.ndarray

    def to_csr(self) -> sp.csr_array:
        return sp.csr_array((self.weights, self.col_idx, self.row_ptr),
                            shape=(self.num_nodes, self.num_nodes))


def normalize_adjacency(g: SparseGraph) -> NormalizedAdjacency:
    """Self-loop renormalization: D^{-1/2} (A + I) D^{-1/2}, D = diag((A+I)1).

    Stored (i, j) and (j, i) values are bit-identical because the scale
    product s_i * s_j commutes exactly in IEEE arithmetic.
    """
    n = g.num_nodes
    rows = np.concatenate([np.repeat(np.arange(n), np.diff(g.row_ptr)), np.arange(n)])
    cols = np.concatenate([g.col_idx, np.arange(n)])
    vals = np.concatenate([g.weights, np.ones(n)])
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    deg = np.bincount(rows, weights=vals, minlength=n)
    scale = 1.0 / np.sqrt(deg)
    vals = (scale[rows] * scale[cols]) * vals
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=row_ptr[1:])
    return NormalizedAdjacency(n, row_ptr, cols, vals)


def neighborhoods(g: SparseGraph) -> list[np.ndarray]:
    """Self-inclusive neighbor sets, one sorted index array per node."""
    out = []
    for i in range(g.num_nodes):
        nbrs = g.row(i)
        pos = np.searchsorted(nbrs, i)
        out.append(np.insert(nbrs, pos, i))
    return out


def subset_train_labels(info: LabelInfo, per_class: int) -> LabelInfo:
    """Keep the first `per_class` training indices of each class, in order."""
    if per_class not in (5, 10, 20):
        raise ValueError(f"per_class must be 5, 10 or 20, got {per_class}")
    seen = np.zeros(info.num_classes, dtype=np.int64)
    keep = np.zeros(info.train_idx.size, dtype=bool)
    for pos, node in enumerate(info.train_idx):
        c = info.labels[node]
        if seen[c] < per_class:
            keep[pos] = True
            seen[c] += 1
    short = np.flatnonzero(seen < per_class)
    if short.size:
        raise ValueError(
            f"class {short[0]} has only {seen[short[0]]} training labels, need {per_class}")
    return replace(info, train_idx=info.train_idx[keep])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require(path: Path) -> Path:
    if not path.is_file():
        raise BundleError(f"missing bundle file: {path}")
    return path


def load_bundle(path) -> tuple[SparseGraph, NodeFeatures, LabelInfo]:
    """Load and validate a bundle directory."""
    root = Path(path)
    if not root.is_dir():
        raise BundleError(f"bundle directory not found: {root}")
    manifest = json.loads(_require(root / "manifest.json").read_text())
    try:
        n = int(manifest["num_nodes"])
        d = int(manifest["num_features"])
        c = int(manifest["num_classes"])
        num_edges = int(manifest["num_edges"])
    except KeyError as e:
        raise BundleError(f"manifest missing key {e}") from e

    for name, digest in manifest.get("checksums", {}).items():
        actual = _sha256(_require(root / name))
        if actual != digest:
            raise BundleError(f"checksum mismatch for {name}")

    u, v = _read_int_columns(_require(root / "edges.tsv"), 2)
    graph = SparseGraph.from_edges(n, u, v).validate()
    if graph.edge_count() != num_edges:
        raise BundleError(f"manifest says {num_edges} edges, file has {graph.edge_count()}")

    fr, fc, fv = _read_feature_triplets(_require(root / "features.tsv"))
    if fr.size and (fr.max() >= n or fc.max() >= d):
        raise BundleError("feature index out of range")
    if np.any(fv < 0):
        raise BundleError("negative feature value")
    features = NodeFeatures(sp.csr_array((fv, (fr, fc)), shape=(n, d)))

    ln, lc = _read_int_columns(_require(root / "labels.tsv"), 2)
    if ln.size != n or not np.array_equal(np.sort(ln), np.arange(n)):
        raise BundleError(f"labels file has {ln.size} rows, manifest says N={n}")
    labels = np.zeros(n, dtype=np.int64)
    labels[ln] = lc
    if lc.size and lc.max() >= c:
        raise BundleError(f"label id {lc.max()} >= num_classes {c}")

    splits = json.loads(_require(root / "splits.json").read_text())
    info = LabelInfo(
        labels=labels,
        num_classes=c,
        train_idx=np.asarray(splits["train20"], dtype=np.int64),
        val_idx=np.asarray(splits["val"], dtype=np.int64),
        test_idx=np.asarray(splits["test"], dtype=np.int64),
    ).validate(n)
    return graph, features, info


def _read_int_columns(path: Path, ncols: int):
    cols = [[] for _ in range(ncols)]
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != ncols:
                raise BundleError(f"{path.name}:{lineno}: expected {ncols} columns")
            for i, p in enumerate(parts):
                cols[i].append(int(p))
    return tuple(np.asarray(c, dtype=np.int64) for c in cols)


def _read_feature_triplets(path: Path):
    rows, cols, vals = [], [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise BundleError(f"{path.name}:{lineno}: expected 3 columns")
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
    return (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
            np.asarray(vals, dtype=np.float64))
