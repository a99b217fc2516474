"""Synthetic dataset bundles for tests, demos and benchmarks.

`write_bundle` is the canonical writer for the bundle directory format and
is also what the toy generators use, so the on-disk layout is exercised by
every test that consumes a toy dataset.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .kernels import make_rng

BUNDLE_FILES = ("edges.tsv", "features.tsv", "labels.tsv", "splits.json")


def write_bundle(out_dir, *, num_nodes, num_features, num_classes, edges,
                 feature_triplets, labels, train_idx, val_idx, test_idx) -> Path:
    """Write a bundle directory; returns its path.

    edges: iterable of (u, v) with u < v, deduplicated by the caller.
    feature_triplets: iterable of (node, col, value).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    edges = sorted(set((int(u), int(v)) for u, v in edges))
    (out / "edges.tsv").write_text(
        "".join(f"{u}\t{v}\n" for u, v in edges))
    trips = sorted((int(n), int(c), float(val)) for n, c, val in feature_triplets)
    (out / "features.tsv").write_text(
        "".join(f"{n}\t{c}\t{_fmt(val)}\n" for n, c, val in trips))
    (out / "labels.tsv").write_text(
        "".join(f"{i}\t{int(l)}\n" for i, l in enumerate(labels)))
    (out / "splits.json").write_text(json.dumps({
        "train20": [int(i) for i in train_idx],
        "val": [int(i) for i in val_idx],
        "test": [int(i) for i in test_idx],
    }, indent=0) + "\n")
    checksums = {
        name: hashlib.sha256((out / name).read_bytes()).hexdigest()
        for name in BUNDLE_FILES
    }
    (out / "manifest.json").write_text(json.dumps({
        "num_nodes": int(num_nodes),
        "num_features": int(num_features),
        "num_classes": int(num_classes),
        "num_edges": len(edges),
        "checksums": checksums,
    }, indent=2, sort_keys=True) + "\n")
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def make_tiny_two_cluster(out_dir) -> Path:
    """8-node, 2-class bundle with perfectly informative one-hot features.

    Two 4-node clusters (each a path plus a chord) joined by one bridge.
    One labeled training node per class, one validation node per class,
    the remaining four nodes are the test set.
    """
    edges = [(0, 1), (1, 2), (2, 3), (0, 2),
             (4, 5), (5, 6), (6, 7), (4, 6),
             (3, 4)]
    labels = [0, 0, 0, 0, 1, 1, 1, 1]
    feats = [(i, labels[i], 1.0) for i in range(8)]
    return write_bundle(
        out_dir, num_nodes=8, num_features=2, num_classes=2,
        edges=edges, feature_triplets=feats, labels=labels,
        train_idx=[0, 4], val_idx=[1, 5], test_idx=[2, 3, 6, 7])


def make_sbm_bundle(out_dir, *, num_classes=3, nodes_per_class=40, feat_dim=12,
                    intra_p=0.2, inter_p=0.01, flip_frac=0.1, seed=0) -> Path:
    """Stochastic block model bundle with noisy class-indicator features.

    Every class gets a 20-node canonical training block (interleaved by
    class so "first k per class" subsets are meaningful), 10 validation
    nodes per class, and the rest as test. `flip_frac` of the nodes get a
    wrong indicator column, so the task is informative but not trivial.
    """
    rng = make_rng(seed)
    n = num_classes * nodes_per_class
    labels = np.repeat(np.arange(num_classes), nodes_per_class)
    perm = rng.permutation(n)
    labels = labels[perm]

    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            p = intra_p if labels[i] == labels[j] else inter_p
            if rng.random() < p:
                edges.add((i, j))
    # keep the graph free of isolated nodes so observed degrees are positive
    for i in range(n):
        if not any(i in e for e in edges):
            j = int(rng.integers(0, n - 1))
            j = j + 1 if j >= i else j
            edges.add((min(i, j), max(i, j)))

    feats = []
    for i in range(n):
        shown = labels[i]
        if rng.random() < flip_frac:
            shown = int(rng.integers(0, num_classes))
        feats.append((i, shown, 1.0))
        for _ in range(2):
            feats.append((i, num_classes + int(rng.integers(0, feat_dim - num_classes)),
                          round(float(rng.random()), 6)))
    # deduplicate (node, col) pairs keeping the first value
    seen = {}
    for node, col, val in feats:
        seen.setdefault((node, col), val)
    feats = [(node, col, val) for (node, col), val in sorted(seen.items())]

    by_class = {c: [int(i) for i in np.flatnonzero(labels == c)] for c in range(num_classes)}
    train, val, test = [], [], []
    for k in range(20):
        for c in range(num_classes):
            train.append(by_class[c][k])
    for c in range(num_classes):
        val.extend(by_class[c][20:30])
        test.extend(by_class[c][30:])
    return write_bundle(
        out_dir, num_nodes=n, num_features=feat_dim, num_classes=num_classes,
        edges=sorted(edges), feature_triplets=feats, labels=labels,
        train_idx=train, val_idx=sorted(val), test_idx=sorted(test))


def two_clique_bridge_graph():
    """Two 4-cliques joined by a single bridge; returns (num_nodes, edges)."""
    edges = []
    for base in (0, 4):
        for i in range(4):
            for j in range(i + 1, 4):
                edges.append((base + i, base + j))
    edges.append((3, 4))
    return 8, edges
