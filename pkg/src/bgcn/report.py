"""Accuracy aggregation, degree-stratified error analysis and adjacency
heatmap exports.

The stratified table splits the test set at the median observed degree
(ties fall into the low group) and cross-tabulates the two classifiers'
per-node correctness; any coarser reading of "which method fixes whose
errors" can be derived from the four joint outcomes.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import LabelInfo, SparseGraph

OUTCOMES = ("both_correct", "gcnn_only", "bgcn_only", "both_wrong")


@dataclass(frozen=True)
class RunSummary:
    accuracies: tuple
    mean: float
    std: float

    def formatted(self) -> str:
        """Percent string in the usual mean+-std table style, e.g. 76.0+-1.1."""
        return f"{100.0 * self.mean:.1f}±{100.0 * self.std:.1f}"


@dataclass(frozen=True)
class DegreeStratifiedTable:
    median_degree: float
    low: dict
    high: dict

    def total(self) -> int:
        return sum(self.low.values()) + sum(self.high.values())


def accuracy(pred: np.ndarray, labels: LabelInfo, split: str = "test") -> float:
    idx = getattr(labels, f"{split}_idx")
    if idx.size == 0:
        raise ValueError(f"empty {split} split")
    return float(np.mean(pred[idx] == labels.labels[idx]))


def aggregate(accuracies) -> RunSummary:
    accs = [float(a) for a in accuracies]
    if len(accs) < 2:
        raise ValueError("need at least two runs to aggregate")
    if any(not 0.0 <= a <= 1.0 for a in accs):
        raise ValueError("accuracy outside [0, 1]")
    mean = float(np.mean(accs))
    std = float(np.std(accs, ddof=1))
    return RunSummary(tuple(accs), mean, std)


def degree_stratify(pred_gcnn, pred_bgcn, labels: LabelInfo,
                    g_obs: SparseGraph) -> DegreeStratifiedTable:
    test = labels.test_idx
    deg = g_obs.structural_degrees()[test]
    median = float(np.median(deg))
    truth = labels.labels[test]
    ok_g = pred_gcnn[test] == truth
    ok_b = pred_bgcn[test] == truth
    groups = {"low": deg <= median, "high": deg > median}
    counts = {}
    for name, mask in groups.items():
        counts[name] = {
            "both_correct": int(np.sum(mask & ok_g & ok_b)),
            "gcnn_only": int(np.sum(mask & ok_g & ~ok_b)),
            "bgcn_only": int(np.sum(mask & ~ok_g & ok_b)),
            "both_wrong": int(np.sum(mask & ~ok_g & ~ok_b)),
        }
    return DegreeStratifiedTable(median, counts["low"], counts["high"])


def within_class_weight_fraction(g: SparseGraph, labels: np.ndarray) -> float:
    """Share of total edge weight joining same-label endpoints."""
    rows = np.repeat(np.arange(g.num_nodes), np.diff(g.row_ptr))
    total = float(g.weights.sum())
    if total == 0.0:
        return 0.0
    same = labels[rows] == labels[g.col_idx]
    return float(g.weights[same].sum()) / total


def class_block_stats(g: SparseGraph, labels: np.ndarray) -> dict:
    """Mean within-class and between-class pair weight (zero pairs included)."""
    n = g.num_nodes
    rows = np.repeat(np.arange(n), np.diff(g.row_ptr))
    same_mask = labels[rows] == labels[g.col_idx]
    within_sum = float(g.weights[same_mask].sum())
    between_sum = float(g.weights[~same_mask].sum())
    counts = np.bincount(labels)
    within_pairs = int(np.sum(counts * (counts - 1)))
    between_pairs = n * (n - 1) - within_pairs
    return {
        "within_mean": within_sum / within_pairs if within_pairs else 0.0,
        "between_mean": between_sum / between_pairs if between_pairs else 0.0,
        "within_fraction": within_class_weight_fraction(g, labels),
    }


def export_adjacency_heatmap(g: SparseGraph, labels: np.ndarray, image_path,
                             ordering_path=None, max_dim: int = 4096) -> dict:
    """Write a grayscale PGM of the adjacency with nodes sorted by class.

    Intensity is log-scaled weight, clipped to three decades below the
    maximum. Graphs larger than max_dim are block-downsampled (max pooling).
    Returns the class block statistics so the picture's message is checkable
    from the exported numbers.
    """
    n = g.num_nodes
    order = np.lexsort((np.arange(n), labels))
    rank = np.argsort(order)

    dense = np.zeros((n, n))
    rows = np.repeat(np.arange(n), np.diff(g.row_ptr))
    dense[rank[rows], rank[g.col_idx]] = g.weights

    if n > max_dim:
        step = int(np.ceil(n / max_dim))
        pad = (-n) % step
        if pad:
            dense = np.pad(dense, ((0, pad), (0, pad)))
        m = dense.shape[0] // step
        dense = dense.reshape(m, step, m, step).max(axis=(1, 3))

    wmax = dense.max()
    if wmax > 0:
        lo = wmax * 1e-3
        scaled = (np.log(np.maximum(dense, lo)) - np.log(lo)) / (np.log(wmax) - np.log(lo))
        img = np.where(dense > 0, np.clip(scaled, 0.0, 1.0) * 215 + 40, 0.0)
    else:
        img = dense
    img = img.astype(np.uint8)

    image_path = Path(image_path)
    with image_path.open("wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())
    if ordering_path is not None:
        Path(ordering_path).write_text("".join(f"{int(i)}\n" for i in order))
    return class_block_stats(g, labels)


def write_stratified_csv(table: DegreeStratifiedTable, path) -> None:
    lines = ["group,outcome,count"]
    for group, counts in (("low", table.low), ("high", table.high)):
        for outcome in OUTCOMES:
            lines.append(f"{group},{outcome},{counts[outcome]}")
    Path(path).write_text("\n".join(lines) + "\n")
