"""Pairwise node distances combining embedding geometry and label agreement.

The full distance is z1 + delta * z2 where z1 is the squared embedding
distance, z2 the neighborhood label-disagreement fraction and delta the
ratio of their maxima. z2 has a closed form: with P the per-node
neighborhood label distribution (row i = label histogram of the
self-inclusive neighbor set, normalized), the disagreement fraction is
1 - (P P^T)_ij, which keeps the computation linear in the number of
classes instead of quadratic in neighborhood sizes.

Dense matrices are used up to a size limit; above it the distance is only
evaluated on a support set (observed edges plus exact k-nearest-neighbor
pairs in embedding space) so the downstream solver stays near-linear.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SparseGraph


@dataclass(frozen=True)
class RestrictedDistance:
    """Distance values on a fixed symmetric support, stored as i < j pairs."""

    num_nodes: int
    i_idx: np.ndarray
    j_idx: np.ndarray
    values: np.ndarray

    def support_size(self) -> int:
        return self.i_idx.size


def z1(embeddings: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance matrix; symmetric with zero diagonal."""
    if not np.all(np.isfinite(embeddings)):
        raise ValueError("non-finite embeddings")
    sq = np.sum(embeddings * embeddings, axis=1)
    gram = embeddings @ embeddings.T
    out = sq[:, None] + sq[None, :] - 2.0 * gram
    out = 0.5 * (out + out.T)
    np.maximum(out, 0.0, out=out)
    np.fill_diagonal(out, 0.0)
    return out


def neighborhood_label_profile(nbhds, labels, num_classes: int) -> np.ndarray:
    """Row i = normalized label histogram of the self-inclusive neighborhood."""
    n = len(nbhds)
    prof = np.zeros((n, num_classes))
    for i, nb in enumerate(nbhds):
        counts = np.bincount(labels[nb], minlength=num_classes)
        prof[i] = counts / nb.size
    return prof


def z2(nbhds, predicted_labels, num_classes: int) -> np.ndarray:
    """Fraction of neighbor pairs with disagreeing labels, in [0, 1].

    The diagonal is forced to zero: the learner pins the adjacency diagonal
    to zero anyway, so self-distances are irrelevant.
    """
    prof = neighborhood_label_profile(nbhds, predicted_labels, num_classes)
    out = 1.0 - prof @ prof.T
    out = 0.5 * (out + out.T)
    np.clip(out, 0.0, 1.0, out=out)
    np.fill_diagonal(out, 0.0)
    return out


def delta(z1_mat, z2_mat) -> float:
    """max z1 / max z2, or 0 when every predicted label agrees (max z2 = 0)."""
    m2 = float(np.max(z2_mat)) if np.size(z2_mat) else 0.0
    if m2 == 0.0:
        return 0.0
    return float(np.max(z1_mat)) / m2


def combine(z1_mat: np.ndarray, z2_mat: np.ndarray, scale: float) -> np.ndarray:
    if np.shape(z1_mat) != np.shape(z2_mat):
        raise ValueError("shape mismatch")
    return z1_mat + scale * z2_mat


def dense_distance(embeddings, nbhds, predicted_labels, num_classes: int) -> np.ndarray:
    a = z1(embeddings)
    b = z2(nbhds, predicted_labels, num_classes)
    return combine(a, b, delta(a, b))


def export_tsv(z, path) -> None:
    """Dump distance values as "i<TAB>j<TAB>value" triplets (i < j only)."""
    from pathlib import Path

    if isinstance(z, RestrictedDistance):
        i_idx, j_idx, vals = z.i_idx, z.j_idx, z.values
    else:
        z = np.asarray(z)
        i_idx, j_idx = np.triu_indices(z.shape[0], k=1)
        vals = z[i_idx, j_idx]
    with Path(path).open("w") as fh:
        for i, j, val in zip(i_idx, j_idx, vals):
            fh.write(f"{int(i)}\t{int(j)}\t{repr(float(val))}\n")


# --- support-restricted path -------------------------------------------------

def knn_pairs(embeddings: np.ndarray, k: int, block: int = 512):
    """Exact k-nearest-neighbor pairs (squared Euclidean), computed blockwise.

    Returns (i_idx, j_idx) with i < j, deduplicated, plus the global maximum
    squared distance encountered (needed for the delta rescaling).
    """
    n = embeddings.shape[0]
    k = min(k, n - 1)
    sq = np.sum(embeddings * embeddings, axis=1)
    rows = []
    cols = []
    max_d = 0.0
    for start in range(0, n, block):
        stop = min(start + block, n)
        d = sq[start:stop, None] + sq[None, :] - 2.0 * (embeddings[start:stop] @ embeddings.T)
        np.maximum(d, 0.0, out=d)
        d[np.arange(start, stop) - start, np.arange(start, stop)] = np.inf
        max_d = max(max_d, float(d[np.isfinite(d)].max(initial=0.0)))
        nearest = np.argpartition(d, kth=k - 1, axis=1)[:, :k]
        rows.append(np.repeat(np.arange(start, stop), k))
        cols.append(nearest.reshape(-1))
    i_idx = np.concatenate(rows)
    j_idx = np.concatenate(cols)
    lo = np.minimum(i_idx, j_idx)
    hi = np.maximum(i_idx, j_idx)
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return pairs[:, 0], pairs[:, 1], max_d


def _pair_z2_max(prof: np.ndarray, block: int = 1024) -> float:
    """Global max of 1 - P P^T over off-diagonal pairs, blockwise."""
    n = prof.shape[0]
    best = 0.0
    for start in range(0, n, block):
        stop = min(start + block, n)
        agree = prof[start:stop] @ prof.T
        agree[np.arange(start, stop) - start, np.arange(start, stop)] = np.inf
        finite = agree[np.isfinite(agree)]
        if finite.size:
            best = max(best, float(np.clip(1.0 - finite.min(), 0.0, 1.0)))
    return best


def restrict_support(embeddings, nbhds, predicted_labels, num_classes: int,
                     k: int, observed: SparseGraph) -> RestrictedDistance:
    """Distance on observed edges plus embedding k-NN pairs.

    delta still uses the exact global maxima of z1 and z2 over all pairs,
    not just the support, matching the dense definition.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ki, kj, max_z1 = knn_pairs(embeddings, k)
    oi, oj, _ = observed.upper_pairs()
    lo = np.concatenate([ki, oi])
    hi = np.concatenate([kj, oj])
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    i_idx, j_idx = pairs[:, 0], pairs[:, 1]

    diff = embeddings[i_idx] - embeddings[j_idx]
    vz1 = np.maximum(np.einsum("ik,ik->i", diff, diff), 0.0)
    prof = neighborhood_label_profile(nbhds, predicted_labels, num_classes)
    vz2 = np.clip(1.0 - np.einsum("ik,ik->i", prof[i_idx], prof[j_idx]), 0.0, 1.0)
    max_z2 = _pair_z2_max(prof)
    scale = 0.0 if max_z2 == 0.0 else max_z1 / max_z2
    return RestrictedDistance(observed.num_nodes, i_idx, j_idx, vz1 + scale * vz2)
