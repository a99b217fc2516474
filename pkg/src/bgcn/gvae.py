"""Variational graph auto-encoder producing node embeddings.

Encoder: one shared relu graph-convolution layer feeding separate mean and
log-std heads; decoder: inner products reconstructing the adjacency (with
self-loops) through a sigmoid. The posterior means serve as the embedding
vectors downstream.

For graphs above `dense_limit` nodes the dense N x N reconstruction is
replaced, each epoch, by all positive entries plus an equal number of
uniformly sampled pairs (memory constraint); that path uses unweighted
cross-entropy since the two classes are balanced by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SparseGraph
from .kernels import AdamState, adam_step, glorot_init, make_rng, spmm


@dataclass
class GvaeConfig:
    hidden: int = 32
    latent: int = 16
    lr: float = 0.01
    epochs: int = 200
    dense_limit: int = 5000


@dataclass
class GvaeParams:
    w0: np.ndarray      # d x hidden
    wmu: np.ndarray     # hidden x latent
    wsigma: np.ndarray  # hidden x latent

    def as_list(self):
        return [self.w0, self.wmu, self.wsigma]

    def copy(self):
        return GvaeParams(self.w0.copy(), self.wmu.copy(), self.wsigma.copy())


@dataclass
class GvaeTrainResult:
    params: GvaeParams
    losses: list = field(default_factory=list)


def init_params(num_features: int, cfg: GvaeConfig, rng) -> GvaeParams:
    return GvaeParams(glorot_init(num_features, cfg.hidden, rng),
                      glorot_init(cfg.hidden, cfg.latent, rng),
                      glorot_init(cfg.hidden, cfg.latent, rng))


def _encode_cache(params: GvaeParams, a_hat, x):
    xmat = x.matrix if hasattr(x, "matrix") else x
    pre = spmm(a_hat, xmat @ params.w0)
    hidden = np.maximum(pre, 0.0)
    mu = spmm(a_hat, hidden @ params.wmu)
    logstd = spmm(a_hat, hidden @ params.wsigma)
    return xmat, pre, hidden, mu, logstd


def gvae_encode(params: GvaeParams, a_hat, x, rng: np.random.Generator | None = None):
    """Returns (mu, logstd, sample); sample == mu when no rng is given."""
    _, _, _, mu, logstd = _encode_cache(params, a_hat, x)
    if rng is None:
        return mu, logstd, mu.copy()
    eps = rng.standard_normal(mu.shape)
    return mu, logstd, mu + np.exp(logstd) * eps


def node_embeddings(params: GvaeParams, a_hat, x) -> np.ndarray:
    """Deterministic embeddings: the posterior means."""
    _, _, _, mu, _ = _encode_cache(params, a_hat, x)
    return mu


def _softplus(s):
    return np.logaddexp(0.0, s)


def _sigmoid(s):
    out = np.empty_like(s)
    np.exp(-np.logaddexp(0.0, -s), out=out)
    return out


def kl_standard_normal(mu: np.ndarray, logstd: np.ndarray) -> float:
    """KL(N(mu, diag exp(2 logstd)) || N(0, I)), summed over nodes and dims."""
    return float(0.5 * np.sum(mu * mu + np.exp(2.0 * logstd) - 1.0 - 2.0 * logstd))


def gvae_loss(mu: np.ndarray, logstd: np.ndarray, sample: np.ndarray,
              target: SparseGraph) -> float:
    """Weighted reconstruction cross-entropy plus KL(q || N(0,I)) / N."""
    n = target.num_nodes
    y = target.to_dense()
    np.fill_diagonal(y, 1.0)
    y = (y > 0).astype(float)
    pos = y.sum()
    if pos == 0:
        raise ValueError("target has no positive entries")
    pos_weight = (n * n - pos) / pos
    s = sample @ sample.T
    bce = pos_weight * y * _softplus(-s) + (1.0 - y) * _softplus(s)
    return float(bce.mean() + kl_standard_normal(mu, logstd) / n)


def loss_and_grads_dense(params: GvaeParams, a_hat, x, y_dense: np.ndarray,
                         pos_weight: float, eps_noise: np.ndarray | None):
    """Loss and exact parameter gradients with the sampling noise frozen.

    The positive entries are sparse, so the weighted cross-entropy is taken
    as one full softplus pass plus a correction on the positive set; likewise
    the gradient is sigmoid(s) everywhere with a positive-entry adjustment.
    """
    xmat, pre, hidden, mu, logstd = _encode_cache(params, a_hat, x)
    n = mu.shape[0]
    if eps_noise is None:
        sample = mu
    else:
        sample = mu + np.exp(logstd) * eps_noise
    s = sample @ sample.T
    pi, pj = np.nonzero(y_dense)
    s_pos = s[pi, pj]
    sp_all = _softplus(s)
    rec = (sp_all.sum() - sp_all[pi, pj].sum()
           + pos_weight * _softplus(-s_pos).sum()) / (n * n)
    loss = float(rec + kl_standard_normal(mu, logstd) / n)

    ds = _sigmoid(s)
    sig_pos = ds[pi, pj]
    ds[pi, pj] = pos_weight * (sig_pos - 1.0)
    ds /= n * n
    dsample = (ds + ds.T) @ sample
    dmu = dsample + mu / n
    dlogstd = (np.exp(2.0 * logstd) - 1.0) / n
    if eps_noise is not None:
        dlogstd = dlogstd + dsample * eps_noise * np.exp(logstd)

    amu = spmm(a_hat, dmu)
    asig = spmm(a_hat, dlogstd)
    dwmu = hidden.T @ amu
    dwsigma = hidden.T @ asig
    dhidden = amu @ params.wmu.T + asig @ params.wsigma.T
    dpre = dhidden * (pre > 0)
    dw0 = np.asarray(xmat.T @ spmm(a_hat, dpre))
    return loss, [dw0, dwmu, dwsigma]


def _positive_pairs(target: SparseGraph):
    n = target.num_nodes
    rows = np.repeat(np.arange(n), np.diff(target.row_ptr))
    return (np.concatenate([rows, np.arange(n)]),
            np.concatenate([target.col_idx, np.arange(n)]))


def loss_and_grads_sampled(params: GvaeParams, a_hat, x, pos_i, pos_j,
                           rng: np.random.Generator, eps_noise=None):
    """Subsampled reconstruction: positives plus an equal negative sample."""
    xmat, pre, hidden, mu, logstd = _encode_cache(params, a_hat, x)
    n = mu.shape[0]
    sample = mu if eps_noise is None else mu + np.exp(logstd) * eps_noise

    neg_i = rng.integers(0, n, size=pos_i.size)
    neg_j = rng.integers(0, n, size=pos_i.size)
    ii = np.concatenate([pos_i, neg_i])
    jj = np.concatenate([pos_j, neg_j])
    yy = np.concatenate([np.ones(pos_i.size), np.zeros(pos_i.size)])

    s = np.einsum("ik,ik->i", sample[ii], sample[jj])
    loss = float(np.mean(yy * _softplus(-s) + (1.0 - yy) * _softplus(s))
                 + kl_standard_normal(mu, logstd) / n)

    ds = (_sigmoid(s) - yy) / s.size
    dsample = np.zeros_like(sample)
    np.add.at(dsample, ii, ds[:, None] * sample[jj])
    np.add.at(dsample, jj, ds[:, None] * sample[ii])
    dmu = dsample + mu / n
    dlogstd = (np.exp(2.0 * logstd) - 1.0) / n
    if eps_noise is not None:
        dlogstd = dlogstd + dsample * eps_noise * np.exp(logstd)

    amu = spmm(a_hat, dmu)
    asig = spmm(a_hat, dlogstd)
    dwmu = hidden.T @ amu
    dwsigma = hidden.T @ asig
    dhidden = amu @ params.wmu.T + asig @ params.wsigma.T
    dpre = dhidden * (pre > 0)
    dw0 = np.asarray(xmat.T @ spmm(a_hat, dpre))
    return loss, [dw0, dwmu, dwsigma]


def train_gvae(a_hat, x, target: SparseGraph, cfg: GvaeConfig, seed_rng) -> GvaeTrainResult:
    """Fixed epoch budget; raises on a non-finite loss."""
    rng = make_rng(seed_rng) if isinstance(seed_rng, (int, np.integer)) else seed_rng
    xmat = x.matrix if hasattr(x, "matrix") else x
    n = target.num_nodes
    params = init_params(xmat.shape[1], cfg, rng)
    state = AdamState.for_params(params.as_list(), lr=cfg.lr)

    dense = n <= cfg.dense_limit
    if dense:
        y = target.to_dense()
        np.fill_diagonal(y, 1.0)
        y = (y > 0).astype(float)
        pos = y.sum()
        if pos == 0:
            raise ValueError("target has no positive entries")
        pos_weight = (n * n - pos) / pos
    else:
        pos_i, pos_j = _positive_pairs(target)

    losses = []
    for epoch in range(cfg.epochs):
        eps_noise = rng.standard_normal((n, cfg.latent))
        if dense:
            loss, grads = loss_and_grads_dense(params, a_hat, xmat, y, pos_weight, eps_noise)
        else:
            loss, grads = loss_and_grads_sampled(params, a_hat, xmat, pos_i, pos_j,
                                                 rng, eps_noise)
        if not np.isfinite(loss):
            raise RuntimeError(f"non-finite auto-encoder loss at epoch {epoch}")
        adam_step(params.as_list(), grads, state)
        losses.append(loss)
    return GvaeTrainResult(params, losses)
