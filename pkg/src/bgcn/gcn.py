"""Two-layer graph convolutional classifier with MC-dropout sampling.

Forward pass: logits = A_hat . relu(A_hat . X . W0) . W1  with dropout on
the inputs of both layers while training. Gradients are hand-derived (the
network is small enough that autodiff would be ceremony), which keeps every
training run bit-deterministic for a given seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .kernels import (AdamState, NonFiniteError, adam_step, dropout_mask,
                      glorot_init, make_rng, softmax_rows, softmax_xent, spmm)


@dataclass
class TrainConfig:
    """Training recipe; defaults follow the standard citation-network setup."""

    hidden: int = 16
    dropout: float = 0.5
    weight_decay: float = 5e-4  # applies to the first layer only
    lr: float = 0.01
    max_epochs: int = 200
    patience: int = 10

    def validate(self) -> "TrainConfig":
        if self.hidden <= 0 or self.lr <= 0 or self.max_epochs <= 0 or self.patience <= 0:
            raise ValueError("hidden, lr, max_epochs and patience must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        return self


@dataclass
class GcnParams:
    w0: np.ndarray  # d x hidden
    w1: np.ndarray  # hidden x C

    def copy(self) -> "GcnParams":
        return GcnParams(self.w0.copy(), self.w1.copy())

    def as_list(self):
        return [self.w0, self.w1]


@dataclass
class TrainResult:
    params: GcnParams
    val_losses: list = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0


class TrainingError(RuntimeError):
    pass


def init_params(num_features: int, hidden: int, num_classes: int,
                rng: np.random.Generator) -> GcnParams:
    return GcnParams(glorot_init(num_features, hidden, rng),
                     glorot_init(hidden, num_classes, rng))


def _drop_sparse(x: sp.csr_array, mask_data):
    if mask_data is None:
        return x
    out = x.copy()
    out.data = out.data * mask_data
    return out


def _forward(params: GcnParams, a_hat, x: sp.csr_array, mask_x=None, mask_h=None):
    """Returns (logits, cache) with dropout applied via explicit masks."""
    xd = _drop_sparse(x, mask_x)
    pre = spmm(a_hat, xd @ params.w0)
    hidden = np.maximum(pre, 0.0)
    hd = hidden * mask_h if mask_h is not None else hidden
    logits = spmm(a_hat, hd @ params.w1)
    return logits, (xd, pre, hd)


def gcn_forward(params: GcnParams, a_hat, x, dropout: float = 0.0,
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Logits for every node; stochastic when a dropout rng is given."""
    xmat = x.matrix if hasattr(x, "matrix") else x
    if rng is None or dropout == 0.0:
        logits, _ = _forward(params, a_hat, xmat)
    else:
        mask_x = dropout_mask(xmat.data.shape, dropout, rng)
        mask_h = dropout_mask((xmat.shape[0], params.w0.shape[1]), dropout, rng)
        logits, _ = _forward(params, a_hat, xmat, mask_x, mask_h)
    return logits


def loss_and_grads(params: GcnParams, a_hat, x: sp.csr_array, labels, mask,
                   weight_decay: float, mask_x=None, mask_h=None):
    """Masked cross-entropy plus 0.5*wd*||W0||^2 and its exact gradients."""
    logits, (xd, pre, hd) = _forward(params, a_hat, x, mask_x, mask_h)
    ce, dlogits = softmax_xent(logits, labels, mask)
    loss = ce + 0.5 * weight_decay * float(np.sum(params.w0 * params.w0))
    dmid = spmm(a_hat, dlogits)          # A_hat is symmetric
    dw1 = hd.T @ dmid
    dhd = dmid @ params.w1.T
    dh = dhd * mask_h if mask_h is not None else dhd
    dpre = dh * (pre > 0)
    dp = spmm(a_hat, dpre)
    dw0 = (xd.T @ dp) + weight_decay * params.w0
    return loss, [np.asarray(dw0), dw1]


def _eval_loss(params, a_hat, x, labels, idx):
    logits, _ = _forward(params, a_hat, x)
    loss, _ = softmax_xent(logits, labels, idx)
    return loss


def train_gcn(a_hat, features, label_info, cfg: TrainConfig, seed_rng) -> TrainResult:
    """Train with early stopping on validation loss; returns the best params.

    `seed_rng` is a numpy Generator (or an int seed). When the validation
    split is empty the training loss is monitored instead.
    """
    cfg.validate()
    rng = make_rng(seed_rng) if isinstance(seed_rng, (int, np.integer)) else seed_rng
    x = features.matrix if hasattr(features, "matrix") else features
    labels = label_info.labels
    train_idx = np.asarray(label_info.train_idx)
    if train_idx.size == 0:
        raise TrainingError("empty training split")
    monitor_idx = np.asarray(label_info.val_idx)
    if monitor_idx.size == 0:
        monitor_idx = train_idx

    params = init_params(x.shape[1], cfg.hidden, label_info.num_classes, rng)
    state = AdamState.for_params(params.as_list(), lr=cfg.lr)

    best = params.copy()
    best_loss = np.inf
    best_epoch = 0
    since_best = 0
    val_losses = []
    for epoch in range(cfg.max_epochs):
        if cfg.dropout > 0:
            mask_x = dropout_mask(x.data.shape, cfg.dropout, rng)
            mask_h = dropout_mask((x.shape[0], cfg.hidden), cfg.dropout, rng)
        else:
            mask_x = mask_h = None
        loss, grads = loss_and_grads(params, a_hat, x, labels, train_idx,
                                     cfg.weight_decay, mask_x, mask_h)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        try:
            adam_step(params.as_list(), grads, state)
        except NonFiniteError as e:
            raise TrainingError(f"non-finite gradient at epoch {epoch}") from e

        val_loss = _eval_loss(params, a_hat, x, labels, monitor_idx)
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        val_losses.append(val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best = params.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    return TrainResult(best, val_losses, best_epoch, len(val_losses))


def save_params(params: GcnParams, path) -> None:
    """Flat float64 binary with a one-line JSON shape header."""
    import json

    header = json.dumps({"w0": list(params.w0.shape), "w1": list(params.w1.shape)})
    with open(path, "wb") as fh:
        fh.write(header.encode() + b"\n")
        fh.write(np.ascontiguousarray(params.w0, dtype=np.float64).tobytes())
        fh.write(np.ascontiguousarray(params.w1, dtype=np.float64).tobytes())


def load_params(path) -> GcnParams:
    import json

    with open(path, "rb") as fh:
        shapes = json.loads(fh.readline().decode())
        raw = fh.read()
    n0 = int(np.prod(shapes["w0"]))
    w0 = np.frombuffer(raw[:8 * n0]).reshape(shapes["w0"]).copy()
    w1 = np.frombuffer(raw[8 * n0:]).reshape(shapes["w1"]).copy()
    return GcnParams(w0, w1)


def predict_labels(params: GcnParams, a_hat, features) -> np.ndarray:
    """Deterministic argmax prediction; ties go to the lowest class id."""
    logits = gcn_forward(params, a_hat, features)
    return np.argmax(logits, axis=1)


def mc_dropout_predict(params: GcnParams, a_hat, features, num_samples: int,
                       rng: np.random.Generator, dropout: float = 0.5) -> np.ndarray:
    """Average softmax over `num_samples` dropout-active forward passes."""
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    xmat = features.matrix if hasattr(features, "matrix") else features
    acc = np.zeros((xmat.shape[0], params.w1.shape[1]))
    for _ in range(num_samples):
        logits = gcn_forward(params, a_hat, xmat, dropout=dropout, rng=rng)
        acc += softmax_rows(logits)
    return acc / num_samples
