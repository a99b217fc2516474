"""Deterministic numeric kernels shared by the GCN and the graph auto-encoder.

Everything runs in double precision on plain numpy arrays. Randomness always
flows through an explicit counter-based generator so that the same seed
produces the same stream on every platform; training loops built on these
kernels are therefore bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class NonFiniteError(RuntimeError):
    """Raised when a kernel encounters NaN or infinity."""


@dataclass(frozen=True)
class SeededRng:
    """64-bit seed plus a stream index; wraps a Philox counter-based generator."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream: int) -> "SeededRng":
        # children of stream s live at s*256 + k so stage streams never collide
        return SeededRng(self.seed, self.stream * 256 + int(stream) + 1)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return SeededRng(seed, stream).generator()


def spmm(a, b: np.ndarray) -> np.ndarray:
    """Sparse-dense product a @ b with a interpreted as an N x N operator.

    `a` may be a scipy sparse matrix or any object exposing ``to_csr()``
    (SparseGraph, NormalizedAdjacency).
    """
    mat = a.to_csr() if hasattr(a, "to_csr") else a
    if mat.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {mat.shape} @ {b.shape}")
    return mat @ b


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row softmax, log-sum-exp stabilized so huge logits stay finite."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray):
    """Mean cross-entropy over the masked rows.

    Parameters
    ----------
    logits : (N, C) array
    labels : (N,) integer class ids
    mask : index array selecting at least one row

    Returns
    -------
    (loss, grad) where grad has the same shape as logits and is zero on
    unmasked rows.
    """
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("empty mask")
    probs = softmax_rows(logits)
    picked = probs[mask, labels[mask]]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    grad = np.zeros_like(logits)
    grad[mask] = probs[mask]
    grad[mask, labels[mask]] -= 1.0
    grad[mask] /= mask.size
    return loss, grad


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask with entries in {0, 1/(1-rate)}; expectation 1."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class AdamState:
    """First/second moment accumulators for a list of parameter arrays."""

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr: float = 0.01, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
                   m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState):
    """One Adam update; mutates params and state in place and returns them."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient in adam_step")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def grad_check(f, params, eps: float = 1e-5) -> float:
    """Max relative error between f's analytic gradients and central differences.

    ``f(params) -> (loss, grads)`` must be deterministic; params are perturbed
    in place and restored. Relative error uses max(1, |num|, |ana|) in the
    denominator so near-zero gradients are compared absolutely.
    """
    _, grads = f(params)
    worst = 0.0
    for p, g in zip(params, grads):
        flat_p = p.reshape(-1)
        flat_g = np.asarray(g).reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            lp, _ = f(params)
            flat_p[i] = orig - eps
            lm, _ = f(params)
            flat_p[i] = orig
            num = (lp - lm) / (2.0 * eps)
            ana = flat_g[i]
            if not (np.isfinite(num) and np.isfinite(ana)):
                raise NonFiniteError("non-finite value in grad_check")
            rel = abs(num - ana) / max(1.0, abs(num), abs(ana))
            worst = max(worst, rel)
    return worst


def dropout_sparse(x: sp.csr_array, rate: float, rng: np.random.Generator) -> sp.csr_array:
    """Dropout over the stored entries of a sparse matrix (zeros stay zero)."""
    if rate == 0.0:
        return x
    mask = dropout_mask(x.data.shape, rate, rng)
    out = x.copy()
    out.data = out.data * mask
    return out
