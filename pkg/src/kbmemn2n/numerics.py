"""Small dense kernel: softmax, cross entropy, Adam and a finite-difference oracle.

Everything is float64. Tensors are plain numpy arrays.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

LOG_CLAMP = 1e-12


def softmax(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty distribution")
    z = np.exp(v - v.max())
    return z / z.sum()


def cross_entropy(probs, target: int) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= target < probs.shape[0]:
        raise IndexError(f"target {target} out of range for {probs.shape[0]} classes")
    return float(-np.log(max(probs[target], LOG_CLAMP)))


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the entries where ``mask`` is true.

    Rows with no valid entry come back as all zeros.
    """
    if logits.shape[-1] == 0:
        return np.zeros_like(logits)
    neg = np.where(mask, logits, -np.inf)
    top = neg.max(axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    z = np.where(mask, np.exp(neg - top), 0.0)
    total = z.sum(axis=-1, keepdims=True)
    return np.divide(z, total, out=np.zeros_like(z), where=total > 0)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, like: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(like, dtype=np.float64), np.zeros_like(like, dtype=np.float64), 0)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float = 0.001,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update. Returns ``(new_param, new_state)``; inputs are untouched."""
    if not (param.shape == grad.shape == state.m.shape == state.v.shape):
        raise ValueError(
            f"shape mismatch: param {param.shape}, grad {grad.shape}, "
            f"moments {state.m.shape}/{state.v.shape}")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * (grad * grad)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_param, AdamState(m, v, t)


def finite_diff_grad(loss_fn: Callable[[np.ndarray], float], params, h: float = 1e-4) -> np.ndarray:
    """Central differences, one coordinate at a time."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(params, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn(x)
        flat[i] = orig - h
        down = loss_fn(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def _stream_key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream keys must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def make_rng(seed: int, *stream) -> np.random.Generator:
    """Independent generator for ``(seed, *stream)``.

    Stream parts may be ints or strings; the same key always yields the same
    sequence, and distinct keys yield statistically independent ones.
    """
    key = [_stream_key(seed)] + [_stream_key(p) for p in stream]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
