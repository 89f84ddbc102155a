"""Dense layers with explicit backward passes.

Everything is plain numpy on ``(..., tokens, D)`` arrays with row-vector
convention: a linear map ``W`` of shape ``(out, in)`` acts as ``x @ W.T``.
Each ``*_fwd`` returns ``(output, cache)`` and the matching ``*_bwd`` takes
the upstream gradient and that cache.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import NumericError

RMS_EPS = 1e-6


@dataclass(frozen=True)
class AttnWeights:
    """Single-head attention projections, each ``(D, D)``."""

    wq: NDArray
    wk: NDArray
    wv: NDArray
    wo: NDArray

    NAMES = ("wq", "wk", "wv", "wo")

    def as_dict(self) -> dict[str, NDArray]:
        return {n: getattr(self, n) for n in self.NAMES}

    def copy(self) -> AttnWeights:
        return AttnWeights(*(np.array(getattr(self, n), copy=True) for n in self.NAMES))

    def astype(self, dtype) -> AttnWeights:
        return AttnWeights(*(np.asarray(getattr(self, n), dtype=dtype) for n in self.NAMES))


def softmax(S: NDArray) -> NDArray:
    """Row softmax over the last axis, shifted by the row max."""
    Z = np.exp(S - S.max(axis=-1, keepdims=True))
    P = Z / Z.sum(axis=-1, keepdims=True)
    if not np.all(np.isfinite(P)):
        raise NumericError("softmax produced non-finite values")
    return P


def attention_fwd(Xq: NDArray, Xkv: NDArray, w: AttnWeights):
    """Softmax attention of query tokens ``Xq`` over key/value tokens ``Xkv``.

    Shapes ``(B, nq, D)`` and ``(B, nk, D)``; scale ``1/sqrt(D)``.
    """
    D = Xq.shape[-1]
    Q = Xq @ w.wq.T
    K = Xkv @ w.wk.T
    V = Xkv @ w.wv.T
    P = softmax(Q @ np.swapaxes(K, -1, -2) / math.sqrt(D))
    O = P @ V
    Y = O @ w.wo.T
    return Y, (Xq, Xkv, Q, K, V, P, O, w)


def _wgrad(dout: NDArray, inp: NDArray) -> NDArray:
    # sum over every leading axis of dout^T @ inp
    return dout.reshape(-1, dout.shape[-1]).T @ inp.reshape(-1, inp.shape[-1])


def attention_bwd(dY: NDArray, cache):
    """Returns ``(dXq, dXkv, grads)`` with ``grads`` keyed like :class:`AttnWeights`."""
    Xq, Xkv, Q, K, V, P, O, w = cache
    D = Xq.shape[-1]
    dO = dY @ w.wo
    dP = dO @ np.swapaxes(V, -1, -2)
    dV = np.swapaxes(P, -1, -2) @ dO
    dS = P * (dP - np.sum(dP * P, axis=-1, keepdims=True)) / math.sqrt(D)
    dQ = dS @ K
    dK = np.swapaxes(dS, -1, -2) @ Q
    grads = {
        "wq": _wgrad(dQ, Xq),
        "wk": _wgrad(dK, Xkv),
        "wv": _wgrad(dV, Xkv),
        "wo": _wgrad(dY, O),
    }
    return dQ @ w.wq, dK @ w.wk + dV @ w.wv, grads


def rmsnorm_fwd(X: NDArray, scale: NDArray):
    r = np.sqrt(np.mean(X * X, axis=-1, keepdims=True) + RMS_EPS)
    return X / r * scale, (X, r, scale)


def rmsnorm_bwd(dY: NDArray, cache) -> NDArray:
    X, r, scale = cache
    D = X.shape[-1]
    g = dY * scale
    return g / r - X * np.sum(g * X, axis=-1, keepdims=True) / (D * r**3)


def silu(x: NDArray) -> NDArray:
    return x / (1.0 + np.exp(-x))


def ffn_fwd(X: NDArray, w1: NDArray, b1: NDArray, w2: NDArray, b2: NDArray):
    U = X @ w1.T + b1
    A = silu(U)
    return A @ w2.T + b2, (X, U, A, w1, w2)


def ffn_bwd(dY: NDArray, cache):
    X, U, A, w1, w2 = cache
    sig = 1.0 / (1.0 + np.exp(-U))
    dA = dY @ w2
    dU = dA * sig * (1.0 + U * (1.0 - sig))
    grads = {"w1": _wgrad(dU, X), "b1": dU.reshape(-1, dU.shape[-1]).sum(0), "w2": _wgrad(dY, A), "b2": dY.reshape(-1, dY.shape[-1]).sum(0)}
    return dU @ w1, grads


def timestep_embedding(t: float, D: int, max_period: float = 10000.0) -> NDArray:
    """Sinusoidal embedding of a (possibly fractional) timestep."""
    half = D // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / max(half, 1))
    args = float(t) * freqs
    emb = np.concatenate([np.cos(args), np.sin(args)])
    if D % 2:
        emb = np.concatenate([emb, [0.0]])
    return emb
