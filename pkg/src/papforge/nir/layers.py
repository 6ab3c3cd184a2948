"""Numpy building blocks with hand-written backward passes.

Gate layout of the GRU follows the common ``[reset, update, new]`` packing:

    r = sigmoid(x Wx_r + bx_r + h Wh_r + bh_r)
    z = sigmoid(x Wx_z + bx_z + h Wh_z + bh_z)
    n = tanh(x Wx_n + bx_n + r * (h Wh_n + bh_n))
    h' = (1 - z) * n + z * h
"""

from __future__ import annotations

import numpy as np

LEAKY_SLOPE = 0.01


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 + 0.5 * np.tanh(0.5 * x)


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def leaky_relu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, LEAKY_SLOPE).astype(x.dtype)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def gru_init(rng: np.random.Generator, n_in: int, hidden: int, dtype=np.float32) -> dict:
    bound = 1.0 / np.sqrt(hidden)
    u = lambda *shape: rng.uniform(-bound, bound, size=shape).astype(dtype)  # noqa: E731
    return {"Wx": u(n_in, 3 * hidden), "Wh": u(hidden, 3 * hidden),
            "bx": u(3 * hidden), "bh": u(3 * hidden)}


def gru_step(x: np.ndarray, h: np.ndarray, p: dict) -> np.ndarray:
    """Single step without caching, used by greedy decoding."""
    H = h.shape[1]
    gx = x @ p["Wx"] + p["bx"]
    gh = h @ p["Wh"] + p["bh"]
    r = sigmoid(gx[:, :H] + gh[:, :H])
    z = sigmoid(gx[:, H:2 * H] + gh[:, H:2 * H])
    n = np.tanh(gx[:, 2 * H:] + r * gh[:, 2 * H:])
    return (1.0 - z) * n + z * h


def gru_forward(X: np.ndarray, h0: np.ndarray, p: dict):
    """Run one GRU layer over a (B, L, in) sequence.

    Returns the (B, L, H) hidden sequence and a cache for :func:`gru_backward`.
    """
    B, L, _ = X.shape
    H = h0.shape[1]
    # time-major buffers keep every per-step slice contiguous
    GX = (X.transpose(1, 0, 2).reshape(L * B, -1) @ p["Wx"] + p["bx"]).reshape(L, B, 3 * H)
    Hs = np.empty((L, B, H), dtype=h0.dtype)
    R = np.empty_like(Hs)
    Z = np.empty_like(Hs)
    N = np.empty_like(Hs)
    GHn = np.empty_like(Hs)
    h = h0
    Wh, bh = p["Wh"], p["bh"]
    for t in range(L):
        gh = h @ Wh + bh
        gx = GX[t]
        r = sigmoid(gx[:, :H] + gh[:, :H])
        z = sigmoid(gx[:, H:2 * H] + gh[:, H:2 * H])
        ghn = gh[:, 2 * H:]
        n = np.tanh(gx[:, 2 * H:] + r * ghn)
        h = n + z * (h - n)
        R[t], Z[t], N[t], GHn[t], Hs[t] = r, z, n, ghn, h
    return Hs.transpose(1, 0, 2), (X, h0, Hs, R, Z, N, GHn)


def gru_backward(dHs: np.ndarray, cache, p: dict):
    """Backprop through :func:`gru_forward`.

    ``dHs`` is the loss gradient w.r.t. every emitted hidden state. Returns
    ``(dX, dh0, grads)`` with ``grads`` keyed like the parameter dict.
    """
    X, h0, Hs, R, Z, N, GHn = cache
    L, B, H = Hs.shape
    Wh = p["Wh"]
    dHs = dHs.transpose(1, 0, 2)
    dGX = np.empty((L, B, 3 * H), dtype=Hs.dtype)
    dGHn = np.empty((L, B, H), dtype=Hs.dtype)
    dh = np.zeros((B, H), dtype=Hs.dtype)
    for t in range(L - 1, -1, -1):
        dh = dh + dHs[t]
        h_prev = Hs[t - 1] if t > 0 else h0
        r, z, n, ghn = R[t], Z[t], N[t], GHn[t]
        dn_pre = dh * (1.0 - z) * (1.0 - n * n)
        dz_pre = dh * (h_prev - n) * z * (1.0 - z)
        dr_pre = dn_pre * ghn * r * (1.0 - r)
        g = dGX[t]
        g[:, :H] = dr_pre
        g[:, H:2 * H] = dz_pre
        g[:, 2 * H:] = dn_pre
        dGHn[t] = dn_pre * r
        # the recurrent pre-activation gradient differs from g only in the n block
        dh = dh * z + g[:, :2 * H] @ Wh[:, :2 * H].T + dGHn[t] @ Wh[:, 2 * H:].T
    Hprev = np.concatenate([h0[None], Hs[:-1]], axis=0).reshape(L * B, H)
    dGX2 = dGX.reshape(L * B, 3 * H)
    dGH2 = np.concatenate([dGX2[:, :2 * H], dGHn.reshape(L * B, H)], axis=1)
    Xt = X.transpose(1, 0, 2).reshape(L * B, -1)
    grads = {
        "Wx": Xt.T @ dGX2,
        "bx": dGX2.sum(axis=0),
        "Wh": Hprev.T @ dGH2,
        "bh": dGH2.sum(axis=0),
    }
    dX = (dGX2 @ p["Wx"].T).reshape(L, B, -1).transpose(1, 0, 2)
    return dX, dh, grads
