"""Forward and backward passes for every layer kind, NHWC float64.

Each layer caches what its backward pass needs during ``forward`` and
writes parameter gradients into ``self.grads`` during ``backward``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64
BN_EPS = 1e-7
BN_MOMENTUM = 0.9


class Layer:
    params: dict[str, np.ndarray]
    # persistent non-trainable state (BN running statistics)
    buffers: dict[str, np.ndarray]

    def __init__(self):
        self.params = {}
        self.buffers = {}
        self.grads = {}
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _he_uniform(rng, fan_in: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(DTYPE)


def _im2col(xp: np.ndarray, k: int) -> np.ndarray:
    # (N, H+2p, W+2p, C) -> (N*H*W, k*k*C), window-major then channel
    n, _, _, c = xp.shape
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # N, H, W, C, k, k
    h, w = win.shape[1], win.shape[2]
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, k * k * c)


class Conv2D(Layer):
    """Stride-1 cross-correlation with zero "same" padding, optional ReLU."""

    def __init__(self, in_channels: int, filters: int, kernel: int, rng=None, relu: bool = True):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng()
        self.kernel, self.relu = kernel, relu
        fan_in = kernel * kernel * in_channels
        self.params["W"] = _he_uniform(rng, fan_in, (kernel, kernel, in_channels, filters))
        self.params["b"] = np.zeros(filters, dtype=DTYPE)

    def forward(self, x, train=False, rng=None):
        k = self.kernel
        p = k // 2
        n, h, w, _ = x.shape
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        cols = _im2col(xp, k)
        W = self.params["W"]
        out = (cols @ W.reshape(-1, W.shape[-1])).reshape(n, h, w, -1) + self.params["b"]
        if self.relu:
            out = np.maximum(out, 0.0)
        self._cache = (cols, x.shape, out if self.relu else None)
        return out

    def backward(self, dout):
        cols, xshape, out = self._cache
        if out is not None:
            dout = dout * (out > 0)
        W = self.params["W"]
        k, _, cin, cout = W.shape
        d2 = dout.reshape(-1, cout)
        self.grads["W"] = (cols.T @ d2).reshape(W.shape)
        self.grads["b"] = d2.sum(axis=0)
        # input gradient: full correlation of dout with the flipped kernel
        p = k // 2
        dp = np.pad(dout, ((0, 0), (p, p), (p, p), (0, 0)))
        dcols = _im2col(dp, k)
        wflip = W[::-1, ::-1].transpose(0, 1, 3, 2).reshape(k * k * cout, cin)
        return (dcols @ wflip).reshape(xshape)


class _Pool(Layer):
    def __init__(self, pool: int):
        super().__init__()
        self.pool = pool

    def _windows(self, x):
        p = self.pool
        n, h, w, c = x.shape
        ho, wo = h // p, w // p
        crop = x[:, :ho * p, :wo * p, :]
        # N, ho, wo, C, p*p
        return crop.reshape(n, ho, p, wo, p, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, p * p)

    def _scatter(self, dwin, xshape):
        p = self.pool
        n, h, w, c = xshape
        ho, wo = h // p, w // p
        dx = np.zeros(xshape, dtype=DTYPE)
        block = dwin.reshape(n, ho, wo, c, p, p).transpose(0, 1, 4, 2, 5, 3)
        dx[:, :ho * p, :wo * p, :] = block.reshape(n, ho * p, wo * p, c)
        return dx


class MaxPool(_Pool):
    def forward(self, x, train=False, rng=None):
        win = self._windows(x)
        arg = win.argmax(axis=-1)
        self._cache = (arg, x.shape, win.shape)
        return np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        arg, xshape, wshape = self._cache
        dwin = np.zeros(wshape, dtype=DTYPE)
        np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
        return self._scatter(dwin, xshape)


class AvgPool(_Pool):
    def forward(self, x, train=False, rng=None):
        win = self._windows(x)
        self._cache = (x.shape, win.shape)
        return win.mean(axis=-1)

    def backward(self, dout):
        xshape, wshape = self._cache
        dwin = np.broadcast_to(dout[..., None] / wshape[-1], wshape)
        return self._scatter(dwin, xshape)


class BatchNorm(Layer):
    """Per-channel normalization over every axis but the last."""

    def __init__(self, channels: int):
        super().__init__()
        self.params["gamma"] = np.ones(channels, dtype=DTYPE)
        self.params["beta"] = np.zeros(channels, dtype=DTYPE)
        self.buffers["mean"] = np.zeros(channels, dtype=DTYPE)
        self.buffers["var"] = np.ones(channels, dtype=DTYPE)

    def forward(self, x, train=False, rng=None):
        axes = tuple(range(x.ndim - 1))
        if train:
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = BN_MOMENTUM
            self.buffers["mean"] = m * self.buffers["mean"] + (1 - m) * mu
            self.buffers["var"] = m * self.buffers["var"] + (1 - m) * var
        else:
            mu, var = self.buffers["mean"], self.buffers["var"]
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mu) * inv
        self._cache = (xhat, inv, axes, train)
        return xhat * self.params["gamma"] + self.params["beta"]

    def backward(self, dout):
        xhat, inv, axes, train = self._cache
        gamma = self.params["gamma"]
        self.grads["gamma"] = (dout * xhat).sum(axis=axes)
        self.grads["beta"] = dout.sum(axis=axes)
        dxhat = dout * gamma
        if not train:
            return dxhat * inv
        m = dout.size // dout.shape[-1]
        return inv / m * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    def __init__(self, rate: float):
        super().__init__()
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train:
            self._cache = None
            return x
        rng = rng if rng is not None else np.random.default_rng()
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) < keep) / keep
        self._cache = mask
        return x * mask

    def backward(self, dout):
        return dout if self._cache is None else dout * self._cache


class Flatten(Layer):
    def forward(self, x, train=False, rng=None):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._cache)


class Dense(Layer):
    def __init__(self, n_in: int, units: int, rng=None, relu: bool = True):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng()
        self.relu = relu
        self.params["W"] = _he_uniform(rng, n_in, (n_in, units))
        self.params["b"] = np.zeros(units, dtype=DTYPE)

    def forward(self, x, train=False, rng=None):
        out = x @ self.params["W"] + self.params["b"]
        if self.relu:
            out = np.maximum(out, 0.0)
        self._cache = (x, out if self.relu else None)
        return out

    def backward(self, dout):
        x, out = self._cache
        if out is not None:
            dout = dout * (out > 0)
        self.grads["W"] = x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["W"].T


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=DTYPE)
    labels = np.asarray(labels, dtype=np.int64)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")
    n, k = logits.shape
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must be {n} ids in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), labels]))
    grad = np.exp(z - logsum[:, None])
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
