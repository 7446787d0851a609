"""Layers for the from-scratch convolutional engine.

Every layer binds flat views into the model's parameter and gradient
vectors: ``param_specs`` declares (attr, shape, kind) slots, where kind
"param" slots are optimized and "buffer" slots (batch-norm running
statistics) are updated in place during training forwards.  Reductions
accumulate in float64 and are cast back to the model dtype.
"""

from __future__ import annotations

import math

import numpy as np


class Layer:
    def param_specs(self) -> list[tuple[str, tuple[int, ...], str]]:
        return []

    def bind(self, views: dict, grad_views: dict) -> None:
        for attr, _, kind in self.param_specs():
            setattr(self, attr, views[attr])
            if kind == "param":
                setattr(self, "d_" + attr, grad_views[attr])

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _im2col3(x: np.ndarray) -> np.ndarray:
    # 3x3 patches, pad 1, stride 1: (n, c, h, w) -> (n, c*9, h*w)
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((n, c, 9, h * w), x.dtype)
    for di in range(3):
        for dj in range(3):
            cols[:, :, di * 3 + dj, :] = xp[:, :, di : di + h, dj : dj + w].reshape(
                n, c, h * w
            )
    return cols.reshape(n, c * 9, h * w)


def _col2im3(dcols: np.ndarray, n: int, c: int, h: int, w: int) -> np.ndarray:
    dc = dcols.reshape(n, c, 9, h * w)
    xp = np.zeros((n, c, h + 2, w + 2), dcols.dtype)
    for di in range(3):
        for dj in range(3):
            xp[:, :, di : di + h, dj : dj + w] += dc[:, :, di * 3 + dj, :].reshape(
                n, c, h, w
            )
    return xp[:, :, 1:-1, 1:-1]


class Conv3x3(Layer):
    """3x3 convolution, padding 1, stride 1, He-initialized."""

    def __init__(self, c_in: int, c_out: int):
        self.c_in = c_in
        self.c_out = c_out
        self._cache = None

    def param_specs(self):
        return [
            ("w", (self.c_out, self.c_in, 3, 3), "param"),
            ("b", (self.c_out,), "param"),
        ]

    def init_params(self, rng):
        std = math.sqrt(2.0 / (self.c_in * 9))
        self.w[...] = rng.normal(0.0, std, self.w.shape).astype(self.w.dtype)
        self.b[...] = 0

    def forward(self, x, training):
        n, c, h, w = x.shape
        cols = _im2col3(x)
        w2 = self.w.reshape(self.c_out, c * 9)
        out = np.matmul(w2, cols) + self.b[:, None]
        if training:
            self._cache = (cols, (n, c, h, w))
        return out.reshape(n, self.c_out, h, w)

    def backward(self, dy):
        cols, (n, c, h, w) = self._cache
        dyf = dy.reshape(n, self.c_out, h * w)
        dw = np.tensordot(dyf, cols, axes=([0, 2], [0, 2]))
        self.d_w += dw.reshape(self.w.shape)
        self.d_b += dyf.sum(axis=(0, 2), dtype=np.float64).astype(dy.dtype)
        w2 = self.w.reshape(self.c_out, c * 9)
        dcols = np.matmul(w2.T, dyf)
        self._cache = None
        return _col2im3(dcols, n, c, h, w)


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, training):
        mask = x > 0
        if training:
            self._mask = mask
        return np.where(mask, x, x.dtype.type(0))

    def backward(self, dy):
        out = dy * self._mask
        self._mask = None
        return out


class MaxPool2x2(Layer):
    """2x2 max pooling, stride 2; ties resolve to the first position."""

    def __init__(self):
        self._cache = None

    def forward(self, x, training):
        n, c, h, w = x.shape
        v = (
            x.reshape(n, c, h // 2, 2, w // 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h // 2, w // 2, 4)
        )
        idx = v.argmax(axis=-1)
        out = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
        if training:
            self._cache = (idx, (n, c, h, w))
        return out

    def backward(self, dy):
        idx, (n, c, h, w) = self._cache
        dv = np.zeros((n, c, h // 2, w // 2, 4), dy.dtype)
        np.put_along_axis(dv, idx[..., None], dy[..., None], axis=-1)
        dx = (
            dv.reshape(n, c, h // 2, w // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h, w)
        )
        self._cache = None
        return dx


class BatchNorm2d(Layer):
    """Per-channel batch normalization with biased variance throughout.

    Running statistics use the same biased estimator as the batch pass, so
    a single pass with momentum 1 makes inference reproduce training-mode
    outputs exactly.
    """

    def __init__(self, c: int, momentum: float = 0.1, eps: float = 1e-5):
        self.c = c
        self.momentum = momentum
        self.eps = eps
        self._cache = None

    def param_specs(self):
        return [
            ("gamma", (self.c,), "param"),
            ("beta", (self.c,), "param"),
            ("running_mean", (self.c,), "buffer"),
            ("running_var", (self.c,), "buffer"),
        ]

    def init_params(self, rng):
        self.gamma[...] = 1
        self.beta[...] = 0
        self.running_mean[...] = 0
        self.running_var[...] = 1

    def _affine(self, xhat):
        return self.gamma[None, :, None, None] * xhat + self.beta[None, :, None, None]

    def forward(self, x, training):
        if training:
            mu = x.mean(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
            xc = x - mu[None, :, None, None]
            var = (xc * xc).mean(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
            inv = 1.0 / np.sqrt(var + x.dtype.type(self.eps))
            xhat = xc * inv[None, :, None, None]
            self.running_mean[...] = (1 - self.momentum) * self.running_mean + self.momentum * mu
            self.running_var[...] = (1 - self.momentum) * self.running_var + self.momentum * var
            self._cache = (xhat, inv)
            return self._affine(xhat)
        inv = 1.0 / np.sqrt(self.running_var + np.asarray(self.eps, x.dtype))
        xhat = (x - self.running_mean[None, :, None, None]) * inv[None, :, None, None]
        return self._affine(xhat)

    def backward(self, dy):
        xhat, inv = self._cache
        n, c, h, w = dy.shape
        m = n * h * w
        self.d_beta += dy.sum(axis=(0, 2, 3), dtype=np.float64).astype(dy.dtype)
        self.d_gamma += (dy * xhat).sum(axis=(0, 2, 3), dtype=np.float64).astype(dy.dtype)
        dxhat = dy * self.gamma[None, :, None, None]
        s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True, dtype=np.float64).astype(dy.dtype)
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True, dtype=np.float64).astype(
            dy.dtype
        )
        dx = (inv[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)
        self._cache = None
        return dx


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, training):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Dropout(Layer):
    """Inverted dropout; active only in training with a bound generator."""

    def __init__(self, rate: float):
        self.rate = rate
        self.rng: np.random.Generator | None = None
        self._mask = None

    def forward(self, x, training):
        if not training or self.rate <= 0:
            self._mask = None
            return x
        if self.rng is None:
            raise RuntimeError("dropout used in training without a bound generator")
        keep = (self.rng.random(x.shape) >= self.rate).astype(x.dtype)
        self._mask = keep / x.dtype.type(1.0 - self.rate)
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        out = dy * self._mask
        self._mask = None
        return out


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int):
        self.n_in = n_in
        self.n_out = n_out
        self._x = None

    def param_specs(self):
        return [("w", (self.n_out, self.n_in), "param"), ("b", (self.n_out,), "param")]

    def init_params(self, rng):
        std = math.sqrt(2.0 / self.n_in)
        self.w[...] = rng.normal(0.0, std, self.w.shape).astype(self.w.dtype)
        self.b[...] = 0

    def forward(self, x, training):
        if training:
            self._x = x
        return x @ self.w.T + self.b

    def backward(self, dy):
        self.d_w += dy.T @ self._x
        self.d_b += dy.sum(axis=0, dtype=np.float64).astype(dy.dtype)
        self._x = None
        return dy @ self.w


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax (max subtraction), computed in float64."""
    z = np.asarray(logits, np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to the logits."""
    n = logits.shape[0]
    p = softmax(logits)
    picked = np.clip(p[np.arange(n), y], 1e-300, None)
    loss = float(-np.log(picked).mean())
    grad = p
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return loss, grad.astype(logits.dtype)
