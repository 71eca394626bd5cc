"""Layer specs with explicit forward and backward passes (channels-last, float64).

Every layer is an immutable description. ``forward`` returns the output plus
a cache consumed by ``backward``; neither touches the parameter arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, ClassVar

import numpy as np

from ..errors import ShapeError

Params = dict[str, np.ndarray]
INIT_STD = 0.02


def same_padding(n: int, k: int, s: int) -> tuple[int, int, int]:
    """(out, pad_before, pad_after) for 'same' padding; out = ceil(n / s)."""
    out = -(-n // s)
    total = max((out - 1) * s + k - n, 0)
    return out, total // 2, total - total // 2


class Layer:
    kind: ClassVar[str] = "layer"
    trainable: ClassVar[tuple[str, ...]] = ()

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def init(self, rng: np.random.Generator, in_shape: tuple[int, ...]) -> Params:
        return {}

    def forward(self, p: Params, x: np.ndarray, train: bool) -> tuple[np.ndarray, Any]:
        raise NotImplementedError

    def backward(self, p: Params, cache: Any, dy: np.ndarray) -> tuple[Params, np.ndarray]:
        raise NotImplementedError

    def pattern(self, cache: Any) -> np.ndarray | None:
        """Piecewise-linear branch choices, used to spot kinks in finite differences."""
        return None


def _taps(k: int):
    return [(a, b) for a in range(k) for b in range(k)]


@dataclass(frozen=True)
class Conv(Layer):
    """Same-padded 2-D convolution, kernel ``W`` shaped (k, k, in_ch, out_ch)."""

    in_ch: int
    out_ch: int
    kernel: int = 3
    stride: int = 1

    kind = "Conv"
    trainable = ("W", "b")

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[2] != self.in_ch:
            raise ShapeError(f"Conv expects (H, W, {self.in_ch}), got {in_shape}")
        h, w, _ = in_shape
        ho = same_padding(h, self.kernel, self.stride)[0]
        wo = same_padding(w, self.kernel, self.stride)[0]
        return (ho, wo, self.out_ch)

    def init(self, rng, in_shape):
        k = self.kernel
        return {"W": rng.normal(0.0, INIT_STD, (k, k, self.in_ch, self.out_ch)),
                "b": np.zeros(self.out_ch)}

    def forward(self, p, x, train):
        n, h, w, c = x.shape
        k, s, o = self.kernel, self.stride, self.out_ch
        ho, pt, pb = same_padding(h, k, s)
        wo, pl, pr = same_padding(w, k, s)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        geom = (x.shape, xp.shape, ho, wo, pt, pl)
        if o < c:
            # multiply first, then sum the k*k shifted tap planes (cheaper for narrow outputs)
            z = (xp.reshape(-1, c) @ self._wall(p)).reshape(xp.shape[:3] + (k * k, o))
            y = np.zeros((n, ho, wo, o))
            for t, (a, b) in enumerate(_taps(k)):
                y += z[:, a:a + s * (ho - 1) + 1:s, b:b + s * (wo - 1) + 1:s, t, :]
            return y + p["b"], (xp, geom)
        cols = np.stack([xp[:, a:a + s * (ho - 1) + 1:s, b:b + s * (wo - 1) + 1:s, :] for a, b in _taps(k)], axis=3)
        cols = cols.reshape(n * ho * wo, k * k * c)
        y = cols @ p["W"].reshape(k * k * c, o) + p["b"]
        return y.reshape(n, ho, wo, o), (cols, geom)

    def _wall(self, p):
        k, c, o = self.kernel, self.in_ch, self.out_ch
        return p["W"].transpose(2, 0, 1, 3).reshape(c, k * k * o)

    def backward(self, p, cache, dy):
        first, ((n, h, w, c), pshape, ho, wo, pt, pl) = cache
        k, s, o = self.kernel, self.stride, self.out_ch
        if o < c:
            xp = first
            dz = np.zeros(pshape[:3] + (k * k, o))
            for t, (a, b) in enumerate(_taps(k)):
                dz[:, a:a + s * (ho - 1) + 1:s, b:b + s * (wo - 1) + 1:s, t, :] = dy
            dz = dz.reshape(-1, k * k * o)
            dwall = (xp.reshape(-1, c).T @ dz).reshape(c, k, k, o).transpose(1, 2, 0, 3)
            grads = {"W": np.ascontiguousarray(dwall), "b": dy.sum(axis=(0, 1, 2))}
            dxp = (dz @ self._wall(p).T).reshape(pshape)
            return grads, dxp[:, pt:pt + h, pl:pl + w, :]
        cols = first
        dym = dy.reshape(-1, o)
        wmat = p["W"].reshape(k * k * c, o)
        grads = {"W": (cols.T @ dym).reshape(p["W"].shape), "b": dym.sum(axis=0)}
        dcols = (dym @ wmat.T).reshape(n, ho, wo, k * k, c)
        dxp = np.zeros(pshape)
        for t, (a, b) in enumerate(_taps(k)):
            dxp[:, a:a + s * (ho - 1) + 1:s, b:b + s * (wo - 1) + 1:s, :] += dcols[:, :, :, t, :]
        return grads, dxp[:, pt:pt + h, pl:pl + w, :]


@dataclass(frozen=True)
class TConv(Layer):
    """Fractionally strided convolution.

    Equivalent to inserting ``up_stride - 1`` zeros after every input sample
    along both spatial axes and applying a stride-1 same-padded :class:`Conv`
    with kernel ``W``; the zero products are skipped by scattering each input
    pixel straight into the outputs it reaches.
    """

    in_ch: int
    out_ch: int
    kernel: int = 3
    up_stride: int = 2

    kind = "TConv"
    trainable = ("W", "b")

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[2] != self.in_ch:
            raise ShapeError(f"TConv expects (H, W, {self.in_ch}), got {in_shape}")
        h, w, _ = in_shape
        return (h * self.up_stride, w * self.up_stride, self.out_ch)

    def init(self, rng, in_shape):
        k = self.kernel
        return {"W": rng.normal(0.0, INIT_STD, (k, k, self.in_ch, self.out_ch)),
                "b": np.zeros(self.out_ch)}

    def _offsets(self):
        # input m lands on output s*m + pad - a for tap a; +k shifts into a padded buffer
        k = self.kernel
        pad = (k - 1) // 2
        return [(a, pad - a + k) for a in range(k)]

    def _wt(self, p):
        k, c, o = self.kernel, self.in_ch, self.out_ch
        return p["W"].transpose(2, 0, 1, 3).reshape(c, k * k * o)

    def forward(self, p, x, train):
        n, h, w, c = x.shape
        k, s, o = self.kernel, self.up_stride, self.out_ch
        xm = x.reshape(-1, c)
        contrib = (xm @ self._wt(p)).reshape(n, h, w, k, k, o)
        out = np.zeros((n, s * h + 2 * k, s * w + 2 * k, o))
        for a, ya in self._offsets():
            for b, xb in self._offsets():
                out[:, ya:ya + s * h:s, xb:xb + s * w:s, :] += contrib[:, :, :, a, b, :]
        y = out[:, k:k + s * h, k:k + s * w, :] + p["b"]
        return y, (xm, x.shape)

    def backward(self, p, cache, dy):
        xm, (n, h, w, c) = cache
        k, s, o = self.kernel, self.up_stride, self.out_ch
        dpad = np.zeros((n, s * h + 2 * k, s * w + 2 * k, o))
        dpad[:, k:k + s * h, k:k + s * w, :] = dy
        dcontrib = np.empty((n, h, w, k, k, o))
        for a, ya in self._offsets():
            for b, xb in self._offsets():
                dcontrib[:, :, :, a, b, :] = dpad[:, ya:ya + s * h:s, xb:xb + s * w:s, :]
        dcm = dcontrib.reshape(n * h * w, k * k * o)
        dwt = (xm.T @ dcm).reshape(c, k, k, o).transpose(1, 2, 0, 3)
        grads = {"W": np.ascontiguousarray(dwt), "b": dy.sum(axis=(0, 1, 2))}
        dx = (dcm @ self._wt(p).T).reshape(n, h, w, c)
        return grads, dx


@dataclass(frozen=True)
class Dense(Layer):
    n_in: int
    n_out: int

    kind = "Dense"
    trainable = ("W", "b")

    def out_shape(self, in_shape):
        if in_shape != (self.n_in,):
            raise ShapeError(f"Dense expects ({self.n_in},), got {in_shape}")
        return (self.n_out,)

    def init(self, rng, in_shape):
        return {"W": rng.normal(0.0, INIT_STD, (self.n_in, self.n_out)), "b": np.zeros(self.n_out)}

    def forward(self, p, x, train):
        return x @ p["W"] + p["b"], x

    def backward(self, p, x, dy):
        return {"W": x.T @ dy, "b": dy.sum(axis=0)}, dy @ p["W"].T


@dataclass(frozen=True)
class BatchNorm(Layer):
    """Per-channel normalization over every axis but the last (channels).

    Train mode uses batch statistics and records updated running statistics
    in the cache; Infer mode uses the running ones.
    """

    ch: int
    eps: float = 1e-5
    momentum: float = 0.9

    kind = "BatchNorm"
    trainable = ("gamma", "beta")

    def out_shape(self, in_shape):
        if not in_shape or in_shape[-1] != self.ch:
            raise ShapeError(f"BatchNorm expects {self.ch} channels last, got {in_shape}")
        return in_shape

    def init(self, rng, in_shape):
        return {"gamma": np.ones(self.ch), "beta": np.zeros(self.ch),
                "running_mean": np.zeros(self.ch), "running_var": np.ones(self.ch)}

    def forward(self, p, x, train):
        x2 = x.reshape(-1, self.ch)
        if train:
            mu = x2.mean(axis=0)
            centered = x2 - mu
            var = np.mean(centered * centered, axis=0)
        else:
            mu, var = p["running_mean"], p["running_var"]
            centered = x2 - mu
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = centered * inv_std
        y = (xhat * p["gamma"] + p["beta"]).reshape(x.shape)
        stats = None
        if train:
            m = self.momentum
            stats = {"running_mean": m * p["running_mean"] + (1 - m) * mu,
                     "running_var": m * p["running_var"] + (1 - m) * var}
        return y, (xhat, inv_std, train, stats)

    def backward(self, p, cache, dy):
        xhat, inv_std, train, _ = cache
        dy2 = dy.reshape(-1, self.ch)
        grads = {"gamma": np.sum(dy2 * xhat, axis=0), "beta": dy2.sum(axis=0)}
        dxhat = dy2 * p["gamma"]
        if not train:
            return grads, (dxhat * inv_std).reshape(dy.shape)
        count = dy2.shape[0]
        s1 = dxhat.sum(axis=0)
        s2 = np.sum(dxhat * xhat, axis=0)
        dx = (inv_std / count) * (count * dxhat - s1 - xhat * s2)
        return grads, dx.reshape(dy.shape)


ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid")


def sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(frozen=True)
class Activation(Layer):
    fn: str
    alpha: float = 0.2

    kind = "Activation"

    def __post_init__(self):
        if self.fn not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.fn!r}")

    def forward(self, p, x, train):
        if self.fn == "relu":
            y = np.maximum(x, 0.0)
        elif self.fn == "leaky_relu":
            y = np.where(x > 0, x, self.alpha * x)
        elif self.fn == "tanh":
            y = np.tanh(x)
        else:
            y = sigmoid(x)
        return y, (x, y)

    def backward(self, p, cache, dy):
        x, y = cache
        if self.fn == "relu":
            dx = dy * (x > 0)
        elif self.fn == "leaky_relu":
            dx = dy * np.where(x > 0, 1.0, self.alpha)
        elif self.fn == "tanh":
            dx = dy * (1.0 - y * y)
        else:
            dx = dy * y * (1.0 - y)
        return {}, dx

    def pattern(self, cache):
        if self.fn in ("relu", "leaky_relu"):
            return cache[0] > 0
        return None


def ReLU() -> Activation:
    return Activation("relu")


def LeakyReLU(alpha: float = 0.2) -> Activation:
    return Activation("leaky_relu", alpha)


def Tanh() -> Activation:
    return Activation("tanh")


def Sigmoid() -> Activation:
    return Activation("sigmoid")


@dataclass(frozen=True)
class MaxPool(Layer):
    """Non-overlapping ``size`` x ``size`` max pooling; ties go to the first element."""

    size: int = 2

    kind = "MaxPool"

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"MaxPool expects (H, W, C), got {in_shape}")
        h, w, c = in_shape
        if h < self.size or w < self.size:
            raise ShapeError(f"MaxPool window {self.size} larger than input {in_shape}")
        return (h // self.size, w // self.size, c)

    def forward(self, p, x, train):
        n, h, w, c = x.shape
        k = self.size
        ho, wo = h // k, w // k
        blocks = x[:, :ho * k, :wo * k, :].reshape(n, ho, k, wo, k, c).transpose(0, 1, 3, 5, 2, 4)
        blocks = blocks.reshape(n, ho, wo, c, k * k)
        idx = blocks.argmax(axis=-1)
        y = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
        return y, (idx, x.shape)

    def backward(self, p, cache, dy):
        idx, (n, h, w, c) = cache
        k = self.size
        ho, wo = h // k, w // k
        blocks = np.zeros((n, ho, wo, c, k * k))
        np.put_along_axis(blocks, idx[..., None], dy[..., None], axis=-1)
        dx = np.zeros((n, h, w, c))
        dx[:, :ho * k, :wo * k, :] = (
            blocks.reshape(n, ho, wo, c, k, k).transpose(0, 1, 4, 2, 5, 3).reshape(n, ho * k, wo * k, c)
        )
        return {}, dx

    def pattern(self, cache):
        return cache[0]


@dataclass(frozen=True)
class Flatten(Layer):
    kind = "Flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, p, x, train):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, p, shape, dy):
        return {}, dy.reshape(shape)


@dataclass(frozen=True)
class Reshape(Layer):
    shape: tuple[int, ...]

    kind = "Reshape"

    def out_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.shape)):
            raise ShapeError(f"cannot reshape {in_shape} to {self.shape}")
        return tuple(self.shape)

    def forward(self, p, x, train):
        return x.reshape((x.shape[0],) + tuple(self.shape)), x.shape

    def backward(self, p, shape, dy):
        return {}, dy.reshape(shape)
