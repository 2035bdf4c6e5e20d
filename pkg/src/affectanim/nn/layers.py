"""Layer implementations on (batch, height, width, channels) arrays.

Height is the frequency axis and width the time axis of a spectral image.
Convolutions are stride-1 with zero "same" padding. Max pooling pads with
-inf so the output size is ``ceil(in / stride)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("conv", "maxpool", "fc", "relu", "softmax", "dropout", "flatten")


@dataclass(frozen=True)
class LayerConfig:
    kind: str
    depth: int | None = None
    filter: tuple[int, int] | None = None
    stride: tuple[int, int] | None = None
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("conv", "maxpool"):
            if self.filter is None or min(self.filter) <= 0:
                raise ValueError(f"{self.kind} needs a positive filter size")
            object.__setattr__(self, "filter", tuple(int(v) for v in self.filter))
        if self.kind == "maxpool":
            stride = self.stride or self.filter
            if min(stride) <= 0:
                raise ValueError("pooling stride must be positive")
            object.__setattr__(self, "stride", tuple(int(v) for v in stride))
        if self.kind in ("conv", "fc") and (self.depth is None or self.depth <= 0):
            raise ValueError(f"{self.kind} needs a positive depth")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerConfig":
        d = dict(d)
        for key in ("filter", "stride"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _same_pad(size: int) -> tuple[int, int]:
    before = (size - 1) // 2
    return before, size - 1 - before


def _pool_pad(n: int, k: int, s: int) -> tuple[int, int, int]:
    out = math.ceil(n / s)
    total = max((out - 1) * s + k - n, 0)
    return out, total // 2, total - total // 2


class Layer:
    kind = ""

    def __init__(self, cfg: LayerConfig):
        self.cfg = cfg
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def build(self, in_shape: tuple, rng: np.random.Generator, dtype) -> tuple:
        return self.output_shape(in_shape)

    def output_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray, need_dx: bool = True) -> np.ndarray | None:
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise RuntimeError(f"{self.kind}: backward called without a training forward pass")
        return self._cache


class Conv2D(Layer):
    kind = "conv"

    def output_shape(self, in_shape):
        h, w, _ = in_shape
        return (h, w, self.cfg.depth)

    def build(self, in_shape, rng, dtype):
        kh, kw = self.cfg.filter
        c = in_shape[2]
        fan_in = c * kh * kw
        limit = math.sqrt(6.0 / fan_in)
        self.params["W"] = rng.uniform(-limit, limit, size=(c, kh, kw, self.cfg.depth)).astype(dtype)
        self.params["b"] = np.zeros(self.cfg.depth, dtype=dtype)
        return self.output_shape(in_shape)

    def forward(self, x, train=False):
        kh, kw = self.cfg.filter
        b, h, w, c = x.shape
        (t, bo), (l, r) = _same_pad(kh), _same_pad(kw)
        xp = np.pad(x, ((0, 0), (t, bo), (l, r), (0, 0)))
        cols = sliding_window_view(xp, (kh, kw), axis=(1, 2)).reshape(b * h * w, c * kh * kw)
        wmat = self.params["W"].reshape(c * kh * kw, -1)
        y = cols @ wmat + self.params["b"]
        self._cache = (cols, x.shape) if train else None
        return y.reshape(b, h, w, -1)

    def backward(self, dy, need_dx=True):
        cols, (b, h, w, c) = self._cached()
        kh, kw = self.cfg.filter
        f = dy.shape[-1]
        dy2 = dy.reshape(-1, f)
        self.grads["W"] = (cols.T @ dy2).reshape(self.params["W"].shape)
        self.grads["b"] = dy2.sum(axis=0)
        if not need_dx:
            return None
        # input gradient = full correlation of dy with the flipped kernel
        (t, _), (l, _) = _same_pad(kh), _same_pad(kw)
        dyp = np.pad(dy, ((0, 0), (kh - 1 - t, t), (kw - 1 - l, l), (0, 0)))
        dcols = sliding_window_view(dyp, (kh, kw), axis=(1, 2)).reshape(b * h * w, f * kh * kw)
        flipped = self.params["W"][:, ::-1, ::-1, :].transpose(3, 1, 2, 0).reshape(f * kh * kw, c)
        return (dcols @ flipped).reshape(b, h, w, c)


class MaxPool2D(Layer):
    kind = "maxpool"

    def output_shape(self, in_shape):
        h, w, c = in_shape
        (kh, kw), (sh, sw) = self.cfg.filter, self.cfg.stride
        return (math.ceil(h / sh), math.ceil(w / sw), c)

    def forward(self, x, train=False):
        (kh, kw), (sh, sw) = self.cfg.filter, self.cfg.stride
        b, h, w, c = x.shape
        oh, t, bo = _pool_pad(h, kh, sh)
        ow, l, r = _pool_pad(w, kw, sw)
        xp = np.pad(x, ((0, 0), (t, bo), (l, r), (0, 0)), constant_values=-np.inf)
        views = [
            xp[:, i : i + sh * (oh - 1) + 1 : sh, j : j + sw * (ow - 1) + 1 : sw, :]
            for i in range(kh)
            for j in range(kw)
        ]
        y = views[0].copy()
        for v in views[1:]:
            np.maximum(y, v, out=y)
        arg = None
        if train:
            # reverse scan so ties resolve to the first offset
            arg = np.zeros(y.shape, dtype=np.int8)
            for k in range(len(views) - 1, -1, -1):
                eq = views[k] == y
                arg = arg * ~eq + np.int8(k) * eq
        self._cache = (arg, x.shape, xp.shape, (t, l)) if train else None
        return y

    def backward(self, dy, need_dx=True):
        arg, (b, h, w, c), padded, (t, l) = self._cached()
        (kh, kw), (sh, sw) = self.cfg.filter, self.cfg.stride
        oh, ow = dy.shape[1:3]
        dxp = np.zeros(padded, dtype=dy.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + sh * (oh - 1) + 1 : sh, j : j + sw * (ow - 1) + 1 : sw, :] += dy * (arg == i * kw + j)
        return dxp[:, t : t + h, l : l + w, :]


class Dense(Layer):
    kind = "fc"

    def output_shape(self, in_shape):
        return (self.cfg.depth,)

    def build(self, in_shape, rng, dtype):
        (n_in,) = in_shape
        limit = math.sqrt(6.0 / n_in)
        self.params["W"] = rng.uniform(-limit, limit, size=(n_in, self.cfg.depth)).astype(dtype)
        self.params["b"] = np.zeros(self.cfg.depth, dtype=dtype)
        return self.output_shape(in_shape)

    def forward(self, x, train=False):
        self._cache = x if train else None
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy, need_dx=True):
        x = self._cached()
        self.grads["W"] = x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T if need_dx else None


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        mask = x > 0
        self._cache = mask if train else None
        return x * mask

    def backward(self, dy, need_dx=True):
        return dy * self._cached()


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, train=False):
        z = np.exp(x - x.max(axis=-1, keepdims=True))
        p = z / z.sum(axis=-1, keepdims=True)
        self._cache = p if train else None
        return p

    def backward(self, dy, need_dx=True):
        p = self._cached()
        return p * (dy - (dy * p).sum(axis=-1, keepdims=True))


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    kind = "dropout"

    def __init__(self, cfg):
        super().__init__(cfg)
        self.rng: np.random.Generator | None = None
        self.frozen = False
        self.mask = None

    def forward(self, x, train=False):
        if not train or self.cfg.rate == 0.0:
            self._cache = np.ones_like(x) if train else None
            return x
        if not (self.frozen and self.mask is not None and self.mask.shape == x.shape):
            keep = 1.0 - self.cfg.rate
            self.mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / keep
        self._cache = self.mask
        return x * self.mask

    def backward(self, dy, need_dx=True):
        return dy * self._cached()


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False):
        self._cache = x.shape if train else None
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, need_dx=True):
        return dy.reshape(self._cached())


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, MaxPool2D, Dense, ReLU, Softmax, Dropout, Flatten)}


def make_layer(cfg: LayerConfig) -> Layer:
    return LAYER_TYPES[cfg.kind](cfg)
