"""A small numpy neural-network engine.

Only what the eye-state classifier needs: valid 3x3-style convolution, max
pooling, inverted dropout, flatten, dense layers, ReLU/sigmoid, a per-unit
binary cross-entropy and plain SGD with optional momentum.

Tensors are plain ``np.ndarray`` in NHWC layout with the batch axis first.
Parameters default to float32; pass ``dtype=np.float64`` to a layer for
higher-precision gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LOSS_EPS = 1e-7


class ShapeError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class NumericError(ArithmeticError):
    pass


def he_uniform(rng, shape, fan_in, dtype=np.float32):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base class. Subclasses cache what backward needs during forward."""

    kind = "layer"

    def __init__(self):
        self.params: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: tuple) -> tuple:
        return input_shape

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        return self._cache

    def __repr__(self):
        return f"{type(self).__name__}()"


class Conv2D(Layer):
    """Stride-1 convolution with no padding. Weights are (kh, kw, cin, cout)."""

    kind = "conv2d"

    def __init__(self, kh, kw, cin, cout, rng=None, dtype=np.float32):
        super().__init__()
        self.kh, self.kw, self.cin, self.cout = kh, kw, cin, cout
        rng = np.random.default_rng() if rng is None else rng
        self.weight = he_uniform(rng, (kh, kw, cin, cout), kh * kw * cin, dtype)
        self.bias = np.zeros(cout, dtype=dtype)
        self.params = [self.weight, self.bias]
        self.grads = [np.zeros_like(self.weight), np.zeros_like(self.bias)]

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if c != self.cin or h < self.kh or w < self.kw:
            raise ShapeError(f"conv {self.kh}x{self.kw}x{self.cin} cannot take input {input_shape}")
        return (h - self.kh + 1, w - self.kw + 1, self.cout)

    def forward(self, x, training=False):
        if x.ndim != 4:
            raise ShapeError(f"conv input must be (n, h, w, c), got {x.shape}")
        n = x.shape[0]
        oh, ow, _ = self.output_shape(x.shape[1:])
        # (n, oh, ow, cin, kh, kw) -> (n, oh, ow, kh, kw, cin)
        win = sliding_window_view(x, (self.kh, self.kw), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
        cols = win.reshape(n * oh * ow, self.kh * self.kw * self.cin)
        out = cols @ self.weight.reshape(-1, self.cout) + self.bias
        self._cache = (x.shape, cols)
        return out.reshape(n, oh, ow, self.cout)

    def backward(self, grad):
        x_shape, cols = self._cached()
        n, h, w, _ = x_shape
        oh, ow = grad.shape[1:3]
        g = grad.reshape(-1, self.cout)
        self.grads[0][...] = (cols.T @ g).reshape(self.weight.shape)
        self.grads[1][...] = g.sum(axis=0)
        dcols = (g @ self.weight.reshape(-1, self.cout).T).reshape(n, oh, ow, self.kh, self.kw, self.cin)
        dx = np.zeros(x_shape, dtype=dcols.dtype)
        for a in range(self.kh):
            for b in range(self.kw):
                dx[:, a:a + oh, b:b + ow, :] += dcols[:, :, :, a, b, :]
        return dx

    def __repr__(self):
        return f"Conv2D({self.kh}x{self.kw}, {self.cin}->{self.cout})"


class MaxPool2D(Layer):
    """Max pooling; ties go to the first maximal element in row-major order."""

    kind = "maxpool2d"

    def __init__(self, ph=2, pw=2, stride=2):
        super().__init__()
        self.ph, self.pw, self.stride = ph, pw, stride

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if h < self.ph or w < self.pw:
            raise ShapeError(f"pool {self.ph}x{self.pw} cannot take input {input_shape}")
        s = self.stride
        return ((h - self.ph) // s + 1, (w - self.pw) // s + 1, c)

    def forward(self, x, training=False):
        if x.ndim != 4:
            raise ShapeError(f"pool input must be (n, h, w, c), got {x.shape}")
        oh, ow, c = self.output_shape(x.shape[1:])
        s = self.stride
        win = sliding_window_view(x, (self.ph, self.pw), axis=(1, 2))[:, ::s, ::s][:, :oh, :ow]
        flat = win.reshape(x.shape[0], oh, ow, c, self.ph * self.pw)
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        self._cache = (x.shape, arg)
        return out

    def backward(self, grad):
        x_shape, arg = self._cached()
        oh, ow = arg.shape[1:3]
        s = self.stride
        dx = np.zeros(x_shape, dtype=grad.dtype)
        for a in range(self.ph):
            for b in range(self.pw):
                hit = arg == a * self.pw + b
                dx[:, a:a + s * oh:s, b:b + s * ow:s, :] += np.where(hit, grad, 0)
        return dx

    def __repr__(self):
        return f"MaxPool2D({self.ph}x{self.pw}, stride={self.stride})"


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-rate) during training."""

    kind = "dropout"

    def __init__(self, rate=0.25, rng=None):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.default_rng() if rng is None else rng

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self._cache = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        mask = keep.astype(x.dtype) / x.dtype.type(1 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, grad):
        # inference pass (or rate 0) is the identity
        if self._cache is None:
            return grad
        return grad * self._cache

    def __repr__(self):
        return f"Dropout({self.rate})"


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._cached())


class Dense(Layer):
    """Fully connected layer, weights (in, out). ``init`` is 'he' or 'glorot'."""

    kind = "dense"

    def __init__(self, n_in, n_out, rng=None, init="he", dtype=np.float32):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        rng = np.random.default_rng() if rng is None else rng
        if init == "he":
            self.weight = he_uniform(rng, (n_in, n_out), n_in, dtype)
        elif init == "glorot":
            self.weight = glorot_uniform(rng, (n_in, n_out), n_in, n_out, dtype)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.bias = np.zeros(n_out, dtype=dtype)
        self.params = [self.weight, self.bias]
        self.grads = [np.zeros_like(self.weight), np.zeros_like(self.bias)]

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.n_in,):
            raise ShapeError(f"dense expects ({self.n_in},), got {tuple(input_shape)}")
        return (self.n_out,)

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"dense expects (n, {self.n_in}), got {x.shape}")
        self._cache = x
        return x @ self.weight + self.bias

    def backward(self, grad):
        x = self._cached()
        self.grads[0][...] = x.T @ grad
        self.grads[1][...] = grad.sum(axis=0)
        return grad @ self.weight.T

    def __repr__(self):
        return f"Dense({self.n_in}->{self.n_out})"


def relu(x):
    return np.maximum(x, 0)


def sigmoid(x):
    x = np.asarray(x)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype if x.dtype.kind == "f" else np.float64)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        self._cache = x > 0
        # np.maximum keeps NaN visible to the finiteness check downstream
        return np.maximum(x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return np.where(self._cached(), grad, 0).astype(grad.dtype)


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, training=False):
        y = sigmoid(x)
        self._cache = y
        return y

    def backward(self, grad):
        y = self._cached()
        return grad * y * (1 - y)


class Sequential:
    """Ordered layer stack. Forward and backward refuse to emit NaN/Inf."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, training=False):
        # overflow surfaces as the NumericError below rather than as warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for layer in self.layers:
                x = layer.forward(x, training)
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite activation in forward pass")
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        for g in self.grads():
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite parameter gradient")
        return grad

    def params(self):
        return [p for layer in self.layers for p in layer.params]

    def grads(self):
        return [g for layer in self.layers for g in layer.grads]

    def shapes(self, input_shape):
        """Per-layer output shapes for a single (unbatched) input."""
        out, shape = [], tuple(input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
            out.append(shape)
        return out

    def n_params(self):
        return sum(p.size for p in self.params())


def cross_entropy(pred, target):
    """Mean per-unit binary cross-entropy and its gradient w.r.t. ``pred``.

    ``pred`` holds sigmoid outputs, shape (2,) or (n, 2); ``target`` is the
    matching one-hot array. Predictions are clamped to [eps, 1 - eps].
    """
    pred = np.asarray(pred)
    t = np.asarray(target, dtype=np.float64)
    if pred.shape != t.shape:
        raise ShapeError(f"prediction {pred.shape} and target {t.shape} differ")
    rows = t.reshape(-1, t.shape[-1])
    if not (np.all((rows == 0) | (rows == 1)) and np.all(rows.sum(axis=1) == 1)):
        raise ValueError("target must be one-hot")
    p = np.clip(pred.astype(np.float64), LOSS_EPS, 1 - LOSS_EPS)
    loss = float(np.mean(-(t * np.log(p) + (1 - t) * np.log1p(-p))))
    grad = (p - t) / (p * (1 - p)) / t.size
    return loss, grad.astype(pred.dtype if pred.dtype.kind == "f" else np.float64)


@dataclass
class SgdConfig:
    learning_rate: float = 0.01
    momentum: float = 0.0
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        # zero is allowed as a no-op step
        if not self.learning_rate >= 0:
            raise ValueError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.momentum < 0:
            raise ValueError(f"momentum must be non-negative, got {self.momentum}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch size and epochs must be positive")


def sgd_step(params, grads, lr, momentum=0.0, velocity=None):
    """Return updated copies of ``params`` (and velocities when momentum > 0).

    Classical momentum: ``v <- momentum * v - lr * g``; ``w <- w + v``.
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    new_params, new_vel = [], []
    for i, (w, g) in enumerate(zip(params, grads)):
        w, g = np.asarray(w), np.asarray(g)
        if w.shape != g.shape:
            raise ShapeError(f"parameter {w.shape} vs gradient {g.shape}")
        if momentum > 0:
            v = np.zeros_like(w) if velocity is None else np.asarray(velocity[i])
            v = momentum * v - lr * g
            new_vel.append(v.astype(w.dtype))
            new_params.append((w + v).astype(w.dtype))
        else:
            new_params.append((w - lr * g).astype(w.dtype))
    return (new_params, new_vel) if momentum > 0 else new_params


class SGD:
    """In-place optimizer over a fixed parameter list."""

    def __init__(self, params, lr=0.01, momentum=0.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params] if momentum > 0 else None

    def step(self, grads):
        lr = self.params[0].dtype.type(self.lr)
        for i, (w, g) in enumerate(zip(self.params, grads)):
            if w.shape != g.shape:
                raise ShapeError(f"parameter {w.shape} vs gradient {g.shape}")
            if self.velocity is not None:
                v = self.velocity[i]
                v *= w.dtype.type(self.momentum)
                v -= lr * g
                w += v
            else:
                w -= lr * g
