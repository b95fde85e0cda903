"""Stateful layer objects over the functional kernels.

Each layer instance is used once per forward pass and keeps whatever it
needs for the matching backward call. Parameter gradients accumulate with
+= so shared trunks can receive contributions from several heads; call
zero_grad between steps.
"""

from __future__ import annotations

import numpy as np

from . import functional as F


class Parameter:
    """Named trainable tensor with an accumulated gradient."""

    __slots__ = ("name", "data", "grad")

    def __init__(self, name: str, data: np.ndarray):
        self.name = name
        self.data = data
        self.grad = np.zeros_like(data)

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    kind = "layer"

    def __init__(self, name: str = ""):
        self.name = name

    def params(self) -> list[Parameter]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return []

    def load_buffer(self, name: str, value: np.ndarray) -> None:
        raise KeyError(f"{self.name}: no buffer {name}")

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def out_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def spec(self) -> dict:
        return {"kind": self.kind, "name": self.name}


class Conv2dSame(Layer):
    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel_h, kernel_w, *, rng, dtype=np.float32, name=""):
        super().__init__(name)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = (kernel_h, kernel_w)
        fan_in = in_channels * kernel_h * kernel_w
        fan_out = out_channels * kernel_h * kernel_w
        self.weight = Parameter(
            f"{name}.weight", glorot_uniform((out_channels, in_channels, kernel_h, kernel_w), fan_in, fan_out, rng, dtype)
        )
        self.bias = Parameter(f"{name}.bias", np.zeros(out_channels, dtype=dtype))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, train):
        if x.shape[1] != self.in_channels:
            raise ValueError(f"{self.name}: got {x.shape[1]} channels, expected {self.in_channels}")
        self._x = x
        return F.conv2d_same(x, self.weight.data, self.bias.data)

    def backward(self, dy, input_grad=True):
        dx, dw, db = F.conv2d_same_backward(dy, self._x, self.weight.data, need_dx=input_grad)
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def out_shape(self, in_shape):
        n, _, h, w = in_shape
        return (n, self.out_channels, h, w)

    def spec(self):
        return {
            "kind": self.kind,
            "name": self.name,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": list(self.kernel),
        }


class BatchNorm2d(Layer):
    kind = "batchnorm"

    def __init__(self, channels, *, momentum=0.99, eps=1e-3, dtype=np.float32, name=""):
        super().__init__(name)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels, dtype=dtype))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels, dtype=dtype))
        # running stats stay in the storage dtype so checkpoints (which
        # hold float32) round-trip bit-exactly
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.batches_seen = 0
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [
            (f"{self.name}.running_mean", self.running_mean),
            (f"{self.name}.running_var", self.running_var),
            (f"{self.name}.batches_seen", np.array([self.batches_seen], dtype=np.float64)),
        ]

    def load_buffer(self, name, value):
        dtype = self.gamma.data.dtype
        if name.endswith(".running_mean"):
            self.running_mean = np.asarray(value, dtype=dtype).reshape(self.channels)
        elif name.endswith(".running_var"):
            self.running_var = np.asarray(value, dtype=dtype).reshape(self.channels)
        elif name.endswith(".batches_seen"):
            self.batches_seen = int(np.asarray(value).reshape(-1)[0])
        else:
            raise KeyError(f"{self.name}: no buffer {name}")

    def forward(self, x, train):
        if x.shape[1] != self.channels:
            raise ValueError(f"{self.name}: got {x.shape[1]} channels, expected {self.channels}")
        if train:
            y, mean, var, self._cache = F.batchnorm2d_train(x, self.gamma.data, self.beta.data, self.eps)
            dtype = self.running_mean.dtype
            self.running_mean = (self.momentum * self.running_mean.astype(np.float64) + (1 - self.momentum) * mean).astype(dtype)
            self.running_var = (self.momentum * self.running_var.astype(np.float64) + (1 - self.momentum) * var).astype(dtype)
            self.batches_seen += 1
            return y
        if self.batches_seen == 0:
            raise RuntimeError(f"{self.name}: eval before any training batch; running stats uninitialized")
        self._cache = None
        return F.batchnorm2d_eval(x, self.gamma.data, self.beta.data, self.running_mean, self.running_var, self.eps)

    def backward(self, dy):
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward without a train-mode forward")
        dx, dgamma, dbeta = F.batchnorm2d_backward(dy, self._cache)
        self.gamma.grad += dgamma.astype(self.gamma.data.dtype)
        self.beta.grad += dbeta.astype(self.beta.data.dtype)
        return dx

    def spec(self):
        return {"kind": self.kind, "name": self.name, "channels": self.channels, "momentum": self.momentum, "eps": self.eps}


class ReLU(Layer):
    kind = "relu"

    def __init__(self, name=""):
        super().__init__(name)
        self._x = None

    def forward(self, x, train):
        self._x = x
        return F.relu(x)

    def backward(self, dy):
        return F.relu_backward(dy, self._x)


class MaxPool2d(Layer):
    kind = "maxpool"

    def __init__(self, pool_h, pool_w, name=""):
        super().__init__(name)
        self.pool = (pool_h, pool_w)
        self._idx = None
        self._in_shape = None

    def forward(self, x, train):
        self._in_shape = x.shape
        y, self._idx = F.maxpool2d(x, *self.pool)
        return y

    def backward(self, dy):
        return F.maxpool2d_backward(dy, self._idx, self._in_shape, *self.pool)

    def out_shape(self, in_shape):
        n, c, h, w = in_shape
        return (n, c, h // self.pool[0], w // self.pool[1])

    def spec(self):
        return {"kind": self.kind, "name": self.name, "pool": list(self.pool)}


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate, name=""):
        super().__init__(name)
        self.rate = rate
        self.rng: np.random.Generator | None = None
        self._mask = None

    def forward(self, x, train):
        if train and self.rate > 0 and self.rng is None:
            raise RuntimeError(f"{self.name}: dropout needs an rng in train mode")
        y, self._mask = F.dropout(x, self.rate, train, self.rng)
        return y

    def backward(self, dy):
        return F.dropout_backward(dy, self._mask, self.rate)

    def spec(self):
        return {"kind": self.kind, "name": self.name, "rate": self.rate}


class Flatten(Layer):
    kind = "flatten"

    def __init__(self, name=""):
        super().__init__(name)
        self._in_shape = None

    def forward(self, x, train):
        self._in_shape = x.shape
        return F.flatten(x)

    def backward(self, dy):
        return dy.reshape(self._in_shape)

    def out_shape(self, in_shape):
        n = in_shape[0]
        return (n, int(np.prod(in_shape[1:])))


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, out_features, *, rng, dtype=np.float32, name=""):
        super().__init__(name)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(f"{name}.weight", glorot_uniform((in_features, out_features), in_features, out_features, rng, dtype))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_features, dtype=dtype))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, train):
        self._x = x
        return F.dense(x, self.weight.data, self.bias.data)

    def backward(self, dy):
        dx, dw, db = F.dense_backward(dy, self._x, self.weight.data)
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def out_shape(self, in_shape):
        return (in_shape[0], self.out_features)

    def spec(self):
        return {"kind": self.kind, "name": self.name, "in_features": self.in_features, "out_features": self.out_features}


class Softmax(Layer):
    kind = "softmax"

    def __init__(self, name=""):
        super().__init__(name)
        self._y = None

    def forward(self, x, train):
        self._y = F.softmax(x)
        return self._y

    def backward(self, dy):
        return F.softmax_backward(dy, self._y)


class Sequential:
    """Plain layer pipeline; backward runs in reverse order."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x, train: bool):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dy, input_grad=True):
        """input_grad=False skips the input gradient at a leading conv
        layer (trunks during training; the costliest dx nobody reads)."""
        for i, layer in enumerate(reversed(self.layers)):
            if i == len(self.layers) - 1 and isinstance(layer, Conv2dSame):
                return layer.backward(dy, input_grad=input_grad)
            dy = layer.backward(dy)
        return dy

    def params(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.params()]

    def buffers(self):
        return [b for layer in self.layers for b in layer.buffers()]

    def out_shape(self, in_shape):
        for layer in self.layers:
            in_shape = layer.out_shape(in_shape)
        return in_shape

    def shape_trace(self, in_shape) -> list[tuple[str, tuple]]:
        trace = []
        for layer in self.layers:
            in_shape = layer.out_shape(in_shape)
            trace.append((layer.name or layer.kind, in_shape))
        return trace
