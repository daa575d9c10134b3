"""Neural-network layers with explicit forward/backward passes.

Minimal module system on numpy arrays (NCHW layout). Each layer caches
what its backward pass needs during a training-mode forward; eval-mode
forwards skip caching so inference stays lean. Backward passes accumulate
parameter gradients in place and return the input gradient.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from imagedx.errors import ShapeMismatch
from imagedx.nn import kernels


class Parameter:
    """Learnable array plus its gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


class Module:
    """Base class: tracks parameters, buffers, and child modules by name."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, "Module"] = {}

    def add_param(self, name: str, value: np.ndarray) -> Parameter:
        param = Parameter(value)
        self._params[name] = param
        return param

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        self._buffers[name] = value
        return value

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def parameters(self) -> Iterator[Parameter]:
        yield from self._params.values()
        for child in self._children.values():
            yield from child.parameters()

    def named_state(self, prefix: str = "") -> dict[str, np.ndarray]:
        """Flat name -> array map of all parameters and buffers."""
        state: dict[str, np.ndarray] = {}
        for name, param in self._params.items():
            state[prefix + name] = param.value
        for name, buf in self._buffers.items():
            state[prefix + name] = buf
        for name, child in self._children.items():
            state.update(child.named_state(prefix + name + "."))
        return state

    def load_state(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        for name, param in self._params.items():
            key = prefix + name
            incoming = state[key]
            if incoming.shape != param.value.shape:
                raise ShapeMismatch(
                    f"state {key}: expected {param.value.shape}, got {incoming.shape}"
                )
            param.value[...] = incoming
        for name in self._buffers:
            key = prefix + name
            incoming = state[key]
            if incoming.shape != self._buffers[name].shape:
                raise ShapeMismatch(
                    f"state {key}: expected {self._buffers[name].shape}, got {incoming.shape}"
                )
            self._buffers[name][...] = incoming
        for name, child in self._children.items():
            child.load_state(state, prefix + name + ".")

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _conv_out_dim(size: int, k: int, s: int, p: int) -> int:
    return (size + 2 * p - k) // s + 1


class Conv2d(Module):
    """2-D convolution via im2col. No bias (batch norm follows every conv)."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        stride: int = 1,
        padding: int = 0,
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        rng = rng or np.random.default_rng(0)
        fan_in = in_channels * kernel_size * kernel_size
        scale = np.sqrt(2.0 / fan_in)  # He init for ReLU nets
        weight = rng.normal(0.0, scale, (out_channels, in_channels, kernel_size, kernel_size))
        self.weight = self.add_param("weight", weight.astype(dtype))
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatch(
                f"conv expects (N, {self.in_channels}, H, W), got {x.shape}"
            )
        k, s, p = self.kernel_size, self.stride, self.padding
        n, _, h, w = x.shape
        oh, ow = _conv_out_dim(h, k, s, p), _conv_out_dim(w, k, s, p)
        wmat = self.weight.value.reshape(self.out_channels, -1)

        if k == 1 and s == 1 and p == 0:
            xr = x.reshape(n, self.in_channels, h * w)
            y = (wmat @ xr).reshape(n, self.out_channels, h, w)
            if training:
                self._cache = ("1x1", x)
            return y

        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else np.ascontiguousarray(x)
        cols = kernels.im2col(xp, k, k, s, s, oh, ow)
        y = (cols @ wmat.T).reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)
        if training:
            self._cache = ("gen", cols, x.shape, (oh, ow))
        return np.ascontiguousarray(y)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        kind = self._cache[0]
        wmat = self.weight.value.reshape(self.out_channels, -1)
        if kind == "1x1":
            _, x = self._cache
            n, _, h, w = x.shape
            dyr = dy.reshape(n, self.out_channels, h * w)
            xr = x.reshape(n, self.in_channels, h * w)
            self.weight.grad += (
                np.einsum("nof,ncf->oc", dyr, xr).reshape(self.weight.value.shape)
            )
            dx = (wmat.T @ dyr).reshape(x.shape)
            return dx

        _, cols, x_shape, (oh, ow) = self._cache
        n, c, h, w = x_shape
        k, s, p = self.kernel_size, self.stride, self.padding
        dyr = dy.transpose(0, 2, 3, 1).reshape(n * oh * ow, self.out_channels)
        self.weight.grad += (dyr.T @ cols).reshape(self.weight.value.shape)
        dcols = np.ascontiguousarray(dyr @ wmat)
        dxp = kernels.col2im(dcols, n, c, h + 2 * p, w + 2 * p, k, k, s, s, oh, ow)
        return dxp[:, :, p : p + h, p : p + w] if p else dxp


class BatchNorm2d(Module):
    """Per-channel batch normalization with running statistics."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = self.add_param("gamma", np.ones(channels, dtype=dtype))
        self.beta = self.add_param("beta", np.zeros(channels, dtype=dtype))
        self.running_mean = self.add_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.running_var = self.add_buffer("running_var", np.ones(channels, dtype=dtype))
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeMismatch(f"bn expects (N, {self.channels}, H, W), got {x.shape}")
        gamma = self.gamma.value.reshape(1, -1, 1, 1)
        beta = self.beta.value.reshape(1, -1, 1, 1)
        if training:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            invstd = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean.reshape(1, -1, 1, 1)) * invstd.reshape(1, -1, 1, 1)
            # running stats use the unbiased variance estimate
            unbiased = var * (m / max(m - 1, 1))
            mom = self.momentum
            self.running_mean[...] = (1 - mom) * self.running_mean + mom * mean
            self.running_var[...] = (1 - mom) * self.running_var + mom * unbiased
            self._cache = (xhat, invstd, m)
            return gamma * xhat + beta
        invstd = 1.0 / np.sqrt(self.running_var + self.eps)
        xhat = (x - self.running_mean.reshape(1, -1, 1, 1)) * invstd.reshape(1, -1, 1, 1)
        return gamma * xhat + beta

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, invstd, m = self._cache
        self.gamma.grad += (dy * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += dy.sum(axis=(0, 2, 3))
        gamma = self.gamma.value.reshape(1, -1, 1, 1)
        dxhat = dy * gamma
        sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        dx = (invstd.reshape(1, -1, 1, 1) / m) * (
            m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat
        )
        return dx


class ReLU(Module):
    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if training:
            self._mask = x > 0
            return x * self._mask
        return np.maximum(x, 0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask


class MaxPool2d(Module):
    def __init__(self, kernel_size: int, stride: int, padding: int = 0):
        super().__init__()
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        k, s, p = self.kernel_size, self.stride, self.padding
        n, c, h, w = x.shape
        oh, ow = _conv_out_dim(h, k, s, p), _conv_out_dim(w, k, s, p)
        if p:
            xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), constant_values=-np.inf)
        else:
            xp = np.ascontiguousarray(x)
        out, argmax = kernels.maxpool_forward(xp, k, k, s, s, oh, ow)
        if training:
            self._cache = (argmax, x.shape)
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        argmax, (n, c, h, w) = self._cache
        k, s, p = self.kernel_size, self.stride, self.padding
        dxp = kernels.maxpool_backward(
            np.ascontiguousarray(dy), argmax, h + 2 * p, w + 2 * p, k, k, s, s
        )
        return dxp[:, :, p : p + h, p : p + w] if p else dxp


class AvgPool2d(Module):
    """Non-overlapping average pooling (kernel == stride); trailing rows or
    columns that do not fill a window are dropped."""

    def __init__(self, kernel_size: int = 2):
        super().__init__()
        self.kernel_size = kernel_size
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        k = self.kernel_size
        n, c, h, w = x.shape
        oh, ow = h // k, w // k
        if oh == 0 or ow == 0:
            raise ShapeMismatch(f"avgpool {k}x{k} on {h}x{w} input")
        trimmed = x[:, :, : oh * k, : ow * k]
        out = trimmed.reshape(n, c, oh, k, ow, k).mean(axis=(3, 5))
        if training:
            self._cache = x.shape
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        k = self.kernel_size
        n, c, h, w = self._cache
        oh, ow = h // k, w // k
        dx = np.zeros((n, c, h, w), dtype=dy.dtype)
        expanded = np.repeat(np.repeat(dy, k, axis=2), k, axis=3) / (k * k)
        dx[:, :, : oh * k, : ow * k] = expanded
        return dx


class GlobalAvgPool(Module):
    """Spatial mean: (N, C, H, W) -> (N, C)."""

    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if training:
            self._cache = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        n, c, h, w = self._cache
        return np.broadcast_to(dy[:, :, None, None], (n, c, h, w)) / (h * w)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng=None, dtype=np.float32):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        rng = rng or np.random.default_rng(0)
        scale = np.sqrt(2.0 / in_features)
        self.weight = self.add_param(
            "weight", rng.normal(0.0, scale, (out_features, in_features)).astype(dtype)
        )
        self.bias = self.add_param("bias", np.zeros(out_features, dtype=dtype))
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatch(f"linear expects (N, {self.in_features}), got {x.shape}")
        if training:
            self._cache = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._cache
        self.weight.grad += dy.T @ x
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.value


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


PROB_FLOOR = 1e-12


def softmax_cross_entropy(
    logits: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over a batch.

    Returns (loss, dlogits, probs); dlogits is the gradient of the mean
    loss, i.e. (probs - onehot) / batch_size.
    """
    n = logits.shape[0]
    probs = softmax(logits.astype(np.float64))
    picked = probs[np.arange(n), targets]
    loss = float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), targets] -= 1.0
    dlogits /= n
    return loss, dlogits.astype(logits.dtype), probs
