"""Dense NCHW tensor primitives with hand-paired backward passes.

Tensors are plain rank-4 numpy arrays laid out as (batch, channel, height,
width). Storage defaults to float32; every op computes in the dtype of its
input, so gradient checks run the same code in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float32


def as_tensor(x, dtype=None) -> np.ndarray:
    """Coerce ``x`` to a rank-4 array, rejecting anything else."""
    arr = np.asarray(x, dtype=dtype or getattr(x, "dtype", DTYPE))
    if arr.ndim != 4:
        raise ValueError(f"expected rank-4 (n, c, h, w) tensor, got shape {arr.shape}")
    return arr


@dataclass
class ConvParams:
    weight: np.ndarray  # (out_c, in_c, kh, kw)
    bias: np.ndarray  # (out_c,)
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weight.ndim != 4:
            raise ValueError(f"conv weight must be rank 4, got shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"bias length {self.bias.shape} does not match out_c={self.weight.shape[0]}"
            )
        if self.stride < 1 or self.padding < 0:
            raise ValueError(f"invalid stride={self.stride} / padding={self.padding}")

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        oh = (h + 2 * self.padding - kh) // self.stride + 1
        ow = (w + 2 * self.padding - kw) // self.stride + 1
        if oh < 1 or ow < 1 or h + 2 * self.padding < kh or w + 2 * self.padding < kw:
            raise ValueError(
                f"input {h}x{w} too small for kernel {kh}x{kw} with padding {self.padding}"
            )
        return oh, ow


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.1
    training: bool = True

    @classmethod
    def create(cls, channels: int, dtype=DTYPE, **kwargs) -> "BatchNormState":
        return cls(
            gamma=np.ones(channels, dtype),
            beta=np.zeros(channels, dtype),
            running_mean=np.zeros(channels, dtype),
            running_var=np.ones(channels, dtype),
            **kwargs,
        )

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


def _windows(x: np.ndarray, params: ConvParams) -> np.ndarray:
    """Strided view of shape (n, c, oh, ow, kh, kw); no copy."""
    p = params.padding
    if p:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    kh, kw = params.kernel
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    s = params.stride
    return win[:, :, ::s, ::s]


def _check_conv_input(x: np.ndarray, params: ConvParams) -> tuple[int, int]:
    if x.ndim != 4:
        raise ValueError(f"conv input must be rank 4, got shape {x.shape}")
    if x.shape[1] != params.in_channels:
        raise ValueError(
            f"channel mismatch: input has {x.shape[1]} channels, kernel expects {params.in_channels}"
        )
    return params.output_size(x.shape[2], x.shape[3])


def conv2d_forward(x: np.ndarray, params: ConvParams) -> np.ndarray:
    """Zero-padded 2-D cross-correlation."""
    oh, ow = _check_conv_input(x, params)
    win = _windows(x, params)[:, :, :oh, :ow]
    w = params.weight.astype(x.dtype, copy=False)
    # (n, oh, ow, out_c) -> (n, out_c, oh, ow)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out += params.bias.astype(x.dtype, copy=False)[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_backward(
    x: np.ndarray, params: ConvParams, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(grad_input, grad_weight, grad_bias)`` for :func:`conv2d_forward`."""
    oh, ow = _check_conv_input(x, params)
    n = x.shape[0]
    expected = (n, params.out_channels, oh, ow)
    if upstream.shape != expected:
        raise ValueError(f"upstream shape {upstream.shape} != conv output shape {expected}")
    win = _windows(x, params)[:, :, :oh, :ow]
    w = params.weight.astype(x.dtype, copy=False)
    up = upstream.astype(x.dtype, copy=False)

    grad_bias = up.sum(axis=(0, 2, 3))
    grad_weight = np.tensordot(up, win, axes=([0, 2, 3], [0, 2, 3]))

    # (n, oh, ow, in_c, kh, kw)
    grad_cols = np.tensordot(up, w, axes=([1], [0]))
    p, s = params.padding, params.stride
    kh, kw = params.kernel
    hp, wp = x.shape[2] + 2 * p, x.shape[3] + 2 * p
    grad_pad = np.zeros((n, x.shape[1], hp, wp), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            grad_pad[:, :, i : i + s * oh : s, j : j + s * ow : s] += grad_cols[
                ..., i, j
            ].transpose(0, 3, 1, 2)
    grad_input = grad_pad[:, :, p : hp - p, p : wp - p]
    return np.ascontiguousarray(grad_input), grad_weight, grad_bias


def leaky_relu(x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x > 0, x, x * x.dtype.type(slope))


def leaky_relu_backward(x: np.ndarray, upstream: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return upstream * np.where(x > 0, 1, slope).astype(upstream.dtype)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    # split on sign so exp never overflows
    pos = x >= 0
    z = np.exp(-np.abs(x))
    return np.where(pos, 1 / (1 + z), z / (1 + z)).astype(x.dtype, copy=False)


def sigmoid_backward(y: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Backward of sigmoid given its *output* ``y``."""
    return upstream * y * (1 - y)


def elementwise_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"cannot add tensors of shapes {a.shape} and {b.shape}")
    return a + b


def elementwise_add_backward(upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return upstream, upstream


@dataclass
class BatchNormCache:
    x_hat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    training: bool


def batch_norm_forward(x: np.ndarray, state: BatchNormState) -> tuple[np.ndarray, BatchNormCache]:
    """Per-channel normalization; updates running stats in training mode."""
    if x.ndim != 4:
        raise ValueError(f"batch_norm input must be rank 4, got shape {x.shape}")
    n, c, h, w = x.shape
    if c != state.channels:
        raise ValueError(f"channel mismatch: input has {c}, state has {state.channels}")
    m = n * h * w
    if m == 0:
        raise ValueError("batch_norm needs a non-empty (n, h, w) extent")
    dt = x.dtype
    if state.training:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        unbiased = var * (m / (m - 1)) if m > 1 else var
        mom = state.momentum
        state.running_mean[...] = (1 - mom) * state.running_mean + mom * mean
        state.running_var[...] = (1 - mom) * state.running_var + mom * unbiased
    else:
        mean = state.running_mean.astype(dt)
        var = state.running_var.astype(dt)
    inv_std = (1.0 / np.sqrt(var + state.epsilon)).astype(dt)
    x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    gamma = state.gamma.astype(dt, copy=False)
    out = x_hat * gamma[None, :, None, None] + state.beta.astype(dt)[None, :, None, None]
    return out, BatchNormCache(x_hat, inv_std, gamma, state.training)


def batch_norm_backward(
    upstream: np.ndarray, cache: BatchNormCache
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(grad_input, grad_gamma, grad_beta)``."""
    axes = (0, 2, 3)
    grad_beta = upstream.sum(axis=axes)
    grad_gamma = (upstream * cache.x_hat).sum(axis=axes)
    g = upstream * cache.gamma[None, :, None, None]
    scale = cache.inv_std[None, :, None, None]
    if not cache.training:
        return g * scale, grad_gamma, grad_beta
    m = upstream.shape[0] * upstream.shape[2] * upstream.shape[3]
    gx = (
        g
        - g.sum(axis=axes, keepdims=True) / m
        - cache.x_hat * (g * cache.x_hat).sum(axis=axes, keepdims=True) / m
    ) * scale
    return gx, grad_gamma, grad_beta


def grad_check(
    forward: Callable[[np.ndarray], np.ndarray],
    backward: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x: np.ndarray,
    step: float = 1e-3,
    n_directions: int = 8,
    seed: int = 8191,
) -> float:
    """Max relative error between analytic and central-difference derivatives.

    A random cotangent ``w`` reduces ``forward`` to the scalar ``<w, f(x)>``;
    ``backward(x, w)`` must return its gradient. Inputs of up to 64 elements
    get a full central-difference gradient, compared in the max-norm; larger
    ones are probed along random unit directions.
    """
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    y = np.asarray(forward(x))
    w = rng.standard_normal(y.shape)
    grad = np.asarray(backward(x, w), dtype=np.float64)
    if grad.shape != x.shape:
        raise ValueError(f"backward returned shape {grad.shape}, expected {x.shape}")

    def scalar(z):
        return float(np.sum(w * np.asarray(forward(z), dtype=np.float64)))

    if x.size <= 64:
        # full numerical gradient, compared in the max-norm so that a tiny
        # component's truncation error is judged against the gradient's scale
        numeric = np.zeros(x.size)
        for k in range(x.size):
            e = np.zeros(x.size)
            e[k] = step
            e = e.reshape(x.shape)
            numeric[k] = (scalar(x + e) - scalar(x - e)) / (2 * step)
        analytic = grad.reshape(-1)
        denom = max(np.abs(numeric).max(), np.abs(analytic).max())
        return float(np.abs(numeric - analytic).max() / denom) if denom > 1e-10 else 0.0

    worst = 0.0
    for _ in range(n_directions):
        d = rng.standard_normal(x.shape)
        d /= np.linalg.norm(d)
        numeric = (scalar(x + step * d) - scalar(x - step * d)) / (2 * step)
        analytic = float(np.sum(grad * d))
        denom = max(abs(numeric), abs(analytic))
        if denom < 1e-10:
            continue
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
