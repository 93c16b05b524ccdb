"""Spectrally normalized patch discriminator."""

from __future__ import annotations

import numpy as np

from .tensor_core import ConvParams, conv2d_backward, conv2d_forward, leaky_relu, leaky_relu_backward


def _normalize(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x)
    return x / n if n > 0 else x


def spectral_normalize(
    weight: np.ndarray, u: np.ndarray, n_iter: int = 1
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Divide ``weight`` by a power-iteration estimate of its top singular value.

    ``weight`` is viewed as a (out_c, rest) matrix. Returns
    ``(normalized_weight, u, v, sigma)``; ``u`` is the updated left vector to
    carry into the next call. A zero matrix comes back unchanged with sigma 0.
    """
    mat = weight.reshape(weight.shape[0], -1).astype(np.float64)
    if not np.any(mat):
        return weight.copy(), u, np.zeros(mat.shape[1]), 0.0
    u = np.asarray(u, dtype=np.float64)
    v = np.zeros(mat.shape[1])
    for _ in range(max(1, n_iter)):
        v = _normalize(mat.T @ u)
        u = _normalize(mat @ v)
    sigma = float(u @ mat @ v)
    return (weight / sigma).astype(weight.dtype), u, v, sigma


def spectral_normalize_backward(
    grad_normalized: np.ndarray, normalized: np.ndarray, u: np.ndarray, v: np.ndarray, sigma: float
) -> np.ndarray:
    """Gradient w.r.t. the raw weight, treating ``u`` and ``v`` as constants."""
    if sigma == 0:
        return grad_normalized
    g = grad_normalized.reshape(grad_normalized.shape[0], -1).astype(np.float64)
    w_sn = normalized.reshape(normalized.shape[0], -1).astype(np.float64)
    grad = (g - np.sum(g * w_sn) * np.outer(u, v)) / sigma
    return grad.reshape(grad_normalized.shape).astype(grad_normalized.dtype)


class Discriminator:
    """5x5 stride-2 convs with leaky ReLU, then a 3x3 conv to a 1-channel score map."""

    def __init__(self, channels=(64, 128, 256), in_channels: int = 3, slope: float = 0.2, dtype=np.float32):
        self.slope = slope
        self.convs: list[ConvParams] = []
        c_in = in_channels
        for c in channels:
            self.convs.append(ConvParams(np.zeros((c, c_in, 5, 5), dtype), np.zeros(c, dtype), 2, 2))
            c_in = c
        self.convs.append(ConvParams(np.zeros((1, c_in, 3, 3), dtype), np.zeros(1, dtype), 1, 1))
        self.u = [np.full(p.out_channels, 1 / np.sqrt(p.out_channels), dtype) for p in self.convs]
        self.grads = {k: np.zeros_like(v) for k, v in self.parameters().items()}
        self._cache = None

    def init_parameters(self, seed: int):
        rng = np.random.default_rng(seed)
        for p, u in zip(self.convs, self.u):
            fan_in = int(np.prod(p.weight.shape[1:]))
            p.weight[...] = rng.standard_normal(p.weight.shape) * np.sqrt(2.0 / fan_in)
            p.bias[...] = 0
            u[...] = _normalize(rng.standard_normal(u.shape))

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for i, p in enumerate(self.convs):
            out[f"disc.conv{i}.weight"] = p.weight
            out[f"disc.conv{i}.bias"] = p.bias
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"disc.conv{i}.u": u for i, u in enumerate(self.u)}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {**self.parameters(), **self.buffers()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = self.state_dict()
        if set(state) != set(own):
            raise KeyError(f"discriminator keys differ: {sorted(set(state) ^ set(own))[:5]}")
        for k, v in state.items():
            own[k][...] = v

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0

    def forward(self, x: np.ndarray, power_iteration: bool = True) -> np.ndarray:
        """Score map for an (n, 3, h, w) batch; one power-iteration step per layer."""
        cache = []
        h = x
        last = len(self.convs) - 1
        for i, p in enumerate(self.convs):
            if power_iteration:
                w_sn, u, v, sigma = spectral_normalize(p.weight, self.u[i])
                self.u[i][...] = u
            else:
                # reuse the stored u without advancing it
                mat = p.weight.reshape(p.out_channels, -1).astype(np.float64)
                u = self.u[i]
                v = _normalize(mat.T @ u)
                sigma = float(u @ mat @ v)
                w_sn = (p.weight / sigma).astype(p.weight.dtype) if sigma else p.weight.copy()
            sn = ConvParams(w_sn.astype(h.dtype), p.bias.astype(h.dtype), p.stride, p.padding)
            pre = conv2d_forward(h, sn)
            cache.append((h, sn, pre, u.copy(), v, sigma))
            h = pre if i == last else leaky_relu(pre, self.slope)
        self._cache = cache
        return h

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        last = len(self.convs) - 1
        for i in range(last, -1, -1):
            h, sn, pre, u, v, sigma = self._cache[i]
            if i != last:
                grad = leaky_relu_backward(pre, grad, self.slope)
            grad, g_w, g_b = conv2d_backward(h, sn, grad)
            self.grads[f"disc.conv{i}.weight"] += spectral_normalize_backward(g_w, sn.weight, u, v, sigma)
            self.grads[f"disc.conv{i}.bias"] += g_b
        return grad
