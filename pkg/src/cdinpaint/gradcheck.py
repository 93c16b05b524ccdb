"""Finite-difference gradient checks for every differentiable piece."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .compression_net import Network, build_network, init_parameters, default_spec
from .gated_layers import GatedConvLayer
from .losses import l1_loss, l1_loss_backward, variance_loss, variance_loss_backward
from .tensor_core import (
    BatchNormState,
    ConvParams,
    batch_norm_backward,
    batch_norm_forward,
    conv2d_backward,
    conv2d_forward,
    grad_check,
)

DEFAULT_TOL = 1e-3
NETWORK_TOL = 5e-3


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float
    seconds: float

    @property
    def ok(self) -> bool:
        return self.error < self.tol

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{self.name:<16} max_rel_err={self.error:.3e} tol={self.tol:.0e} {status}"


def _conv(rng, out_c, in_c, k, stride=1, padding=None):
    return ConvParams(
        rng.standard_normal((out_c, in_c, k, k)),
        rng.standard_normal(out_c) * 0.1,
        stride,
        k // 2 if padding is None else padding,
    )


def check_conv2d(seed: int = 0, step: float = 1e-3) -> float:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, 5, 5))
    p = _conv(rng, 3, 2, 3, padding=1)
    worst = grad_check(lambda z: conv2d_forward(z, p), lambda z, w: conv2d_backward(z, p, w)[0], x, step)

    def with_weight(wt):
        return ConvParams(wt, p.bias, p.stride, p.padding)

    worst = max(
        worst,
        grad_check(
            lambda wt: conv2d_forward(x, with_weight(wt)),
            lambda wt, up: conv2d_backward(x, with_weight(wt), up)[1],
            p.weight,
            step,
        ),
    )
    worst = max(
        worst,
        grad_check(
            lambda b: conv2d_forward(x, ConvParams(p.weight, b, p.stride, p.padding)),
            lambda b, up: conv2d_backward(x, ConvParams(p.weight, b, p.stride, p.padding), up)[2],
            p.bias,
            step,
        ),
    )
    return worst


def check_batch_norm(seed: int = 0, step: float = 1e-3) -> float:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 2, 3, 3))
    state = BatchNormState.create(2, np.float64)
    state.gamma[...] = rng.uniform(0.5, 1.5, 2)
    state.beta[...] = rng.standard_normal(2)

    def fwd(z):
        return batch_norm_forward(z, state)[0]

    def bwd(z, up):
        _, cache = batch_norm_forward(z, state)
        return batch_norm_backward(up, cache)[0]

    worst = grad_check(fwd, bwd, x, step)

    def fwd_gamma(g):
        saved = state.gamma.copy()
        state.gamma[...] = g
        out = batch_norm_forward(x, state)[0]
        state.gamma[...] = saved
        return out

    def bwd_gamma(g, up):
        saved = state.gamma.copy()
        state.gamma[...] = g
        _, cache = batch_norm_forward(x, state)
        state.gamma[...] = saved
        return batch_norm_backward(up, cache)[1]

    return max(worst, grad_check(fwd_gamma, bwd_gamma, state.gamma.copy(), step))


def _layer_param_check(
    params: dict[str, np.ndarray],
    grads: Callable[[], dict[str, np.ndarray]],
    run: Callable[[], np.ndarray],
    back: Callable[[np.ndarray], None],
    zero: Callable[[], None],
    step: float,
    n_directions: int = 3,
) -> float:
    worst = 0.0
    for name, p in params.items():
        orig = p.copy()

        def fwd(v):
            p[...] = v
            return run()

        def bwd(v, up):
            p[...] = v
            run()
            zero()
            back(up)
            return grads()[name].copy()

        worst = max(worst, grad_check(fwd, bwd, orig, step, n_directions=n_directions))
        p[...] = orig
    return worst


def check_gated(seed: int = 0, step: float = 1e-5) -> float:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, 8, 8))
    m = rng.uniform(0, 1, (1, 1, 8, 8))
    bn = BatchNormState.create(3, np.float64)
    layer = GatedConvLayer(_conv(rng, 3, 2, 3), _conv(rng, 3, 1, 3), batch_norm=bn)
    g_up = rng.standard_normal((1, 3, 8, 8))

    def fwd_x(z):
        return layer.forward(z, m)[0]

    def bwd_x(z, up):
        layer.forward(z, m)
        return layer.backward(up)[0]

    def fwd_m(z):
        out, gate = layer.forward(x, z)
        return out + gate * g_up  # exercise the mask-stream gradient too

    def bwd_m(z, up):
        layer.forward(x, z)
        return layer.backward(up, up * g_up)[1]

    worst = max(grad_check(fwd_x, bwd_x, x, step), grad_check(fwd_m, bwd_m, m, step))
    worst = max(
        worst,
        _layer_param_check(
            layer.parameters(),
            lambda: layer.grads,
            lambda: layer.forward(x, m)[0],
            layer.backward,
            layer.zero_grad,
            step,
        ),
    )
    return worst


def check_l1(seed: int = 0, step: float = 1e-3) -> float:
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, (1, 3, 4, 4))
    b = rng.uniform(0, 1, (1, 3, 4, 4))
    # keep every |a - b| well above the step so no kink is straddled
    b = np.where(np.abs(a - b) < 0.05, a + 0.1, b)
    return grad_check(lambda z: np.array(l1_loss(z, b)), lambda z, up: up * l1_loss_backward(z, b), a, step)


def check_variance(seed: int = 0, step: float = 1e-3) -> float:
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (1, 3, 6, 6))
    return grad_check(lambda z: np.array(variance_loss(z)), lambda z, up: up * variance_loss_backward(z), x, step)


def shrunk_network(seed: int = 0, channels=(4, 8, 8)) -> Network:
    """Default depth and kernels at reduced width, float64, random biases."""
    net = build_network(default_spec(channels), dtype=np.float64)
    init_parameters(net, seed)
    rng = np.random.default_rng(seed + 1)
    # off-zero biases keep pre-activations away from the leaky-ReLU kink
    for name, p in net.parameters().items():
        if name.endswith("bias"):
            p[...] = rng.standard_normal(p.shape) * 0.1
    return net


def check_network(seed: int = 0, step: float = 1e-5) -> float:
    rng = np.random.default_rng(seed)
    net = shrunk_network(seed)
    img = rng.uniform(0, 1, (2, 3, 32, 32))
    mask = np.ones((2, 1, 32, 32))
    mask[0, :, :, :10] = 0
    mask[1, :, :10, :] = 0

    def fwd(z):
        return net.forward(z, mask)

    def bwd(z, up):
        net.forward(z, mask)
        net.zero_grad()
        return net.backward(up)

    worst = grad_check(fwd, bwd, img, step)
    worst = max(
        worst,
        _layer_param_check(
            net.parameters(),
            net.grads,
            lambda: net.forward(img, mask),
            net.backward,
            net.zero_grad,
            step,
            n_directions=1,
        ),
    )
    return worst


SUITE: list[tuple[str, Callable[[], float], float]] = [
    ("conv2d", check_conv2d, DEFAULT_TOL),
    ("batch_norm", check_batch_norm, DEFAULT_TOL),
    ("gated_forward", check_gated, DEFAULT_TOL),
    ("l1_loss", check_l1, DEFAULT_TOL),
    ("variance_loss", check_variance, DEFAULT_TOL),
    ("network", check_network, NETWORK_TOL),
]


def run_suite() -> list[CheckResult]:
    results = []
    for name, fn, tol in SUITE:
        t0 = time.perf_counter()
        err = fn()
        results.append(CheckResult(name, err, tol, time.perf_counter() - t0))
    return results
