"""Reconstruction, smoothness and adversarial losses, each with its gradient."""

from __future__ import annotations

import numpy as np


def _same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def downsample_gt(image: np.ndarray, factor: int = 8) -> np.ndarray:
    """Box-average each ``factor`` x ``factor`` block of an (n, c, h, w) image."""
    if image.ndim != 4:
        raise ValueError(f"expected (n, c, h, w), got {image.shape}")
    n, c, h, w = image.shape
    if h % factor or w % factor:
        raise ValueError(f"spatial size {h}x{w} is not divisible by {factor}")
    blocks = image.astype(np.float64).reshape(n, c, h // factor, factor, w // factor, factor)
    return blocks.mean(axis=(3, 5)).astype(image.dtype)


def l1_loss(a: np.ndarray, b: np.ndarray) -> float:
    _same_shape(a, b)
    return float(np.mean(np.abs(a.astype(np.float64) - b)))


def l1_loss_backward(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gradient of :func:`l1_loss` w.r.t. ``a`` (subgradient 0 at ties)."""
    _same_shape(a, b)
    return (np.sign(a - b) / a.size).astype(a.dtype)


def l2_loss(a: np.ndarray, b: np.ndarray) -> float:
    _same_shape(a, b)
    return float(np.mean((a.astype(np.float64) - b) ** 2))


def l2_loss_backward(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return (2 * (a - b) / a.size).astype(a.dtype)


def _local_deviation(image: np.ndarray) -> np.ndarray:
    """Interior pixel minus the mean of its 3x3 neighbourhood (itself included)."""
    if image.ndim != 4:
        raise ValueError(f"expected (n, c, h, w), got {image.shape}")
    h, w = image.shape[2:]
    if h < 3 or w < 3:
        raise ValueError(f"variance loss needs at least 3x3 pixels, got {h}x{w}")
    x = image.astype(np.float64)
    box = sum(x[:, :, i : h - 2 + i, j : w - 2 + j] for i in range(3) for j in range(3)) / 9
    return x[:, :, 1:-1, 1:-1] - box


def variance_loss(image: np.ndarray) -> float:
    return float(np.mean(_local_deviation(image) ** 2))


def variance_loss_backward(image: np.ndarray) -> np.ndarray:
    d = _local_deviation(image)
    g_d = 2 * d / d.size
    h, w = image.shape[2:]
    grad = np.zeros(image.shape, dtype=np.float64)
    grad[:, :, 1:-1, 1:-1] += g_d
    for i in range(3):
        for j in range(3):
            grad[:, :, i : h - 2 + i, j : w - 2 + j] -= g_d / 9
    return grad.astype(image.dtype)


def gan_losses(d_real: np.ndarray, d_fake: np.ndarray) -> tuple[float, float]:
    """Hinge losses ``(loss_d, loss_g)`` over patch score maps."""
    _same_shape(d_real, d_fake)
    real = d_real.astype(np.float64)
    fake = d_fake.astype(np.float64)
    loss_d = np.mean(np.maximum(0, 1 - real)) + np.mean(np.maximum(0, 1 + fake))
    loss_g = -np.mean(fake)
    return float(loss_d), float(loss_g)


def gan_losses_backward(d_real: np.ndarray, d_fake: np.ndarray):
    """Return ``(dloss_d/d_real, dloss_d/d_fake, dloss_g/d_fake)``."""
    n = d_real.size
    g_real = -((1 - d_real) > 0).astype(np.float64) / n
    g_fake = ((1 + d_fake) > 0).astype(np.float64) / n
    g_gen = -np.ones_like(d_fake) / n
    return g_real.astype(d_real.dtype), g_fake.astype(d_fake.dtype), g_gen.astype(d_fake.dtype)
