"""Deterministic synthetic images for smoke tests and demos."""

from __future__ import annotations

import numpy as np

TEXTURE_CLASSES = ("solid", "gradient", "checkerboard", "noise")


def texture_image(kind: str, rng: np.random.Generator, size: int = 32) -> np.ndarray:
    """One (size, size, 3) image of the given texture class with random colours."""
    a = rng.uniform(0, 1, 3)
    b = rng.uniform(0, 1, 3)
    if kind == "solid":
        img = np.broadcast_to(a, (size, size, 3))
    elif kind == "gradient":
        ramp = np.linspace(0, 1, size)[None, :, None]
        img = np.broadcast_to(a * (1 - ramp) + b * ramp, (size, size, 3))
    elif kind == "checkerboard":
        cell = int(rng.integers(2, 5)) * max(1, size // 32)
        yy, xx = np.mgrid[0:size, 0:size]
        on = ((yy // cell + xx // cell) % 2).astype(bool)[..., None]
        # keep the two colours visibly apart
        b = np.where(np.abs(a - b) < 0.3, 1 - a, b)
        img = np.where(on, a, b)
    elif kind == "noise":
        img = np.clip(a + rng.normal(0, 0.25, (size, size, 3)), 0, 1)
    else:
        raise ValueError(f"unknown texture class {kind!r}")
    return np.ascontiguousarray(img, dtype=np.float32)


def texture_dataset(per_class: int = 32, size: int = 32, seed: int = 0):
    """Return ``(images, labels)`` cycling through :data:`TEXTURE_CLASSES`."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for _ in range(per_class):
        for label, kind in enumerate(TEXTURE_CLASSES):
            images.append(texture_image(kind, rng, size))
            labels.append(label)
    return images, labels


def scene_images(n: int, size: int = 32, seed: int = 0) -> np.ndarray:
    """(n, 3, size, size) images mixing smooth colour fields and flat rectangles."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    out = np.empty((n, 3, size, size), np.float32)
    for k in range(n):
        for c in range(3):
            fx, fy, px, py = rng.uniform(0.5, 2.5, 4)
            out[k, c] = 0.5 + 0.25 * np.sin(2 * np.pi * (fx * xx + px)) + 0.2 * np.cos(2 * np.pi * (fy * yy + py))
        for _ in range(3):
            y0, x0 = rng.integers(0, size - size // 4, 2)
            hh, ww = rng.integers(size // 8, size // 2, 2)
            out[k, :, y0 : y0 + hh, x0 : x0 + ww] = rng.uniform(0, 1, 3)[:, None, None]
    return np.clip(out, 0, 1)
