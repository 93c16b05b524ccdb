"""Binary hole masks: 1 marks a valid pixel, 0 a missing one."""

from __future__ import annotations

import numpy as np

SIDES = ("top", "bottom", "left", "right")
EDGE_FRACTION = 0.30


def missing_fraction(mask: np.ndarray) -> float:
    return float(np.count_nonzero(mask == 0)) / mask.size


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def edge_mask(side: str, fraction: float = EDGE_FRACTION, h: int = 256, w: int = 256) -> np.ndarray:
    """Zero a band of ``round(fraction * extent)`` rows or columns along one border."""
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}, got {side!r}")
    if not 0 <= fraction < 1:
        raise ValueError(f"edge fraction must be in [0, 1), got {fraction}")
    mask = np.ones((h, w), dtype=np.uint8)
    extent = h if side in ("top", "bottom") else w
    band = _round_half_up(fraction * extent)
    if band == 0:
        return mask
    if side == "top":
        mask[:band] = 0
    elif side == "bottom":
        mask[h - band :] = 0
    elif side == "left":
        mask[:, :band] = 0
    else:
        mask[:, w - band :] = 0
    return mask


def rect_mask(x0: int, y0: int, h_hole: int, w_hole: int, h: int = 256, w: int = 256) -> np.ndarray:
    """Zero the rectangle with top-left corner (row ``x0``, column ``y0``)."""
    if min(x0, y0, h_hole, w_hole) < 0 or x0 + h_hole > h or y0 + w_hole > w:
        raise ValueError(f"rectangle ({x0}, {y0}, {h_hole}, {w_hole}) does not fit in {h}x{w}")
    mask = np.ones((h, w), dtype=np.uint8)
    mask[x0 : x0 + h_hole, y0 : y0 + w_hole] = 0
    return mask


def _stamp_disc(mask: np.ndarray, cy: float, cx: float, r: float):
    h, w = mask.shape
    y0, y1 = max(0, int(cy - r)), min(h, int(cy + r) + 1)
    x0, x1 = max(0, int(cx - r)), min(w, int(cx + r) + 1)
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.ogrid[y0:y1, x0:x1]
    mask[y0:y1, x0:x1][(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = 0


def irregular_mask(seed: int, target_fraction: float = 0.3, h: int = 256, w: int = 256) -> np.ndarray:
    """Random thick brush strokes until the missing fraction reaches the target.

    Each stroke is a short random walk of discs with radius 4..16 px. Stamping
    stops as soon as the target is reached, so the overshoot is at most one disc.
    """
    if not 0 < target_fraction <= 0.9:
        raise ValueError(f"target fraction must be in (0, 0.9], got {target_fraction}")
    rng = np.random.default_rng(seed)
    mask = np.ones((h, w), dtype=np.uint8)
    target = int(np.ceil(target_fraction * h * w))
    while np.count_nonzero(mask == 0) < target:
        radius = rng.uniform(4, 16)
        y, x = rng.uniform(0, h), rng.uniform(0, w)
        angle = rng.uniform(0, 2 * np.pi)
        for _ in range(rng.integers(4, 12)):
            _stamp_disc(mask, y, x, radius)
            if np.count_nonzero(mask == 0) >= target:
                break
            angle += rng.normal(0, 0.6)
            step = radius * rng.uniform(0.5, 1.5)
            y = float(np.clip(y + step * np.sin(angle), 0, h - 1))
            x = float(np.clip(x + step * np.cos(angle), 0, w - 1))
    return mask


def sample_training_mask(
    seed: int | np.random.Generator, fraction: float = EDGE_FRACTION, h: int = 256, w: int = 256
) -> tuple[str, np.ndarray]:
    """Uniformly choose one of the four edge masks; returns ``(side, mask)``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    side = SIDES[int(rng.integers(4))]
    return side, edge_mask(side, fraction, h, w)
