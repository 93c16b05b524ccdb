"""Thumbnail-to-full-resolution expansion by similar texture selection.

Images here are (h, w, 3) float arrays in [0, 1]; masks are (h, w) with 1 for
valid pixels. Pixel distance is the *sum* of absolute RGB differences, so the
finetune threshold lives on a 0..3 scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_THRESHOLD = 0.15


@dataclass(frozen=True)
class SelectionConfig:
    block: int = 8
    reference_mask: np.ndarray | None = None  # (lr_h, lr_w) binary, restricts candidates


@dataclass
class ReferencePack:
    """Everything selection mode needs besides the thumbnail itself."""

    lr_reference: np.ndarray
    hr_reference: np.ndarray
    damaged: np.ndarray
    mask: np.ndarray
    reference_mask: np.ndarray | None = None


def _check_image(img: np.ndarray, name: str):
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name} must have shape (h, w, 3), got {img.shape}")


def pixel_loss(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sum over RGB of absolute differences, in float64."""
    d = np.abs(np.asarray(a, np.float64) - np.asarray(b, np.float64))
    return d[..., 0] + d[..., 1] + d[..., 2]


def block_mean(image: np.ndarray, block: int) -> np.ndarray:
    """Box-average (h, w, c) image into (h/block, w/block, c)."""
    h, w, c = image.shape
    if h % block or w % block:
        raise ValueError(f"{h}x{w} image not divisible into {block}x{block} blocks")
    blocks = image.astype(np.float64).reshape(h // block, block, w // block, block, c)
    return blocks.mean(axis=(1, 3)).astype(image.dtype)


def _candidate_mask(lr_reference: np.ndarray, cfg: SelectionConfig) -> np.ndarray | None:
    if cfg.reference_mask is None:
        return None
    ref_mask = np.asarray(cfg.reference_mask).astype(bool)
    if ref_mask.shape != lr_reference.shape[:2]:
        raise ValueError(f"reference_mask shape {ref_mask.shape} != thumbnail {lr_reference.shape[:2]}")
    if not ref_mask.any():
        raise ValueError("reference_mask leaves no candidate pixels")
    return ref_mask


def find_similar_pixel(
    lr_output: np.ndarray, lr_reference: np.ndarray, x: int, y: int, cfg: SelectionConfig = SelectionConfig()
) -> tuple[int, int]:
    """Exhaustive scan for the reference pixel closest to ``lr_output[x, y]``.

    Ties go to the first candidate in row-major order.
    """
    _check_image(lr_output, "lr_output")
    _check_image(lr_reference, "lr_reference")
    h, w = lr_output.shape[:2]
    if not (0 <= x < h and 0 <= y < w):
        raise IndexError(f"pixel ({x}, {y}) outside {h}x{w} thumbnail")
    allowed = _candidate_mask(lr_reference, cfg)
    p = [float(v) for v in lr_output[x, y]]
    best, best_ij = np.inf, None
    rh, rw = lr_reference.shape[:2]
    for i in range(rh):
        for j in range(rw):
            if allowed is not None and not allowed[i, j]:
                continue
            q = lr_reference[i, j]
            d = abs(p[0] - float(q[0])) + abs(p[1] - float(q[1])) + abs(p[2] - float(q[2]))
            if d < best:
                best, best_ij = d, (i, j)
    return best_ij


def nearest_indices(
    lr_output: np.ndarray, lr_reference: np.ndarray, cfg: SelectionConfig = SelectionConfig()
) -> np.ndarray:
    """Vectorized :func:`find_similar_pixel` for every thumbnail pixel.

    Returns an (h, w, 2) int array of (i, j) matches.
    """
    _check_image(lr_output, "lr_output")
    _check_image(lr_reference, "lr_reference")
    allowed = _candidate_mask(lr_reference, cfg)
    h, w = lr_output.shape[:2]
    rh, rw = lr_reference.shape[:2]
    out = lr_output.reshape(-1, 1, 3)
    ref = lr_reference.reshape(1, -1, 3)
    dist = pixel_loss(out, ref)  # (h*w, rh*rw)
    if allowed is not None:
        dist[:, ~allowed.reshape(-1)] = np.inf
    flat = np.argmin(dist, axis=1)  # first minimum == row-major tie-break
    return np.stack(np.divmod(flat, rw), axis=-1).reshape(h, w, 2)


def select_textures(
    lr_output: np.ndarray,
    lr_reference: np.ndarray,
    hr_reference: np.ndarray,
    cfg: SelectionConfig = SelectionConfig(),
) -> np.ndarray:
    """Copy, for each thumbnail pixel, the high-res block of its closest reference pixel."""
    _check_image(hr_reference, "hr_reference")
    b = cfg.block
    h, w = lr_output.shape[:2]
    if hr_reference.shape[:2] != (lr_reference.shape[0] * b, lr_reference.shape[1] * b):
        raise ValueError(
            f"hr_reference {hr_reference.shape[:2]} is not {b}x the lr_reference {lr_reference.shape[:2]}"
        )
    idx = nearest_indices(lr_output, lr_reference, cfg)
    ref_blocks = hr_reference.reshape(lr_reference.shape[0], b, lr_reference.shape[1], b, 3)
    chosen = ref_blocks[idx[..., 0], :, idx[..., 1]]  # (h, w, b, b, 3)
    return chosen.transpose(0, 2, 1, 3, 4).reshape(h * b, w * b, 3)


def _bilinear_sample(image: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample (h, w, c) image at fractional row/col coordinates, clamped to the edge."""
    h, w = image.shape[:2]
    rows = np.clip(rows, 0, h - 1)
    cols = np.clip(cols, 0, w - 1)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None, None]
    fc = (cols - c0)[None, :, None]
    img = image.astype(np.float64)
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bottom = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr) + bottom * fr


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int, half_pixel: bool = True) -> np.ndarray:
    """Bilinear resize of an (h, w, c) image.

    ``half_pixel`` aligns pixel centres (upsampling convention); otherwise output
    pixel ``k`` samples source coordinate ``k * in / out``.
    """
    h, w = image.shape[:2]
    rows = np.arange(out_h, dtype=np.float64)
    cols = np.arange(out_w, dtype=np.float64)
    if half_pixel:
        rows = (rows + 0.5) * h / out_h - 0.5
        cols = (cols + 0.5) * w / out_w - 0.5
    else:
        rows = rows * h / out_h
        cols = cols * w / out_w
    return _bilinear_sample(image, rows, cols).astype(image.dtype)


def stretch_damaged(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Resample the bounding box of the valid region over the whole frame."""
    _check_image(image, "image")
    if mask.shape != image.shape[:2]:
        raise ValueError(f"mask {mask.shape} does not match image {image.shape[:2]}")
    valid = np.asarray(mask) > 0
    if not valid.any():
        raise ValueError("mask has no valid pixels to stretch")
    rows = np.flatnonzero(valid.any(axis=1))
    cols = np.flatnonzero(valid.any(axis=0))
    crop = image[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    if crop.shape[:2] == image.shape[:2]:
        return image.copy()
    return resize_bilinear(crop, image.shape[0], image.shape[1], half_pixel=False)


def finetune(hr_output: np.ndarray, stretched: np.ndarray, t: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Take the stretched pixel wherever it is closer than ``t`` to the output."""
    if hr_output.shape != stretched.shape:
        raise ValueError(f"shape mismatch: {hr_output.shape} vs {stretched.shape}")
    if t < 0:
        raise ValueError(f"threshold must be non-negative, got {t}")
    take = pixel_loss(hr_output, stretched) < t
    return np.where(take[..., None], stretched, hr_output)


def upscale_baseline(lr: np.ndarray, factor: int = 8) -> np.ndarray:
    """Bilinear x``factor`` upscaling, standing in for a learned super-resolution net."""
    _check_image(lr, "lr")
    return resize_bilinear(lr, lr.shape[0] * factor, lr.shape[1] * factor, half_pixel=True)


def reference_from_truth(truth: np.ndarray, damaged: np.ndarray, mask: np.ndarray, block: int = 8) -> ReferencePack:
    """Reference pack that consults the ground-truth image."""
    return ReferencePack(block_mean(truth, block), truth, damaged, mask)


def reference_from_damaged(damaged: np.ndarray, mask: np.ndarray, block: int = 8) -> ReferencePack:
    """Reference pack built only from fully valid blocks of the damaged input."""
    h, w = mask.shape
    valid_blocks = (np.asarray(mask) > 0).reshape(h // block, block, w // block, block).all(axis=(1, 3))
    hole_free = damaged * (np.asarray(mask) > 0)[..., None]
    return ReferencePack(block_mean(hole_free, block), hole_free, damaged, mask, valid_blocks)


def decompress(
    lr_output: np.ndarray,
    references: ReferencePack | None = None,
    mode: str = "selection",
    t: float = DEFAULT_THRESHOLD,
    block: int = 8,
) -> np.ndarray:
    """Expand a thumbnail by texture selection plus finetune, or by bilinear upscaling."""
    if mode == "baseline":
        return upscale_baseline(lr_output, block)
    if mode != "selection":
        raise ValueError(f"mode must be 'selection' or 'baseline', got {mode!r}")
    if references is None:
        raise ValueError("selection mode needs reference images")
    cfg = SelectionConfig(block, references.reference_mask)
    hr = select_textures(lr_output, references.lr_reference, references.hr_reference, cfg)
    stretched = stretch_damaged(references.damaged, references.mask)
    return finetune(hr, stretched.astype(hr.dtype), t)
