"""PNG image/mask I/O and dataset indexing."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

IMAGE_SIZE = 256


def _open(path: str | Path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, UnidentifiedImageError) as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from None
    return img


def _fit(img: Image.Image, size: int) -> Image.Image:
    """Resize the shorter side to ``size`` then centre-crop to a square."""
    w, h = img.size
    if (w, h) == (size, size):
        return img
    scale = size / min(w, h)
    nw, nh = max(size, round(w * scale)), max(size, round(h * scale))
    img = img.resize((nw, nh), Image.BILINEAR)
    left, top = (nw - size) // 2, (nh - size) // 2
    return img.crop((left, top, left + size, top + size))


def load_image(path: str | Path, size: int | None = IMAGE_SIZE) -> np.ndarray:
    """Decode a PNG to an (h, w, 3) float32 array in [0, 1]."""
    img = _open(path).convert("RGB")
    if size is not None:
        img = _fit(img, size)
    return np.asarray(img, dtype=np.float32) / 255.0


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(image, 0, 1) * 255.0 + 0.5).astype(np.uint8)


def save_image(image: np.ndarray, path: str | Path) -> None:
    """Write an (h, w, 3) or (h, w) image in [0, 1] as an 8-bit PNG (round half up)."""
    Image.fromarray(to_uint8(image)).save(path, format="PNG")


def load_mask(path: str | Path, size: int | None = IMAGE_SIZE) -> np.ndarray:
    """Decode a mask PNG: values above 127 are valid (1), the rest missing (0)."""
    img = _open(path).convert("L")
    if size is not None and img.size != (size, size):
        img = _fit(img, size)
    return (np.asarray(img) > 127).astype(np.uint8)


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def to_nchw(image: np.ndarray) -> np.ndarray:
    """(h, w, c) -> (1, c, h, w); (h, w) masks become (1, 1, h, w)."""
    if image.ndim == 2:
        image = image[..., None]
    return np.ascontiguousarray(image.transpose(2, 0, 1)[None], dtype=np.float32)


def from_nchw(tensor: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(tensor[0].transpose(1, 2, 0))


@dataclass
class DatasetIndex:
    root: Path
    paths: list[Path]
    size: int = IMAGE_SIZE
    split: str = "train"

    @classmethod
    def scan(cls, root: str | Path, size: int = IMAGE_SIZE, split: str = "train") -> "DatasetIndex":
        root = Path(root)
        if not root.is_dir():
            raise FileNotFoundError(f"dataset directory {root} does not exist")
        paths = sorted(p for p in root.rglob("*") if p.suffix.lower() == ".png")
        if not paths:
            raise ValueError(f"no PNG images under {root}")
        return cls(root, paths, size, split)

    def __len__(self):
        return len(self.paths)

    def load(self, index: int) -> np.ndarray:
        return load_image(self.paths[index], self.size)

    def batches(self, batch_size: int, order: np.ndarray | None = None):
        """Yield lists of indices; the final short batch is kept."""
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(order), batch_size):
            yield order[start : start + batch_size]
