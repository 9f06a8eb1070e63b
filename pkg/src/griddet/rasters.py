"""Raster reading and writing.

Two containers are supported: PNG (lossless, via Pillow) for real imagery
and plain-text PPM (the ASCII ``P3`` variant) for tiny hand-editable test
fixtures. Arrays are (H, W, 3) uint8 throughout.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["read_raster", "write_raster", "raster_size"]


def _to_rgb_uint8(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ValueError("raster arrays must be uint8")
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got shape {arr.shape}")
    return arr


def _read_ppm(path: Path) -> np.ndarray:
    tokens: list[str] = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P3":
        raise ValueError(f"{path}: not a plain (P3) PPM file")
    if len(tokens) < 4:
        raise ValueError(f"{path}: truncated PPM header")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    values = tokens[4:]
    if len(values) != w * h * 3:
        raise ValueError(
            f"{path}: expected {w * h * 3} samples, found {len(values)}"
        )
    arr = np.array([int(v) for v in values], dtype=np.int64)
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError(f"{path}: sample outside [0, 255]")
    return arr.reshape(h, w, 3).astype(np.uint8)


def _write_ppm(path: Path, arr: np.ndarray) -> None:
    h, w, _ = arr.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P3\n{w} {h}\n255\n")
        for row in arr:
            fh.write(" ".join(str(int(v)) for v in row.reshape(-1)))
            fh.write("\n")


def read_raster(path: str | Path) -> np.ndarray:
    """Read a PNG or plain-PPM raster as an (H, W, 3) uint8 array."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return _read_ppm(path)
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def write_raster(path: str | Path, arr: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as PNG or plain-PPM by extension."""
    path = Path(path)
    arr = _to_rgb_uint8(arr)
    if path.suffix.lower() == ".ppm":
        _write_ppm(path, arr)
        return
    from PIL import Image

    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def raster_size(path: str | Path) -> tuple[int, int]:
    """Return (width, height) without decoding the full image when possible."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return _read_ppm(path).shape[1::-1]
    from PIL import Image

    with Image.open(path) as img:
        return img.size
