"""Joint image and annotation affine augmentation.

One random affine transform (rotation, zoom, shear, shift, composed about
the tile center) is sampled per tile and applied both to the pixels
(bilinear resampling, out-of-tile samples filled with the per-channel mean)
and to the annotation coordinates. Box annotations transform via their four
corners, re-axis-aligned to the enclosing box. Annotations mapped outside
the tile are dropped rather than clamped.

The point-mapping convention, pinned by the rotation matrix below, is
x' = c + R(theta) Z S (p - c) + shift with
R(theta) = [[cos, sin], [-sin, cos]], Z = zoom * I, S = [[1, shear], [0, 1]].
Pixel centers sit at integer coordinates, so the tile center is
((size - 1) / 2, (size - 1) / 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .codec import ObjectAnnotation

__all__ = [
    "AffineTransform",
    "AugmentRanges",
    "sample_transform",
    "augment_tile",
]

_MIN_DETERMINANT = 1e-6
_MAX_RESAMPLES = 10


@dataclass(frozen=True)
class AffineTransform:
    """A 2x3 matrix mapping (x, y) points: p' = A @ p + t."""

    matrix: np.ndarray  # (2, 3)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"affine matrix must be 2x3, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def linear(self) -> np.ndarray:
        return self.matrix[:, :2]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:, 2]

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.linear))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 2) points of (x, y) pairs."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts @ self.linear.T + self.translation

    def inverse(self) -> "AffineTransform":
        if abs(self.determinant) < _MIN_DETERMINANT:
            raise ValueError("transform is not invertible")
        inv = np.linalg.inv(self.linear)
        t = -inv @ self.translation
        return AffineTransform(np.column_stack([inv, t]))

    @classmethod
    def from_params(
        cls,
        rotation_deg: float,
        zoom: float,
        shear: float,
        shift: tuple[float, float],
        center: tuple[float, float],
    ) -> "AffineTransform":
        theta = math.radians(rotation_deg)
        rot = np.array(
            [[math.cos(theta), math.sin(theta)], [-math.sin(theta), math.cos(theta)]]
        )
        zs = np.array([[zoom, 0.0], [0.0, zoom]]) @ np.array([[1.0, shear], [0.0, 1.0]])
        linear = rot @ zs
        c = np.asarray(center, dtype=np.float64)
        t = c - linear @ c + np.asarray(shift, dtype=np.float64)
        return cls(np.column_stack([linear, t]))


@dataclass(frozen=True)
class AugmentRanges:
    """Half-widths of the uniform sampling ranges for each component."""

    rotation_deg: float = 0.0
    zoom: float = 0.0  # zoom factor drawn from [1 - zoom, 1 + zoom]
    shear: float = 0.0
    shift_px: float = 0.0

    def __post_init__(self):
        for name in ("rotation_deg", "zoom", "shear", "shift_px"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} range must be finite and >= 0")


def sample_transform(
    ranges: AugmentRanges,
    center: tuple[float, float],
    rng: np.random.Generator,
) -> AffineTransform:
    """Draw one transform; degenerate draws are resampled a bounded number of times."""
    for _ in range(_MAX_RESAMPLES):
        t = AffineTransform.from_params(
            rotation_deg=rng.uniform(-ranges.rotation_deg, ranges.rotation_deg),
            zoom=rng.uniform(1.0 - ranges.zoom, 1.0 + ranges.zoom),
            shear=rng.uniform(-ranges.shear, ranges.shear),
            shift=(
                rng.uniform(-ranges.shift_px, ranges.shift_px),
                rng.uniform(-ranges.shift_px, ranges.shift_px),
            ),
            center=center,
        )
        if abs(t.determinant) >= _MIN_DETERMINANT:
            return t
    raise ValueError(
        f"could not sample a non-degenerate transform in {_MAX_RESAMPLES} tries"
    )


def _warp_pixels(image: np.ndarray, transform: AffineTransform) -> np.ndarray:
    """Bilinear warp; samples falling outside the tile get the channel mean."""
    inv = transform.inverse()
    # scipy maps output index (y, x) to input index: swap the xy convention.
    lin_xy = inv.linear
    matrix_yx = np.array(
        [[lin_xy[1, 1], lin_xy[1, 0]], [lin_xy[0, 1], lin_xy[0, 0]]]
    )
    offset_yx = inv.translation[::-1]
    src = np.asarray(image, dtype=np.float64)
    out = np.empty_like(src)
    for ch in range(src.shape[2]):
        out[:, :, ch] = ndimage.affine_transform(
            src[:, :, ch],
            matrix_yx,
            offset=offset_yx,
            order=1,
            mode="constant",
            cval=float(src[:, :, ch].mean()),
        )
    if np.issubdtype(np.asarray(image).dtype, np.integer):
        return np.clip(np.rint(out), 0, 255).astype(np.asarray(image).dtype)
    return out


def _transform_annotation(
    a: ObjectAnnotation, transform: AffineTransform, size: int
) -> ObjectAnnotation | None:
    if a.has_box:
        hw, hh = a.w / 2.0, a.h / 2.0
        corners = np.array(
            [
                [a.x - hw, a.y - hh],
                [a.x + hw, a.y - hh],
                [a.x - hw, a.y + hh],
                [a.x + hw, a.y + hh],
            ]
        )
        mapped = transform.apply(corners)
        lo = mapped.min(axis=0)
        hi = mapped.max(axis=0)
        cx, cy = (lo + hi) / 2.0
        if not (0 <= cx < size and 0 <= cy < size):
            return None
        return ObjectAnnotation(
            class_id=a.class_id,
            x=float(cx),
            y=float(cy),
            w=float(hi[0] - lo[0]),
            h=float(hi[1] - lo[1]),
        )
    (x, y), = transform.apply([[a.x, a.y]])
    if not (0 <= x < size and 0 <= y < size):
        return None
    return ObjectAnnotation(class_id=a.class_id, x=float(x), y=float(y))


def augment_tile(
    image: np.ndarray,
    annotations: list[ObjectAnnotation],
    ranges: AugmentRanges,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[ObjectAnnotation], AffineTransform]:
    """Apply one sampled affine transform to a square tile and its labels.

    Returns the warped image, the surviving transformed annotations, and
    the transform itself (so callers can verify or invert the mapping).
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != image.shape[1]:
        raise ValueError(f"expected a square (S, S, C) tile, got {image.shape}")
    size = image.shape[0]
    center = ((size - 1) / 2.0, (size - 1) / 2.0)
    transform = sample_transform(ranges, center, rng)
    if np.allclose(transform.matrix, np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])):
        warped = image.copy()  # identity ranges leave pixels bit-identical
    else:
        warped = _warp_pixels(image, transform)
    out_annotations = []
    for a in annotations:
        mapped = _transform_annotation(a, transform, size)
        if mapped is not None:
            out_annotations.append(mapped)
    return warped, out_annotations, transform
