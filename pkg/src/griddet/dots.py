"""Point-label extraction from dot-annotated image pairs.

Some datasets ship coordinates as a second copy of each training image with
colored dots painted on the animals, the color encoding the class. The
labels are recovered by differencing the dotted and plain images,
thresholding into a binary mask, finding connected blobs, and classifying
each blob's color against a reference table. Blobs whose color matches no
table entry within tolerance are counted as unclassified rather than
guessed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .codec import ObjectAnnotation

__all__ = [
    "DotColor",
    "DotColorTable",
    "extract_dots",
    "sea_lion_color_table",
    "read_color_table_csv",
    "write_color_table_csv",
]


@dataclass(frozen=True)
class DotColor:
    class_id: int
    name: str
    color: tuple[float, float, float]
    tolerance: tuple[float, float, float]


@dataclass(frozen=True)
class DotColorTable:
    """Reference dot colors; classes must be distinguishable beyond tolerances."""

    entries: tuple[DotColor, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("color table must not be empty")
        for i, a in enumerate(self.entries):
            for b in self.entries[i + 1 :]:
                separated = any(
                    abs(ca - cb) > ta + tb
                    for ca, cb, ta, tb in zip(a.color, b.color, a.tolerance, b.tolerance)
                )
                if not separated:
                    raise ValueError(
                        f"colors of {a.name!r} and {b.name!r} are not "
                        "distinguishable beyond their tolerances"
                    )

    def classify(self, color: np.ndarray) -> int | None:
        """Return the class of the nearest reference color within tolerance."""
        refs = np.array([e.color for e in self.entries])
        dist = np.sqrt(((refs - color) ** 2).sum(axis=1))
        best = int(np.argmin(dist))
        entry = self.entries[best]
        if all(abs(c - r) <= t for c, r, t in zip(color, entry.color, entry.tolerance)):
            return entry.class_id
        return None


def sea_lion_color_table(tolerance: float = 55.0) -> DotColorTable:
    """Approximate dot colors of the aerial sea-lion imagery.

    These reference values are estimates read off sample crops, not ground
    truth; calibrate per dataset and load a table CSV for real runs.
    """
    t = (tolerance, tolerance, tolerance)
    return DotColorTable(
        entries=(
            DotColor(0, "adult_males", (243.0, 8.0, 5.0), t),
            DotColor(1, "subadult_males", (244.0, 8.0, 242.0), t),
            DotColor(2, "adult_females", (87.0, 46.0, 10.0), t),
            DotColor(3, "juveniles", (25.0, 56.0, 176.0), t),
            DotColor(4, "pups", (38.0, 174.0, 64.0), t),
        )
    )


def extract_dots(
    dotted: np.ndarray,
    plain: np.ndarray,
    table: DotColorTable,
    min_blob: int = 4,
    diff_threshold: float = 30.0,
) -> tuple[list[ObjectAnnotation], int]:
    """Recover point annotations from a dotted/plain image pair.

    The absolute per-pixel difference is thresholded on its maximum channel;
    8-connected components of at least ``min_blob`` pixels become candidate
    dots at their centroids. Each candidate is classified by the mean color
    its pixels have in the dotted image; colors matching no table entry are
    tallied as unclassified.
    """
    dotted_arr = np.asarray(dotted, dtype=np.float64)
    plain_arr = np.asarray(plain, dtype=np.float64)
    if dotted_arr.shape != plain_arr.shape:
        raise ValueError(
            f"image pair dimensions differ: {dotted_arr.shape} vs {plain_arr.shape}"
        )
    if dotted_arr.ndim != 3:
        raise ValueError("expected (H, W, C) images")
    mask = np.abs(dotted_arr - plain_arr).max(axis=2) >= diff_threshold
    labeled, num = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    annotations: list[ObjectAnnotation] = []
    unclassified = 0
    for blob in range(1, num + 1):
        ys, xs = np.nonzero(labeled == blob)
        if ys.size < min_blob:
            continue
        color = dotted_arr[ys, xs].mean(axis=0)
        class_id = table.classify(color)
        if class_id is None:
            unclassified += 1
            continue
        annotations.append(
            ObjectAnnotation(
                class_id=class_id, x=float(xs.mean()), y=float(ys.mean())
            )
        )
    return annotations, unclassified


# ---------------------------------------------------------------------------
# Color table CSV: class_id,name,r,g,b,tol_r,tol_g,tol_b
# ---------------------------------------------------------------------------

_TABLE_HEADER = ["class_id", "name", "r", "g", "b", "tol_r", "tol_g", "tol_b"]


def read_color_table_csv(path: str | Path) -> DotColorTable:
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _TABLE_HEADER:
            raise ValueError(
                f"{path}: line 1: bad header, expected {','.join(_TABLE_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 8:
                raise ValueError(f"{path}: line {lineno}: expected 8 fields")
            try:
                entries.append(
                    DotColor(
                        class_id=int(row[0]),
                        name=row[1],
                        color=(float(row[2]), float(row[3]), float(row[4])),
                        tolerance=(float(row[5]), float(row[6]), float(row[7])),
                    )
                )
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return DotColorTable(entries=tuple(entries))


def write_color_table_csv(path: str | Path, table: DotColorTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TABLE_HEADER)
        for e in table.entries:
            writer.writerow(
                [e.class_id, e.name]
                + [repr(float(v)) for v in e.color]
                + [repr(float(v)) for v in e.tolerance]
            )
