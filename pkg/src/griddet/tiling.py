"""Tile production from large labeled mosaics.

Two slicing strategies feed the detector's fixed-size inputs: a sequential
sweep on a stride grid (partial edge tiles are discarded) and one tile per
annotation centered on it, which produces heavily overlapping content and
doubles as augmentation. Tiles carry their annotations translated into
tile-local coordinates; a seeded shuffle splits them into train/dev/test.

Tile manifests are JSON lines, one record per tile:
``{mosaic_id, x0, y0, size, split, annotations: [{class_id, x, y[, w, h]}]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import ObjectAnnotation
from .rasters import raster_size, read_raster

__all__ = [
    "Mosaic",
    "TileIndex",
    "CountTable",
    "slice_sequential",
    "slice_around_objects",
    "split_dataset",
    "count_table",
    "write_manifest",
    "read_manifest",
    "write_count_csv",
]


@dataclass
class Mosaic:
    """A large raster identified by id; pixels are read lazily if at all.

    Slicing only needs the dimensions, so a Mosaic may be constructed with
    no pixel source; ``read_tile`` then raises.
    """

    id: str
    width: int
    height: int
    pixels: np.ndarray | None = None
    path: Path | None = None

    @classmethod
    def from_array(cls, mosaic_id: str, pixels: np.ndarray) -> "Mosaic":
        pixels = np.asarray(pixels)
        return cls(
            id=mosaic_id,
            width=pixels.shape[1],
            height=pixels.shape[0],
            pixels=pixels,
        )

    @classmethod
    def from_file(cls, mosaic_id: str, path: str | Path) -> "Mosaic":
        path = Path(path)
        w, h = raster_size(path)
        return cls(id=mosaic_id, width=w, height=h, path=path)

    def read_tile(self, x0: int, y0: int, size: int) -> np.ndarray:
        if self.pixels is None:
            if self.path is None:
                raise ValueError(f"mosaic {self.id!r} has no pixel source")
            self.pixels = read_raster(self.path)
        if not (0 <= x0 and 0 <= y0 and x0 + size <= self.width and y0 + size <= self.height):
            raise ValueError(
                f"tile ({x0}, {y0}, {size}) outside mosaic {self.width}x{self.height}"
            )
        return self.pixels[y0 : y0 + size, x0 : x0 + size]


@dataclass
class TileIndex:
    """One tile: its window into the mosaic plus tile-local annotations."""

    mosaic_id: str
    x0: int
    y0: int
    size: int
    annotations: list[ObjectAnnotation] = field(default_factory=list)
    split: str = ""


def _annotations_in_window(
    annotations: list[ObjectAnnotation], x0: int, y0: int, size: int
) -> list[ObjectAnnotation]:
    out = []
    for a in annotations:
        if x0 <= a.x < x0 + size and y0 <= a.y < y0 + size:
            out.append(
                ObjectAnnotation(
                    class_id=a.class_id, x=a.x - x0, y=a.y - y0, w=a.w, h=a.h
                )
            )
    return out


def slice_sequential(
    mosaic: Mosaic,
    annotations: list[ObjectAnnotation],
    size: int,
    stride: int,
    keep_empty: bool = False,
) -> list[TileIndex]:
    """Sweep a stride grid from (0, 0), discarding partial edge tiles.

    Annotations land in every tile whose window contains them (windows
    overlap when stride < size). Tiles without annotations are dropped
    unless ``keep_empty``.
    """
    if size > min(mosaic.width, mosaic.height):
        raise ValueError("tile size exceeds mosaic dimensions")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    tiles = []
    for y0 in range(0, mosaic.height - size + 1, stride):
        for x0 in range(0, mosaic.width - size + 1, stride):
            anns = _annotations_in_window(annotations, x0, y0, size)
            if anns or keep_empty:
                tiles.append(
                    TileIndex(
                        mosaic_id=mosaic.id, x0=x0, y0=y0, size=size, annotations=anns
                    )
                )
    return tiles


def slice_around_objects(
    mosaic: Mosaic, annotations: list[ObjectAnnotation], size: int
) -> list[TileIndex]:
    """One tile per annotation, centered on it (clamped near mosaic edges).

    Every other annotation falling inside a tile's window is attached too,
    so nearby objects appear in several overlapping tiles.
    """
    if size > min(mosaic.width, mosaic.height):
        raise ValueError("tile size exceeds mosaic dimensions")
    tiles = []
    for a in annotations:
        x0 = int(round(a.x)) - size // 2
        y0 = int(round(a.y)) - size // 2
        x0 = min(max(x0, 0), mosaic.width - size)
        y0 = min(max(y0, 0), mosaic.height - size)
        tiles.append(
            TileIndex(
                mosaic_id=mosaic.id,
                x0=x0,
                y0=y0,
                size=size,
                annotations=_annotations_in_window(annotations, x0, y0, size),
            )
        )
    return tiles


def split_dataset(
    tiles: list[TileIndex],
    ratios: tuple[float, float, float],
    seed: int,
) -> tuple[list[TileIndex], list[TileIndex], list[TileIndex]]:
    """Seeded shuffle, then contiguous partition with largest-remainder sizes.

    Ratios must be nonnegative and sum to 1; partitions are disjoint and
    exhaustive, and the same seed always yields the same split.
    """
    ratios_arr = np.asarray(ratios, dtype=np.float64)
    if len(ratios) != 3 or (ratios_arr < 0).any():
        raise ValueError("ratios must be three nonnegative numbers")
    if abs(ratios_arr.sum() - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    nonzero = int((ratios_arr > 0).sum())
    if len(tiles) < nonzero:
        raise ValueError(
            f"{len(tiles)} tiles cannot fill {nonzero} nonempty partitions"
        )
    n = len(tiles)
    ideal = ratios_arr * n
    sizes = np.floor(ideal).astype(np.int64)
    remainder = ideal - sizes
    # Largest remainders get the leftover slots; ties to the earlier partition.
    for idx in sorted(range(3), key=lambda i: (-remainder[i], i))[: n - int(sizes.sum())]:
        sizes[idx] += 1
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [tiles[i] for i in order]
    a, b = int(sizes[0]), int(sizes[0] + sizes[1])
    return shuffled[:a], shuffled[a:b], shuffled[b:]


# ---------------------------------------------------------------------------
# Count tables (per class, per source)
# ---------------------------------------------------------------------------


@dataclass
class CountTable:
    """Per-class, per-source annotation tallies with total row/column."""

    class_names: list[str]
    sources: list[str]
    counts: np.ndarray  # (num_classes, num_sources) int64

    @property
    def class_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def source_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def grand_total(self) -> int:
        return int(self.counts.sum())

    def top_total(self, n: int) -> int:
        """Sum of the n largest class totals (e.g. a top-3 sub-dataset size)."""
        totals = sorted((int(t) for t in self.class_totals), reverse=True)
        return sum(totals[:n])


def count_table(
    annotations_by_source: dict[str, list[ObjectAnnotation]],
    class_names: list[str],
) -> CountTable:
    """Tally annotations per class and source; class ids index class_names."""
    sources = list(annotations_by_source.keys())
    counts = np.zeros((len(class_names), len(sources)), dtype=np.int64)
    for s, source in enumerate(sources):
        for a in annotations_by_source[source]:
            if not 0 <= a.class_id < len(class_names):
                raise ValueError(
                    f"class_id {a.class_id} outside class table of size {len(class_names)}"
                )
            counts[a.class_id, s] += 1
    return CountTable(class_names=list(class_names), sources=sources, counts=counts)


def write_count_csv(path: str | Path, table: CountTable) -> None:
    """CSV layout: one row per class with per-source counts, then a totals row."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class"] + table.sources + ["total"])
        for i, name in enumerate(table.class_names):
            writer.writerow(
                [name]
                + [int(v) for v in table.counts[i]]
                + [int(table.class_totals[i])]
            )
        writer.writerow(
            ["total"]
            + [int(v) for v in table.source_totals]
            + [table.grand_total]
        )


# ---------------------------------------------------------------------------
# Tile manifest (JSON lines)
# ---------------------------------------------------------------------------


def _annotation_to_obj(a: ObjectAnnotation) -> dict:
    obj = {"class_id": a.class_id, "x": a.x, "y": a.y}
    if a.has_box:
        obj["w"] = a.w
        obj["h"] = a.h
    return obj


def write_manifest(path: str | Path, tiles: list[TileIndex]) -> None:
    """Write tiles as JSON lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in tiles:
            record = {
                "mosaic_id": t.mosaic_id,
                "x0": t.x0,
                "y0": t.y0,
                "size": t.size,
                "split": t.split,
                "annotations": [_annotation_to_obj(a) for a in t.annotations],
            }
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")


def read_manifest(path: str | Path) -> list[TileIndex]:
    """Read a JSON-lines tile manifest."""
    tiles = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                tiles.append(
                    TileIndex(
                        mosaic_id=rec["mosaic_id"],
                        x0=int(rec["x0"]),
                        y0=int(rec["y0"]),
                        size=int(rec["size"]),
                        split=rec.get("split", ""),
                        annotations=[
                            ObjectAnnotation(
                                class_id=int(a["class_id"]),
                                x=float(a["x"]),
                                y=float(a["y"]),
                                w=float(a["w"]) if "w" in a else None,
                                h=float(a["h"]) if "h" in a else None,
                            )
                            for a in rec["annotations"]
                        ],
                    )
                )
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return tiles
