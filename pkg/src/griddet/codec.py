"""Grid-relative label codec.

Annotations live in image pixel space. The detector head works on a G x G
grid of cells, each owning ``slots_per_cell`` prediction slots. This module
converts between the two representations:

* ``encode_labels`` buckets annotations into cells and rewrites coordinates
  into the cell-local frame (cell top-left is (0, 0), bottom-right is (1, 1);
  box width/height stay relative to the full image),
* ``decode_predictions`` inverts that mapping for raw prediction tensors,
  turning confident slots back into image-space detections.

Raw prediction tensors are plain numpy arrays whose last axis packs, per
slot: 2 objectness logits, ``num_classes`` class logits and ``coord_arity``
coordinates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "GridSpec",
    "ObjectAnnotation",
    "CellTargets",
    "Detection",
    "cell_of",
    "encode_labels",
    "decode_predictions",
    "perfect_predictions",
    "split_prediction_tensor",
    "normalize_image",
    "read_labels_csv",
    "write_labels_csv",
]


@dataclass(frozen=True)
class GridSpec:
    """Geometry shared by every stage of the pipeline.

    ``coord_arity`` is 2 for point labels (x, y) and 4 for boxes
    (x, y, w, h). The derived ``num_slots`` is the number of prediction
    slots per image: grid_size^2 * slots_per_cell.
    """

    image_w: int
    image_h: int
    grid_size: int
    num_classes: int
    slots_per_cell: int = 8
    coord_arity: int = 2

    def __post_init__(self):
        if self.image_w < 1 or self.image_h < 1:
            raise ValueError("image dimensions must be >= 1")
        if self.grid_size < 1:
            raise ValueError("grid_size must be >= 1")
        if self.slots_per_cell < 1:
            raise ValueError("slots_per_cell must be >= 1")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.coord_arity not in (2, 4):
            raise ValueError("coord_arity must be 2 (points) or 4 (boxes)")

    @property
    def cell_w(self) -> float:
        return self.image_w / self.grid_size

    @property
    def cell_h(self) -> float:
        return self.image_h / self.grid_size

    @property
    def num_slots(self) -> int:
        return self.grid_size * self.grid_size * self.slots_per_cell

    @property
    def tensor_depth(self) -> int:
        """Size of a slot record: objectness logits + class logits + coords."""
        return 2 + self.num_classes + self.coord_arity


@dataclass(frozen=True)
class ObjectAnnotation:
    """One labeled object in image pixel space.

    ``x, y`` is the object position (box center for box datasets); ``w, h``
    are present only for box datasets.
    """

    class_id: int
    x: float
    y: float
    w: float | None = None
    h: float | None = None

    @property
    def has_box(self) -> bool:
        return self.w is not None and self.h is not None


@dataclass(frozen=True)
class Detection:
    """A decoded image-space detection, the unit of evaluation and storage."""

    image_id: str
    class_id: int
    score: float
    x: float
    y: float
    w: float | None = None
    h: float | None = None


@dataclass
class CellTargets:
    """Slot-padded, grid-bucketed ground truth.

    Arrays are indexed (row, col, slot). Padded slots have ``present`` 0 and
    zero coordinates; ``class_ids`` is meaningful only where ``present`` is 1.
    """

    present: np.ndarray  # (G, G, k) float64 in {0, 1}
    coords: np.ndarray  # (G, G, k, r) float64
    class_ids: np.ndarray  # (G, G, k) int64

    @classmethod
    def empty(cls, spec: GridSpec) -> "CellTargets":
        g, k, r = spec.grid_size, spec.slots_per_cell, spec.coord_arity
        return cls(
            present=np.zeros((g, g, k)),
            coords=np.zeros((g, g, k, r)),
            class_ids=np.zeros((g, g, k), dtype=np.int64),
        )

    @property
    def num_present(self) -> int:
        return int(self.present.sum())


def cell_of(a: ObjectAnnotation, spec: GridSpec) -> tuple[int, int]:
    """Return the (row, col) of the grid cell owning an annotation.

    Cells are half-open: a coordinate exactly on a cell boundary belongs to
    the higher-index cell, except that the last row/column is closed so
    every in-bounds pixel has an owner.
    """
    if not (0 <= a.x < spec.image_w and 0 <= a.y < spec.image_h):
        raise ValueError(
            f"annotation at ({a.x}, {a.y}) outside image "
            f"{spec.image_w}x{spec.image_h}"
        )
    row = min(spec.grid_size - 1, int(math.floor(a.y / spec.cell_h)))
    col = min(spec.grid_size - 1, int(math.floor(a.x / spec.cell_w)))
    return row, col


def encode_labels(
    annotations: list[ObjectAnnotation], spec: GridSpec
) -> tuple[CellTargets, int]:
    """Bucket annotations into grid cells as slot-padded targets.

    Within a cell, the first ``slots_per_cell`` annotations (in input order)
    fill slots; the excess is dropped and counted. Point coordinates are
    rewritten into the cell-local unit frame; box width/height are divided
    by the image size.

    Returns the targets and the number of dropped annotations.
    """
    targets = CellTargets.empty(spec)
    fill = np.zeros((spec.grid_size, spec.grid_size), dtype=np.int64)
    dropped = 0
    for a in annotations:
        row, col = cell_of(a, spec)
        slot = fill[row, col]
        if slot >= spec.slots_per_cell:
            dropped += 1
            continue
        fill[row, col] += 1
        rel_x = (a.x - col * spec.cell_w) / spec.cell_w
        rel_y = (a.y - row * spec.cell_h) / spec.cell_h
        targets.present[row, col, slot] = 1.0
        targets.class_ids[row, col, slot] = a.class_id
        if spec.coord_arity == 2:
            targets.coords[row, col, slot] = (rel_x, rel_y)
        else:
            if not a.has_box:
                raise ValueError("coord_arity 4 requires box annotations (w, h)")
            if a.w <= 0 or a.h <= 0:
                raise ValueError("box width and height must be positive")
            targets.coords[row, col, slot] = (
                rel_x,
                rel_y,
                a.w / spec.image_w,
                a.h / spec.image_h,
            )
    return targets, dropped


def split_prediction_tensor(
    tensor: np.ndarray, spec: GridSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split the packed last axis into (objectness, class logits, coords) views."""
    if tensor.shape[-1] != spec.tensor_depth:
        raise ValueError(
            f"tensor depth {tensor.shape[-1]} does not match spec "
            f"(expected {spec.tensor_depth})"
        )
    c = spec.num_classes
    return tensor[..., :2], tensor[..., 2 : 2 + c], tensor[..., 2 + c :]


def _objectness_prob(obj_logits: np.ndarray) -> np.ndarray:
    # softmax over 2 logits == sigmoid of their difference
    return 1.0 / (1.0 + np.exp(-(obj_logits[..., 1] - obj_logits[..., 0])))


def decode_predictions(
    tensor: np.ndarray,
    spec: GridSpec,
    threshold: float,
    stop_symbol: bool = False,
    image_id: str = "",
) -> list[Detection]:
    """Turn one image's raw prediction tensor into image-space detections.

    A slot is emitted when its objectness probability (2-way softmax) is
    >= ``threshold``. With ``stop_symbol`` on, scanning a cell's slots stops
    at the first below-threshold slot; otherwise all slots are scanned.
    """
    g, k = spec.grid_size, spec.slots_per_cell
    if tensor.shape != (g, g, k, spec.tensor_depth):
        raise ValueError(
            f"prediction tensor shape {tensor.shape} does not match spec "
            f"(expected {(g, g, k, spec.tensor_depth)})"
        )
    obj, cls, crd = split_prediction_tensor(tensor, spec)
    prob = _objectness_prob(obj)
    detections: list[Detection] = []
    for row in range(g):
        for col in range(g):
            for slot in range(k):
                p = float(prob[row, col, slot])
                if p < threshold:
                    if stop_symbol:
                        break
                    continue
                rel = crd[row, col, slot]
                x = (col + rel[0]) * spec.cell_w
                y = (row + rel[1]) * spec.cell_h
                w = h = None
                if spec.coord_arity == 4:
                    w = float(rel[2] * spec.image_w)
                    h = float(rel[3] * spec.image_h)
                detections.append(
                    Detection(
                        image_id=image_id,
                        class_id=int(np.argmax(cls[row, col, slot])),
                        score=p,
                        x=float(x),
                        y=float(y),
                        w=w,
                        h=h,
                    )
                )
    return detections


def perfect_predictions(
    targets: CellTargets, spec: GridSpec, logit_scale: float = 20.0
) -> np.ndarray:
    """Build the prediction tensor a perfect model would emit for ``targets``.

    Present slots get objectness logits (-s, +s) and a one-hot class row
    scaled by ``logit_scale``; padded slots get (+s, -s). Coordinates pass
    through unchanged, so decoding inverts ``encode_labels`` exactly.
    """
    g, k = spec.grid_size, spec.slots_per_cell
    tensor = np.zeros((g, g, k, spec.tensor_depth))
    s = float(logit_scale)
    present = targets.present.astype(bool)
    tensor[..., 0] = np.where(present, -s, s)
    tensor[..., 1] = np.where(present, s, -s)
    rows, cols, slots = np.nonzero(present)
    tensor[rows, cols, slots, 2 + targets.class_ids[rows, cols, slots]] = s
    tensor[..., 2 + spec.num_classes :] = targets.coords
    return tensor


def normalize_image(img: np.ndarray) -> np.ndarray:
    """Map 8-bit pixel values into [-0.5, 0.5] via v/255 - 0.5."""
    values = np.asarray(img, dtype=np.float64)
    if values.size and (values.min() < 0 or values.max() > 255):
        raise ValueError("pixel values must lie in [0, 255]")
    return values / 255.0 - 0.5


# ---------------------------------------------------------------------------
# Label CSV (one row per annotation): image_id,class_id,x,y[,w,h]
# ---------------------------------------------------------------------------

_POINT_HEADER = ["image_id", "class_id", "x", "y"]
_BOX_HEADER = _POINT_HEADER + ["w", "h"]


def read_labels_csv(path: str | Path) -> dict[str, list[ObjectAnnotation]]:
    """Read a label CSV into {image_id: [annotations...]} preserving row order.

    The header must be exactly ``image_id,class_id,x,y`` or the same plus
    ``w,h``. Malformed rows raise ValueError with the offending line number.
    """
    labels: dict[str, list[ObjectAnnotation]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty label file, header required") from None
        if header == _POINT_HEADER:
            boxes = False
        elif header == _BOX_HEADER:
            boxes = True
        else:
            raise ValueError(
                f"{path}: line 1: bad header {header!r}, expected "
                f"{','.join(_POINT_HEADER)} or {','.join(_BOX_HEADER)}"
            )
        expected = 6 if boxes else 4
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != expected:
                raise ValueError(
                    f"{path}: line {lineno}: expected {expected} fields, got {len(row)}"
                )
            try:
                ann = ObjectAnnotation(
                    class_id=int(row[1]),
                    x=float(row[2]),
                    y=float(row[3]),
                    w=float(row[4]) if boxes else None,
                    h=float(row[5]) if boxes else None,
                )
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            labels.setdefault(row[0], []).append(ann)
    return labels


def write_labels_csv(
    path: str | Path, labels: dict[str, list[ObjectAnnotation]]
) -> None:
    """Write {image_id: [annotations...]} in the label CSV schema."""
    boxes = any(a.has_box for anns in labels.values() for a in anns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_BOX_HEADER if boxes else _POINT_HEADER)
        for image_id, anns in labels.items():
            for a in anns:
                row = [image_id, a.class_id, repr(float(a.x)), repr(float(a.y))]
                if boxes:
                    if not a.has_box:
                        raise ValueError(
                            f"annotation without box in box-mode labels: {a}"
                        )
                    row += [repr(float(a.w)), repr(float(a.h))]
                writer.writerow(row)
