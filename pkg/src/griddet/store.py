"""Line-oriented persistence for predictions, results and loss curves.

Predictions are JSON lines, one object per line, so stores can be diffed,
streamed and concatenated. Results are a single sorted-key JSON object.
Floats are serialized with Python's shortest round-tripping repr, so every
file read back through its reader reproduces the original values exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .codec import Detection
from .evaluation import EvaluationResult

__all__ = [
    "PredictionRecord",
    "write_predictions",
    "read_predictions",
    "predictions_to_detections",
    "results_to_dict",
    "write_results",
    "read_results",
    "write_loss_curve",
    "read_loss_curve",
]


@dataclass(frozen=True)
class PredictionRecord:
    """One stored detection, tagged with the model and run that produced it."""

    image_id: str
    class_id: int
    score: float
    x: float
    y: float
    w: float | None = None
    h: float | None = None
    model_tag: str = ""
    run_id: str = ""

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


def write_predictions(path: str | Path, records: list[PredictionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {
                "image_id": r.image_id,
                "class_id": r.class_id,
                "score": r.score,
                "x": r.x,
                "y": r.y,
            }
            if r.w is not None:
                obj["w"] = r.w
            if r.h is not None:
                obj["h"] = r.h
            obj["model_tag"] = r.model_tag
            obj["run_id"] = r.run_id
            fh.write(json.dumps(obj, sort_keys=True))
            fh.write("\n")


def read_predictions(path: str | Path) -> list[PredictionRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(
                    PredictionRecord(
                        image_id=obj["image_id"],
                        class_id=int(obj["class_id"]),
                        score=float(obj["score"]),
                        x=float(obj["x"]),
                        y=float(obj["y"]),
                        w=float(obj["w"]) if "w" in obj else None,
                        h=float(obj["h"]) if "h" in obj else None,
                        model_tag=obj.get("model_tag", ""),
                        run_id=obj.get("run_id", ""),
                    )
                )
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return records


def predictions_to_detections(records: list[PredictionRecord]) -> list[Detection]:
    return [
        Detection(
            image_id=r.image_id,
            class_id=r.class_id,
            score=r.score,
            x=r.x,
            y=r.y,
            w=r.w,
            h=r.h,
        )
        for r in records
    ]


def results_to_dict(result: EvaluationResult) -> dict:
    """Flatten an EvaluationResult into the results-file JSON object."""
    return {
        "classes": list(result.class_ids),
        "map": result.map,
        "per_class_ap": {str(c): result.curves[c].ap for c in result.class_ids},
        "pr_curves": {
            str(c): {
                "recall": [float(v) for v in result.curves[c].recall],
                "precision": [float(v) for v in result.curves[c].precision],
                "ap": result.curves[c].ap,
            }
            for c in result.class_ids
        },
        "per_class_rmse": {
            str(c): result.per_class_rmse[c] for c in result.class_ids
        },
        "mean_rmse": result.mean_rmse,
        "num_images": len(result.counts.image_ids),
        "warnings": list(result.warnings),
    }


def write_results(path: str | Path, results: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(results, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_results(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_loss_curve(
    path: str | Path, curve: list[tuple[int, float, float, float, float]]
) -> None:
    """CSV with columns step,l_o,l_r,l_c,total, one row per training step."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "l_o", "l_r", "l_c", "total"])
        for step, l_o, l_r, l_c, total in curve:
            writer.writerow([step, repr(l_o), repr(l_r), repr(l_c), repr(total)])


def read_loss_curve(path: str | Path) -> list[tuple[int, float, float, float, float]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["step", "l_o", "l_r", "l_c", "total"]:
            raise ValueError(f"{path}: unexpected loss-curve header {header}")
        for row in reader:
            if not row:
                continue
            rows.append(
                (int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]))
            )
    return rows
