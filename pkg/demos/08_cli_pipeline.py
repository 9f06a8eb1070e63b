"""
The command-line pipeline end to end
====================================

Every stage is also a `griddet` subcommand driven by a flat key = value
config file. This script builds a tiny workspace in a temp directory and
runs: slice -> augment -> encode, extract-dots, and the toy loop
train-toy -> predict -> evaluate -> report, checking exit codes as it goes.

Reruns of any command with the same config are byte-identical.
"""

import tempfile
from pathlib import Path

import numpy as np

from griddet import ObjectAnnotation, write_labels_csv
from griddet.cli import main
from griddet.rasters import write_raster
from griddet.store import read_results

root = Path(tempfile.mkdtemp(prefix="griddet-demo-"))
print(f"workspace: {root}")


def config(name, **keys):
    path = root / name
    path.write_text("".join(f"{k} = {v}\n" for k, v in keys.items()))
    return str(path)


def run(command, cfg):
    code = main(["--config", cfg, command])
    print(f"$ griddet --config {Path(cfg).name} {command}  -> exit {code}")
    assert code in (0, 1)


# --- a small labeled mosaic ------------------------------------------------
rng = np.random.default_rng(0)
write_raster(root / "mosaic.png",
             rng.integers(40, 200, size=(96, 96, 3)).astype(np.uint8))
write_labels_csv(root / "labels.csv", {
    "m0": [ObjectAnnotation(0, 10.0, 12.0), ObjectAnnotation(1, 60.0, 20.0)],
})

run("slice", config(
    "slice.cfg",
    mosaic=root / "mosaic.png", mosaic_id="m0", labels=root / "labels.csv",
    manifest=root / "tiles.jsonl", tile_size=48, stride=48, keep_empty="true",
    ratio_train=0.5, ratio_dev=0.25, ratio_test=0.25,
))
run("augment", config(
    "augment.cfg",
    mosaic=root / "mosaic.png", mosaic_id="m0", manifest=root / "tiles.jsonl",
    out_dir=root / "augmented", out_manifest=root / "augmented.jsonl",
    rotation_deg=10, zoom=0.05, shear=0.05, shift_px=2,
))
run("encode", config(
    "encode.cfg",
    manifest=root / "tiles.jsonl", targets_out=root / "targets.bin",
    image_w=48, image_h=48, grid_size=4, num_classes=2, slots_per_cell=2,
))

# --- dot-annotated pair ------------------------------------------------------
plain = rng.integers(90, 150, size=(64, 64, 3)).astype(np.uint8)
dotted = plain.copy()
ys, xs = np.mgrid[0:64, 0:64]
dotted[(xs - 20) ** 2 + (ys - 30) ** 2 <= 9] = (243, 8, 5)
write_raster(root / "plain.ppm", plain)
write_raster(root / "dotted.ppm", dotted)
run("extract-dots", config(
    "dots.cfg",
    dotted=root / "dotted.ppm", plain=root / "plain.ppm",
    labels_out=root / "dots.csv", image_id="pair-0",
))
print((root / "dots.csv").read_text().strip())

# --- toy training loop -------------------------------------------------------
toy = dict(
    image_w=224, image_h=224, grid_size=4, num_classes=2, slots_per_cell=2,
    toy_images=16, toy_objects=3, steps=2000, learning_rate=0.5,
    lr_decay_at=1200, lr_decay_factor=0.1, hidden_dim=16, num_layers=2,
    seed=0, threshold=0.3, image_prefix="toy-",
)
run("train-toy", config(
    "train.cfg", **toy,
    params_file=root / "params.bin", curve_out=root / "curve.csv",
    features=root / "features.bin", labels_out=root / "toy-labels.csv",
))
run("predict", config(
    "predict.cfg", **toy,
    params_file=root / "params.bin", features=root / "features.bin",
    predictions=root / "predictions.jsonl",
))
run("evaluate", config(
    "evaluate.cfg", **toy,
    predictions=root / "predictions.jsonl", labels=root / "toy-labels.csv",
    results=root / "results.json", report_out=root / "report.html",
))
run("report", config(
    "report.cfg",
    results=root / "results.json", report_out=root / "report-copy.html",
))

results = read_results(root / "results.json")
print(f"toy mAP {results['map']:.3f}, mean count RMSE {results['mean_rmse']:.3f}")
print(f"open {root / 'report.html'} in a browser for the full report")
