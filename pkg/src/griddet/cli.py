"""Command-line entry point wiring the pipeline end to end.

Subcommands: slice | augment | encode | extract-dots | train-toy | predict
| evaluate | report. Every command is a pure function of its config file
and input files: reruns with identical inputs produce byte-identical
outputs. Exit codes distinguish success (0), completed-with-warnings (1),
config errors (2), input errors (3) and numeric divergence (4).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .codec import (
    GridSpec,
    decode_predictions,
    encode_labels,
    read_labels_csv,
    write_labels_csv,
)
from .config import ConfigError, RunConfig
from .decoder import (
    DivergenceError,
    ToyTrainConfig,
    decoder_forward,
    make_toy_scenes,
    train_toy,
)
from .dots import extract_dots, read_color_table_csv, sea_lion_color_table
from .evaluation import MatchCriterion, evaluate_detections
from .rasters import read_raster, write_raster
from .report import write_report
from .store import (
    PredictionRecord,
    predictions_to_detections,
    read_predictions,
    read_results,
    results_to_dict,
    write_loss_curve,
    write_predictions,
    write_results,
)
from .tensorio import load_params, read_tensors, save_params, write_tensors
from .tiling import (
    Mosaic,
    read_manifest,
    slice_around_objects,
    slice_sequential,
    split_dataset,
    write_manifest,
)
from .augmentation import AugmentRanges, augment_tile

EXIT_OK = 0
EXIT_WARNINGS = 1
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_DIVERGENCE = 4

__all__ = ["main"]


class InputError(ValueError):
    """A named input file is missing or malformed."""


def _load_mosaic(cfg: RunConfig) -> Mosaic:
    cfg.require("mosaic", "mosaic_id")
    if not Path(cfg.mosaic).exists():
        raise InputError(f"mosaic file not found: {cfg.mosaic}")
    return Mosaic.from_file(cfg.mosaic_id, cfg.mosaic)


def _read_labels(path: str):
    if not Path(path).exists():
        raise InputError(f"label file not found: {path}")
    return read_labels_csv(path)


def cmd_slice(cfg: RunConfig, threads: int) -> int:
    cfg.require("mosaic", "mosaic_id", "labels", "manifest")
    mosaic = _load_mosaic(cfg)
    labels = _read_labels(cfg.labels)
    annotations = labels.get(cfg.mosaic_id, [])
    if cfg.slice_mode == "sequential":
        tiles = slice_sequential(
            mosaic, annotations, cfg.tile_size, cfg.stride, cfg.keep_empty
        )
    else:
        tiles = slice_around_objects(mosaic, annotations, cfg.tile_size)
    ratios = (cfg.ratio_train, cfg.ratio_dev, cfg.ratio_test)
    train, dev, test = split_dataset(tiles, ratios, cfg.seed)
    for split_name, bucket in (("train", train), ("dev", dev), ("test", test)):
        for tile in bucket:
            tile.split = split_name
    write_manifest(cfg.manifest, tiles)
    total_ann = sum(len(t.annotations) for t in tiles)
    print(
        f"slice: {len(tiles)} tiles ({len(train)} train / {len(dev)} dev / "
        f"{len(test)} test), {total_ann} tile annotations -> {cfg.manifest}"
    )
    return EXIT_OK


def cmd_augment(cfg: RunConfig, threads: int) -> int:
    cfg.require("manifest", "mosaic", "mosaic_id", "out_dir", "out_manifest")
    mosaic = _load_mosaic(cfg)
    tiles = read_manifest(cfg.manifest)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ranges = AugmentRanges(
        rotation_deg=cfg.rotation_deg,
        zoom=cfg.zoom,
        shear=cfg.shear,
        shift_px=cfg.shift_px,
    )
    out_tiles = []
    for idx, tile in enumerate(tiles):
        if tile.mosaic_id != cfg.mosaic_id:
            raise InputError(
                f"manifest record {idx} references mosaic "
                f"{tile.mosaic_id!r}, expected {cfg.mosaic_id!r}"
            )
        pixels = mosaic.read_tile(tile.x0, tile.y0, tile.size)
        rng = np.random.default_rng([cfg.seed, idx])
        warped, annotations, _ = augment_tile(pixels, tile.annotations, ranges, rng)
        name = f"{tile.mosaic_id}_{idx:05d}_{tile.x0}_{tile.y0}.png"
        write_raster(out_dir / name, np.asarray(warped, dtype=np.uint8))
        out_tile = type(tile)(
            mosaic_id=tile.mosaic_id,
            x0=tile.x0,
            y0=tile.y0,
            size=tile.size,
            annotations=annotations,
            split=tile.split,
        )
        out_tiles.append(out_tile)
    write_manifest(cfg.out_manifest, out_tiles)
    print(
        f"augment: {len(out_tiles)} tiles -> {cfg.out_dir}, "
        f"manifest -> {cfg.out_manifest}"
    )
    return EXIT_OK


def cmd_encode(cfg: RunConfig, threads: int) -> int:
    cfg.require("manifest", "targets_out")
    spec = cfg.grid_spec()
    if spec.image_w != spec.image_h:
        raise ConfigError("encode expects square tiles (image_w == image_h)")
    tiles = read_manifest(cfg.manifest)
    presents, coords, classes = [], [], []
    dropped_total = 0
    for idx, tile in enumerate(tiles):
        if tile.size != spec.image_w:
            raise InputError(
                f"manifest record {idx}: tile size {tile.size} does not match "
                f"configured image size {spec.image_w}"
            )
        targets, dropped = encode_labels(tile.annotations, spec)
        dropped_total += dropped
        presents.append(targets.present)
        coords.append(targets.coords)
        classes.append(targets.class_ids.astype(np.float64))
    if not tiles:
        raise InputError(f"{cfg.manifest}: empty manifest")
    write_tensors(
        cfg.targets_out,
        [np.stack(presents), np.stack(coords), np.stack(classes)],
    )
    print(
        f"encode: {len(tiles)} tiles, {dropped_total} annotations dropped by "
        f"the {spec.slots_per_cell}-slot cap -> {cfg.targets_out}"
    )
    return EXIT_OK


def cmd_extract_dots(cfg: RunConfig, threads: int) -> int:
    cfg.require("dotted", "plain", "labels_out", "image_id")
    for path in (cfg.dotted, cfg.plain):
        if not Path(path).exists():
            raise InputError(f"image not found: {path}")
    table = (
        read_color_table_csv(cfg.dot_table)
        if cfg.dot_table
        else sea_lion_color_table()
    )
    annotations, unclassified = extract_dots(
        read_raster(cfg.dotted),
        read_raster(cfg.plain),
        table,
        min_blob=cfg.min_blob,
        diff_threshold=cfg.diff_threshold,
    )
    write_labels_csv(cfg.labels_out, {cfg.image_id: annotations})
    print(
        f"extract-dots: {len(annotations)} dots classified, "
        f"{unclassified} unclassified -> {cfg.labels_out}"
    )
    return EXIT_OK


def cmd_train_toy(cfg: RunConfig, threads: int) -> int:
    cfg.require("params_file", "curve_out")
    spec = cfg.grid_spec()
    features, annotations, targets = make_toy_scenes(
        cfg.toy_images, spec, objects_per_image=cfg.toy_objects, seed=cfg.seed
    )
    train_cfg = ToyTrainConfig(
        steps=cfg.steps,
        learning_rate=cfg.learning_rate,
        lr_decay_at=cfg.lr_decay_at,
        lr_decay_factor=cfg.lr_decay_factor,
        hidden_dim=cfg.hidden_dim,
        num_layers=cfg.num_layers,
        seed=cfg.seed,
    )
    params, curve = train_toy(features, targets, spec, train_cfg)
    save_params(cfg.params_file, params)
    write_loss_curve(cfg.curve_out, curve)
    if cfg.features:
        write_tensors(cfg.features, [features])
    if cfg.labels_out:
        write_labels_csv(
            cfg.labels_out,
            {f"{cfg.image_prefix}{i:04d}": anns for i, anns in enumerate(annotations)},
        )
    first, last = curve[0][4], curve[-1][4]
    print(
        f"train-toy: {len(curve)} steps, total loss {first:.6f} -> {last:.6f}, "
        f"params -> {cfg.params_file}"
    )
    return EXIT_OK


def cmd_predict(cfg: RunConfig, threads: int) -> int:
    cfg.require("params_file", "features", "predictions")
    for path in (cfg.params_file, cfg.features):
        if not Path(path).exists():
            raise InputError(f"input not found: {path}")
    params = load_params(cfg.params_file)
    grids = read_tensors(cfg.features)
    records = []
    image_index = 0
    for grid in grids:
        if grid.ndim != 4:
            raise InputError(
                f"{cfg.features}: expected rank-4 (B, H, W, F) grids, "
                f"got rank {grid.ndim}"
            )
        _, gh, gw, fdim = grid.shape
        if gh != gw:
            raise InputError(f"{cfg.features}: only square grids supported")
        if fdim != params.feature_dim:
            raise InputError(
                f"feature dim {fdim} does not match params ({params.feature_dim})"
            )
        spec = GridSpec(
            image_w=cfg.image_w,
            image_h=cfg.image_h,
            grid_size=gh,
            num_classes=params.num_classes,
            slots_per_cell=cfg.slots_per_cell,
            coord_arity=params.coord_arity,
        )
        tensor = decoder_forward(grid, params, spec.slots_per_cell)
        for b in range(tensor.shape[0]):
            image_id = f"{cfg.image_prefix}{image_index:04d}"
            image_index += 1
            for det in decode_predictions(
                tensor[b], spec, cfg.threshold, cfg.stop_symbol, image_id=image_id
            ):
                records.append(
                    PredictionRecord(
                        image_id=det.image_id,
                        class_id=det.class_id,
                        score=det.score,
                        x=det.x,
                        y=det.y,
                        w=det.w,
                        h=det.h,
                        model_tag=cfg.model_tag,
                        run_id=cfg.run_id,
                    )
                )
    write_predictions(cfg.predictions, records)
    print(
        f"predict: {len(records)} detections over {image_index} images "
        f"-> {cfg.predictions}"
    )
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, threads: int) -> int:
    cfg.require("predictions", "labels", "results", "report_out")
    for path in (cfg.predictions, cfg.labels):
        if not Path(path).exists():
            raise InputError(f"input not found: {path}")
    labels = read_labels_csv(cfg.labels)
    records = read_predictions(cfg.predictions)
    known = set(labels)
    unknown: dict[str, int] = {}
    kept = []
    for r in records:
        if r.image_id in known:
            kept.append(r)
        else:
            unknown[r.image_id] = unknown.get(r.image_id, 0) + 1
    warnings = [
        f"unknown image_id {image_id!r}: {count} prediction(s) excluded"
        for image_id, count in sorted(unknown.items())
    ]
    spec = cfg.grid_spec()
    if cfg.match_mode == "point":
        criterion = MatchCriterion(
            mode="point",
            tau=cfg.resolved_tau,
            cell_center_rule=cfg.cell_center_rule,
            grid=spec if cfg.cell_center_rule else None,
        )
    else:
        criterion = MatchCriterion(
            mode="box",
            iou_min=cfg.iou_min,
            cell_center_rule=cfg.cell_center_rule,
            grid=spec if cfg.cell_center_rule else None,
        )
    result = evaluate_detections(
        predictions_to_detections(kept),
        labels,
        class_ids=list(range(cfg.num_classes)),
        criterion=criterion,
        count_threshold=cfg.count_threshold,
        threads=threads,
    )
    result.warnings = warnings
    results = results_to_dict(result)
    write_results(cfg.results, results)
    write_report(cfg.report_out, results)
    print(
        f"evaluate: mAP {result.map * 100:.2f}%, mean RMSE {result.mean_rmse:.4f} "
        f"-> {cfg.results}, report -> {cfg.report_out}"
    )
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_WARNINGS if warnings else EXIT_OK


def cmd_report(cfg: RunConfig, threads: int) -> int:
    cfg.require("results", "report_out")
    if not Path(cfg.results).exists():
        raise InputError(f"results file not found: {cfg.results}")
    write_report(cfg.report_out, read_results(cfg.results))
    print(f"report: {cfg.results} -> {cfg.report_out}")
    return EXIT_OK


_COMMANDS = {
    "slice": cmd_slice,
    "augment": cmd_augment,
    "encode": cmd_encode,
    "extract-dots": cmd_extract_dots,
    "train-toy": cmd_train_toy,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="griddet",
        description="Grid-cell LSTM detection pipeline: slicing, encoding, "
        "toy training, prediction and evaluation.",
    )
    parser.add_argument("--config", required=True, help="path to a key = value config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for per-image work")
    parser.add_argument("command", choices=sorted(_COMMANDS), help="pipeline stage to run")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if not Path(args.config).exists():
            raise ConfigError(f"config file not found: {args.config}")
        cfg = RunConfig.from_file(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return _COMMANDS[args.command](cfg, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (InputError, OSError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
