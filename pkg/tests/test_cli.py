import json

import numpy as np
import pytest

from griddet.cli import (
    EXIT_CONFIG,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_WARNINGS,
    main,
)
from griddet.codec import ObjectAnnotation, write_labels_csv
from griddet.dots import DotColorTable, DotColor, write_color_table_csv
from griddet.rasters import write_raster
from griddet.store import read_predictions, read_results
from griddet.tensorio import read_tensors, write_tensors
from griddet.tiling import read_manifest


def write_cfg(path, **keys):
    path.write_text("".join(f"{k} = {v}\n" for k, v in keys.items()))
    return str(path)


@pytest.fixture
def mosaic_fixture(tmp_path):
    """A 96x96 mosaic with three labeled points, tiled at 48."""
    rng = np.random.default_rng(0)
    pixels = rng.integers(40, 220, size=(96, 96, 3)).astype(np.uint8)
    mosaic_path = tmp_path / "mosaic.png"
    write_raster(mosaic_path, pixels)
    labels_path = tmp_path / "labels.csv"
    write_labels_csv(
        labels_path,
        {
            "m0": [
                ObjectAnnotation(0, 10.0, 12.0),
                ObjectAnnotation(1, 60.0, 20.0),
                ObjectAnnotation(0, 70.0, 80.0),
            ]
        },
    )
    return mosaic_path, labels_path


class TestSliceCommand:
    def test_sequential_manifest(self, tmp_path, mosaic_fixture):
        mosaic_path, labels_path = mosaic_fixture
        manifest = tmp_path / "tiles.jsonl"
        cfg = write_cfg(
            tmp_path / "run.cfg",
            mosaic=mosaic_path,
            mosaic_id="m0",
            labels=labels_path,
            manifest=manifest,
            tile_size=48,
            stride=48,
            keep_empty="true",
            ratio_train=0.5,
            ratio_dev=0.25,
            ratio_test=0.25,
        )
        assert main(["--config", cfg, "slice"]) == EXIT_OK
        tiles = read_manifest(manifest)
        assert len(tiles) == 4
        assert sum(len(t.annotations) for t in tiles) == 3
        assert {t.split for t in tiles} == {"train", "dev", "test"}

    def test_around_objects_one_tile_per_annotation(self, tmp_path, mosaic_fixture):
        mosaic_path, labels_path = mosaic_fixture
        manifest = tmp_path / "tiles.jsonl"
        cfg = write_cfg(
            tmp_path / "run.cfg",
            mosaic=mosaic_path,
            mosaic_id="m0",
            labels=labels_path,
            manifest=manifest,
            slice_mode="around-objects",
            tile_size=48,
            ratio_train=0.4,
            ratio_dev=0.3,
            ratio_test=0.3,
        )
        assert main(["--config", cfg, "slice"]) == EXIT_OK
        assert len(read_manifest(manifest)) == 3

    def test_rerun_byte_identical(self, tmp_path, mosaic_fixture):
        mosaic_path, labels_path = mosaic_fixture
        first = tmp_path / "a.jsonl"
        second = tmp_path / "b.jsonl"
        base = dict(
            mosaic=mosaic_path,
            mosaic_id="m0",
            labels=labels_path,
            tile_size=48,
            stride=48,
            keep_empty="true",
            ratio_train=0.5,
            ratio_dev=0.25,
            ratio_test=0.25,
        )
        cfg_a = write_cfg(tmp_path / "a.cfg", manifest=first, **base)
        cfg_b = write_cfg(tmp_path / "b.cfg", manifest=second, **base)
        assert main(["--config", cfg_a, "slice"]) == EXIT_OK
        assert main(["--config", cfg_b, "slice"]) == EXIT_OK
        assert first.read_bytes() == second.read_bytes()

    def test_missing_mosaic_is_input_error(self, tmp_path, mosaic_fixture):
        _, labels_path = mosaic_fixture
        cfg = write_cfg(
            tmp_path / "run.cfg",
            mosaic=tmp_path / "nope.png",
            mosaic_id="m0",
            labels=labels_path,
            manifest=tmp_path / "t.jsonl",
        )
        assert main(["--config", cfg, "slice"]) == EXIT_INPUT

    def test_missing_required_key_is_config_error(self, tmp_path):
        cfg = write_cfg(tmp_path / "run.cfg", mosaic_id="m0")
        assert main(["--config", cfg, "slice"]) == EXIT_CONFIG

    def test_malformed_labels_reports_input_error(self, tmp_path, mosaic_fixture):
        mosaic_path, _ = mosaic_fixture
        bad = tmp_path / "bad.csv"
        bad.write_text("image_id,class_id,x,y\nm0,zero,1,2\n")
        cfg = write_cfg(
            tmp_path / "run.cfg",
            mosaic=mosaic_path,
            mosaic_id="m0",
            labels=bad,
            manifest=tmp_path / "t.jsonl",
        )
        assert main(["--config", cfg, "slice"]) == EXIT_INPUT


class TestAugmentEncodeCommands:
    def _slice(self, tmp_path, mosaic_fixture, **extra):
        mosaic_path, labels_path = mosaic_fixture
        manifest = tmp_path / "tiles.jsonl"
        cfg = write_cfg(
            tmp_path / "slice.cfg",
            mosaic=mosaic_path,
            mosaic_id="m0",
            labels=labels_path,
            manifest=manifest,
            tile_size=48,
            stride=48,
            keep_empty="true",
            ratio_train=0.5,
            ratio_dev=0.25,
            ratio_test=0.25,
            **extra,
        )
        assert main(["--config", cfg, "slice"]) == EXIT_OK
        return mosaic_path, labels_path, manifest

    def test_augment_writes_images_and_manifest(self, tmp_path, mosaic_fixture):
        mosaic_path, _, manifest = self._slice(tmp_path, mosaic_fixture)
        out_manifest = tmp_path / "aug.jsonl"
        cfg = write_cfg(
            tmp_path / "aug.cfg",
            mosaic=mosaic_path,
            mosaic_id="m0",
            manifest=manifest,
            out_dir=tmp_path / "aug",
            out_manifest=out_manifest,
            rotation_deg=10,
            zoom=0.05,
            shear=0.05,
            shift_px=2,
        )
        assert main(["--config", cfg, "augment"]) == EXIT_OK
        tiles = read_manifest(out_manifest)
        assert len(tiles) == 4
        images = sorted((tmp_path / "aug").glob("*.png"))
        assert len(images) == 4

    def test_augment_rerun_byte_identical(self, tmp_path, mosaic_fixture):
        mosaic_path, _, manifest = self._slice(tmp_path, mosaic_fixture)
        outs = []
        for tag in ("x", "y"):
            out_manifest = tmp_path / f"aug-{tag}.jsonl"
            cfg = write_cfg(
                tmp_path / f"aug-{tag}.cfg",
                mosaic=mosaic_path,
                mosaic_id="m0",
                manifest=manifest,
                out_dir=tmp_path / f"aug-{tag}",
                out_manifest=out_manifest,
                rotation_deg=10,
            )
            assert main(["--config", cfg, "augment"]) == EXIT_OK
            images = sorted((tmp_path / f"aug-{tag}").glob("*.png"))
            outs.append((out_manifest.read_bytes(), [p.read_bytes() for p in images]))
        assert outs[0] == outs[1]

    def test_encode_reports_targets(self, tmp_path, mosaic_fixture):
        _, _, manifest = self._slice(tmp_path, mosaic_fixture)
        targets_out = tmp_path / "targets.bin"
        cfg = write_cfg(
            tmp_path / "enc.cfg",
            manifest=manifest,
            targets_out=targets_out,
            image_w=48,
            image_h=48,
            grid_size=4,
            num_classes=2,
            slots_per_cell=2,
        )
        assert main(["--config", cfg, "encode"]) == EXIT_OK
        present, coords, classes = read_tensors(targets_out)
        assert present.shape == (4, 4, 4, 2)
        assert coords.shape == (4, 4, 4, 2, 2)
        assert classes.shape == (4, 4, 4, 2)
        assert present.sum() == 3  # all fixture annotations encoded


class TestExtractDotsCommand:
    def test_extract_dots_end_to_end(self, tmp_path):
        rng = np.random.default_rng(5)
        plain = rng.integers(90, 150, size=(64, 64, 3)).astype(np.uint8)
        dotted = plain.copy()
        ys, xs = np.mgrid[0:64, 0:64]
        dotted[(xs - 20) ** 2 + (ys - 30) ** 2 <= 9] = (250, 10, 10)
        dotted[(xs - 45) ** 2 + (ys - 12) ** 2 <= 9] = (10, 10, 250)
        plain_path = tmp_path / "plain.ppm"
        dotted_path = tmp_path / "dotted.ppm"
        write_raster(plain_path, plain)
        write_raster(dotted_path, dotted)
        table_path = tmp_path / "table.csv"
        write_color_table_csv(
            table_path,
            DotColorTable(
                entries=(
                    DotColor(0, "red", (250.0, 10.0, 10.0), (40.0, 40.0, 40.0)),
                    DotColor(1, "blue", (10.0, 10.0, 250.0), (40.0, 40.0, 40.0)),
                )
            ),
        )
        labels_out = tmp_path / "dots.csv"
        cfg = write_cfg(
            tmp_path / "dots.cfg",
            dotted=dotted_path,
            plain=plain_path,
            dot_table=table_path,
            labels_out=labels_out,
            image_id="pair-0",
        )
        assert main(["--config", cfg, "extract-dots"]) == EXIT_OK
        from griddet.codec import read_labels_csv

        labels = read_labels_csv(labels_out)
        got = sorted((a.class_id, round(a.x), round(a.y)) for a in labels["pair-0"])
        assert got == [(0, 20, 30), (1, 45, 12)]


TOY_KEYS = dict(
    image_w=224,
    image_h=224,
    grid_size=4,
    num_classes=2,
    slots_per_cell=2,
    coord_arity=2,
    toy_images=4,
    toy_objects=3,
    steps=40,
    learning_rate=0.5,
    lr_decay_at=30,
    lr_decay_factor=0.1,
    hidden_dim=8,
    num_layers=2,
    seed=0,
    image_prefix="toy-",
)


class TestToyPipelineCommands:
    def _train(self, tmp_path, cfg_name="train.cfg", **overrides):
        keys = dict(TOY_KEYS)
        keys.update(
            params_file=tmp_path / "params.bin",
            curve_out=tmp_path / "curve.csv",
            features=tmp_path / "features.bin",
            labels_out=tmp_path / "labels.csv",
        )
        keys.update(overrides)
        cfg = write_cfg(tmp_path / cfg_name, **keys)
        return cfg, keys

    def test_train_toy_writes_artifacts(self, tmp_path):
        cfg, keys = self._train(tmp_path)
        assert main(["--config", cfg, "train-toy"]) == EXIT_OK
        from griddet.store import read_loss_curve

        curve = read_loss_curve(keys["curve_out"])
        assert len(curve) == 40
        assert curve[-1][4] < curve[0][4]
        assert read_tensors(keys["features"])[0].shape == (4, 4, 4, 5)

    def test_train_rerun_identical_curve(self, tmp_path):
        cfg_a, keys_a = self._train(tmp_path, "a.cfg", curve_out=tmp_path / "c1.csv")
        cfg_b, keys_b = self._train(tmp_path, "b.cfg", curve_out=tmp_path / "c2.csv")
        assert main(["--config", cfg_a, "train-toy"]) == EXIT_OK
        assert main(["--config", cfg_b, "train-toy"]) == EXIT_OK
        assert (tmp_path / "c1.csv").read_bytes() == (tmp_path / "c2.csv").read_bytes()

    def test_zero_learning_rate_flat_curve(self, tmp_path):
        cfg, keys = self._train(
            tmp_path, learning_rate=0.0, lr_decay_factor=1.0, steps=10
        )
        assert main(["--config", cfg, "train-toy"]) == EXIT_OK
        from griddet.store import read_loss_curve

        totals = {row[4] for row in read_loss_curve(keys["curve_out"])}
        assert len(totals) == 1

    def test_predict_and_evaluate(self, tmp_path):
        cfg, keys = self._train(tmp_path)
        assert main(["--config", cfg, "train-toy"]) == EXIT_OK
        predictions = tmp_path / "preds.jsonl"
        pred_cfg = write_cfg(
            tmp_path / "pred.cfg",
            **dict(
                TOY_KEYS,
                params_file=keys["params_file"],
                features=keys["features"],
                predictions=predictions,
                threshold=0.5,
                model_tag="toy-model",
            ),
        )
        assert main(["--config", pred_cfg, "predict"]) == EXIT_OK
        records = read_predictions(predictions)
        assert all(r.model_tag == "toy-model" for r in records)
        results = tmp_path / "results.json"
        report = tmp_path / "report.html"
        eval_cfg = write_cfg(
            tmp_path / "eval.cfg",
            **dict(
                TOY_KEYS,
                predictions=predictions,
                labels=keys["labels_out"],
                results=results,
                report_out=report,
            ),
        )
        assert main(["--config", eval_cfg, "evaluate"]) == EXIT_OK
        data = read_results(results)
        assert set(data["per_class_ap"]) == {"0", "1"}
        assert report.read_text().startswith("<!DOCTYPE html>")

    def test_predict_threshold_above_one_empty(self, tmp_path):
        cfg, keys = self._train(tmp_path)
        assert main(["--config", cfg, "train-toy"]) == EXIT_OK
        predictions = tmp_path / "preds.jsonl"
        pred_cfg = write_cfg(
            tmp_path / "pred.cfg",
            **dict(
                TOY_KEYS,
                params_file=keys["params_file"],
                features=keys["features"],
                predictions=predictions,
                threshold=1.01,
            ),
        )
        assert main(["--config", pred_cfg, "predict"]) == EXIT_OK
        assert read_predictions(predictions) == []

    def test_zero_params_at_threshold_half_emit_everything(self, tmp_path):
        # zero features and zero-ish params give objectness exactly 0.5
        # everywhere; the threshold comparison is inclusive, so every slot
        # is emitted
        from griddet.decoder import DecoderParams
        from griddet.tensorio import save_params

        params = DecoderParams.init_random(5, 8, 2, 2, seed=0, scale=0.0)
        params_file = tmp_path / "zero.bin"
        save_params(params_file, params)
        features = tmp_path / "zero-features.bin"
        write_tensors(features, [np.zeros((1, 4, 4, 5))])
        predictions = tmp_path / "preds.jsonl"
        pred_cfg = write_cfg(
            tmp_path / "pred.cfg",
            **dict(
                TOY_KEYS,
                params_file=params_file,
                features=features,
                predictions=predictions,
                threshold=0.5,
            ),
        )
        assert main(["--config", pred_cfg, "predict"]) == EXIT_OK
        assert len(read_predictions(predictions)) == 4 * 4 * 2

    def test_evaluate_unknown_ids_warn_and_exclude(self, tmp_path):
        cfg, keys = self._train(tmp_path)
        assert main(["--config", cfg, "train-toy"]) == EXIT_OK
        predictions = tmp_path / "preds.jsonl"
        pred_cfg = write_cfg(
            tmp_path / "pred.cfg",
            **dict(
                TOY_KEYS,
                params_file=keys["params_file"],
                features=keys["features"],
                predictions=predictions,
                image_prefix="other-",
            ),
        )
        assert main(["--config", pred_cfg, "predict"]) == EXIT_OK
        results = tmp_path / "results.json"
        eval_cfg = write_cfg(
            tmp_path / "eval.cfg",
            **dict(
                TOY_KEYS,
                predictions=predictions,
                labels=keys["labels_out"],
                results=results,
                report_out=tmp_path / "report.html",
            ),
        )
        code = main(["--config", eval_cfg, "evaluate"])
        if read_predictions(predictions):
            assert code == EXIT_WARNINGS
            assert read_results(results)["warnings"]
        else:
            assert code == EXIT_OK

    def test_empty_predictions_still_evaluate_and_render(self, tmp_path):
        cfg, keys = self._train(tmp_path)
        assert main(["--config", cfg, "train-toy"]) == EXIT_OK
        predictions = tmp_path / "empty.jsonl"
        predictions.write_text("")
        results = tmp_path / "results.json"
        report = tmp_path / "report.html"
        eval_cfg = write_cfg(
            tmp_path / "eval.cfg",
            **dict(
                TOY_KEYS,
                predictions=predictions,
                labels=keys["labels_out"],
                results=results,
                report_out=report,
            ),
        )
        assert main(["--config", eval_cfg, "evaluate"]) == EXIT_OK
        data = read_results(results)
        assert data["map"] == 0.0
        # with no detections the count error is the ground truth itself:
        # 3 objects per image, so every per-class RMSE sums to 3 in quadrature
        rmse = np.array([data["per_class_rmse"][c] for c in ("0", "1")])
        assert float((rmse**2).sum()) > 0
        assert report.read_text().startswith("<!DOCTYPE html>")

    def test_divergence_exit_code(self, tmp_path):
        from griddet.cli import EXIT_DIVERGENCE

        cfg, _ = self._train(
            tmp_path, learning_rate=1e5, lr_decay_factor=1.0, steps=400
        )
        assert main(["--config", cfg, "train-toy"]) == EXIT_DIVERGENCE

    def test_report_from_results(self, tmp_path):
        from griddet.store import write_results

        results_path = tmp_path / "results.json"
        write_results(
            results_path,
            {
                "classes": [0],
                "map": 1.0,
                "per_class_ap": {"0": 1.0},
                "per_class_rmse": {"0": 0.0},
                "mean_rmse": 0.0,
                "num_images": 1,
                "pr_curves": {"0": {"recall": [1.0], "precision": [1.0], "ap": 1.0}},
                "warnings": [],
            },
        )
        report = tmp_path / "report.html"
        cfg = write_cfg(
            tmp_path / "rep.cfg", results=results_path, report_out=report
        )
        assert main(["--config", cfg, "report"]) == EXIT_OK
        assert "<svg" in report.read_text()


class TestCliPlumbing:
    def test_missing_config_file(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.cfg"), "slice"]) == EXIT_CONFIG

    def test_unknown_config_key(self, tmp_path):
        cfg = write_cfg(tmp_path / "run.cfg", not_a_key="1")
        assert main(["--config", cfg, "slice"]) == EXIT_CONFIG

    def test_seed_flag_overrides_config(self, tmp_path, capsys):
        keys = dict(
            TOY_KEYS,
            params_file=tmp_path / "p.bin",
            curve_out=tmp_path / "c.csv",
            steps=5,
        )
        cfg = write_cfg(tmp_path / "run.cfg", **keys)
        assert main(["--config", cfg, "--seed", "1", "train-toy"]) == EXIT_OK
        first = (tmp_path / "c.csv").read_bytes()
        assert main(["--config", cfg, "--seed", "2", "train-toy"]) == EXIT_OK
        assert (tmp_path / "c.csv").read_bytes() != first

    def test_bad_threads_rejected(self, tmp_path):
        cfg = write_cfg(tmp_path / "run.cfg", grid_size=4)
        assert main(["--config", cfg, "--threads", "0", "report"]) == EXIT_CONFIG
