"""Run configuration: a flat key = value text file.

One config file fully reproduces a run: it carries the grid geometry, the
matching criterion, thresholds, seeds and every file path a command reads
or writes. Unknown keys are rejected so typos fail fast, and writing a
config back out records the defaults in force.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

__all__ = ["ConfigError", "RunConfig"]


class ConfigError(ValueError):
    """Invalid configuration (bad key, bad value, missing required key)."""


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    # grid geometry
    image_w: int = 224
    image_h: int = 224
    grid_size: int = 7
    slots_per_cell: int = 8
    coord_arity: int = 2
    num_classes: int = 1
    # decoding and evaluation
    threshold: float = 0.5
    stop_symbol: bool = False
    match_mode: str = "point"
    tau: float | None = None  # default: half a grid cell, resolved at use
    iou_min: float = 0.5
    cell_center_rule: bool = False
    count_threshold: float = 0.5
    # determinism
    seed: int = 0
    # slicing
    slice_mode: str = "sequential"
    tile_size: int = 224
    stride: int = 224
    keep_empty: bool = False
    ratio_train: float = 0.6
    ratio_dev: float = 0.2
    ratio_test: float = 0.2
    # augmentation ranges
    rotation_deg: float = 15.0
    zoom: float = 0.1
    shear: float = 0.1
    shift_px: float = 8.0
    # dot extraction
    min_blob: int = 4
    diff_threshold: float = 30.0
    image_id: str = ""
    # toy training
    toy_images: int = 16
    toy_objects: int = 3
    steps: int = 2000
    learning_rate: float = 0.5
    lr_decay_at: int = 1200
    lr_decay_factor: float = 0.1
    hidden_dim: int = 16
    num_layers: int = 2
    # identity stamped into outputs
    image_prefix: str = "img-"
    model_tag: str = ""
    run_id: str = ""
    # file paths (inputs and outputs, per command)
    mosaic: str = ""
    mosaic_id: str = ""
    labels: str = ""
    manifest: str = ""
    out_manifest: str = ""
    out_dir: str = ""
    targets_out: str = ""
    dotted: str = ""
    plain: str = ""
    dot_table: str = ""
    labels_out: str = ""
    params_file: str = ""
    curve_out: str = ""
    features: str = ""
    predictions: str = ""
    results: str = ""
    report_out: str = ""
    count_csv: str = ""

    def __post_init__(self):
        if self.grid_size < 1 or self.slots_per_cell < 1:
            raise ConfigError("grid_size and slots_per_cell must be >= 1")
        if self.coord_arity not in (2, 4):
            raise ConfigError("coord_arity must be 2 or 4")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        if not 0.0 <= self.threshold:
            raise ConfigError("threshold must be >= 0")
        if self.match_mode not in ("point", "box"):
            raise ConfigError("match_mode must be point or box")
        if self.tau is not None and self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if not 0.0 < self.iou_min <= 1.0:
            raise ConfigError("iou_min must be in (0, 1]")
        if self.slice_mode not in ("sequential", "around-objects"):
            raise ConfigError("slice_mode must be sequential or around-objects")
        if self.steps < 0 or self.toy_images < 1:
            raise ConfigError("steps must be >= 0 and toy_images >= 1")

    @property
    def resolved_tau(self) -> float:
        """tau falls back to half the grid-cell side in pixels."""
        if self.tau is not None:
            return self.tau
        return self.image_w / self.grid_size / 2.0

    def grid_spec(self):
        from .codec import GridSpec

        return GridSpec(
            image_w=self.image_w,
            image_h=self.image_h,
            grid_size=self.grid_size,
            num_classes=self.num_classes,
            slots_per_cell=self.slots_per_cell,
            coord_arity=self.coord_arity,
        )

    def require(self, *names: str) -> None:
        """Fail with a ConfigError naming every missing key."""
        missing = [n for n in names if getattr(self, n) in ("", None)]
        if missing:
            raise ConfigError(f"missing required config keys: {', '.join(missing)}")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        values: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}: line {lineno}: expected key = value")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
        return cls.from_mapping(values, source=str(path))

    @classmethod
    def from_mapping(cls, values: dict[str, str], source: str = "config") -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"{source}: unknown config key {key!r}")
            kwargs[key] = _convert(key, raw, known[key].type, source)
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: {exc}") from None

    def to_file(self, path: str | Path) -> None:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _convert(key: str, raw: str, annotation: str, source: str):
    annotation = str(annotation)
    try:
        if "bool" in annotation:
            lowered = raw.lower()
            if lowered in _BOOL_TRUE:
                return True
            if lowered in _BOOL_FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if "int" in annotation:
            return int(raw)
        if "float" in annotation:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{source}: key {key!r}: {exc}") from None
