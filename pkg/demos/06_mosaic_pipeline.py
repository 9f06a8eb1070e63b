"""
From a labeled mosaic to training tiles
=======================================

Survey imagery arrives as huge stitched mosaics with point labels. The data
pipeline slices them into fixed-size tiles (two strategies), splits the
tiles into train/dev/test, and augments tiles jointly with their labels.
"""

import numpy as np

from griddet import (
    AugmentRanges,
    Mosaic,
    ObjectAnnotation,
    augment_tile,
    count_table,
    slice_around_objects,
    slice_sequential,
    split_dataset,
)

# A synthetic 900 x 700 "mosaic" with a few dozen labeled points.
rng = np.random.default_rng(0)
pixels = rng.integers(30, 220, size=(700, 900, 3)).astype(np.uint8)
mosaic = Mosaic.from_array("survey-site", pixels)
annotations = [
    ObjectAnnotation(
        class_id=int(rng.integers(0, 2)),
        x=float(rng.uniform(0, 900)),
        y=float(rng.uniform(0, 700)),
    )
    for _ in range(40)
]

# Sequential slicing walks a stride grid and discards partial edge tiles:
# floor(900/224) * floor(700/224) windows.
tiles = slice_sequential(mosaic, annotations, size=224, stride=224,
                         keep_empty=True)
labeled = [t for t in tiles if t.annotations]
print(f"sequential: {len(tiles)} tiles, {len(labeled)} carry labels")

# Object-centered slicing cuts one tile per annotation; neighbors overlap,
# which doubles as augmentation for sparse datasets.
around = slice_around_objects(mosaic, annotations, size=224)
print(f"around-objects: {len(around)} tiles for {len(annotations)} labels, "
      f"{sum(len(t.annotations) for t in around)} tile annotations total")

# Deterministic 60/20/20 split.
train, dev, test = split_dataset(around, (0.6, 0.2, 0.2), seed=7)
print(f"split sizes: {len(train)} train / {len(dev)} dev / {len(test)} test")

# Joint pixel + label augmentation on one tile.
tile = train[0]
image = mosaic.read_tile(tile.x0, tile.y0, tile.size)
ranges = AugmentRanges(rotation_deg=20, zoom=0.1, shear=0.1, shift_px=8)
warped, moved, transform = augment_tile(image, tile.annotations, ranges,
                                        np.random.default_rng(1))
print(f"augmented tile keeps {len(moved)}/{len(tile.annotations)} labels; "
      f"transform determinant {transform.determinant:.3f}")

# Population bookkeeping per class and source mosaic.
table = count_table({"survey-site": annotations}, ["species-a", "species-b"])
for name, total in zip(table.class_names, table.class_totals):
    print(f"  {name}: {total}")
print(f"grand total: {table.grand_total}")
