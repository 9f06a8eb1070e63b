"""
Grid-relative label encoding
============================

The detector reasons about a G x G grid of cells. This walkthrough encodes
a handful of pixel-space annotations into the per-cell, slot-padded target
layout the loss consumes, then decodes a perfect prediction tensor back and
checks that the original labels come out again.
"""

import numpy as np

from griddet import (
    GridSpec,
    ObjectAnnotation,
    cell_of,
    decode_predictions,
    encode_labels,
    normalize_image,
    perfect_predictions,
)

# A 224 x 224 image, a 7 x 7 grid and up to 2 objects per cell.
spec = GridSpec(image_w=224, image_h=224, grid_size=7, num_classes=3,
                slots_per_cell=2)
print(f"cells are {spec.cell_w:.0f} px wide; "
      f"{spec.num_slots} prediction slots per image")

annotations = [
    ObjectAnnotation(class_id=0, x=48.0, y=16.0),    # dead center of cell (0, 1)
    ObjectAnnotation(class_id=2, x=100.0, y=150.0),
    ObjectAnnotation(class_id=1, x=101.0, y=151.0),  # same cell as above
    ObjectAnnotation(class_id=1, x=99.0, y=149.0),   # third in that cell: dropped
]

for a in annotations:
    print(f"  object class {a.class_id} at ({a.x:5.1f}, {a.y:5.1f}) "
          f"-> cell {cell_of(a, spec)}")

targets, dropped = encode_labels(annotations, spec)
print(f"encoded {targets.num_present} objects, dropped {dropped} over the "
      f"{spec.slots_per_cell}-slot cap")

# The first annotation sits exactly at its cell center: rel coords (0.5, 0.5).
print("cell (0, 1) slot 0 rel coords:", targets.coords[0, 1, 0])

# A perfect model would emit confident objectness and the same coordinates;
# decoding that tensor recovers the kept annotations exactly.
tensor = perfect_predictions(targets, spec)
detections = decode_predictions(tensor, spec, threshold=0.5)
print(f"decoded {len(detections)} detections:")
for d in sorted(detections, key=lambda d: (d.y, d.x)):
    print(f"  class {d.class_id} at ({d.x:5.1f}, {d.y:5.1f}) score {d.score:.3f}")

# Pixel values feed the (out-of-scope) backbone normalized to [-0.5, 0.5].
image = np.linspace(0, 255, 12).reshape(2, 2, 3)
print("normalized corner values:", normalize_image(image)[0, 0], "...",
      normalize_image(image)[-1, -1])
