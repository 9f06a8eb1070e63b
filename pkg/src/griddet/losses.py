"""Composite detection loss with analytic gradients.

The training loss is the unit-weight sum of three terms over the n = G^2 * k
prediction slots of an image, computed after targets have been reordered by
the matcher:

* confidence loss: 2-way softmax cross-entropy on objectness, averaged over
  all n slots,
* regression loss: root of the mean squared coordinate error over the m
  present slots (m * r terms), zero when m = 0,
* class loss: softmax cross-entropy over classes, averaged over the m
  present slots, zero when m = 0.

Slots without a real object are masked out of the regression and class
terms; their coordinate and class predictions receive exactly zero gradient.
All gradients are with respect to the raw prediction fields (logits and
coordinates) and are verified against central finite differences in the
test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import reorder_targets
from .codec import CellTargets, GridSpec, split_prediction_tensor

__all__ = [
    "LossInputs",
    "LossBreakdown",
    "confidence_loss",
    "regression_loss",
    "class_loss",
    "total_loss",
    "build_loss_inputs",
    "matched_loss",
]

# Floor inside the regression-loss radicand, used only when dividing in the
# gradient so a zero residual cannot divide by zero; the loss value itself
# stays an exact square root.
GRAD_EPS = 1e-12


@dataclass
class LossInputs:
    """Per-slot prediction fields and (matcher-reordered) targets.

    Rows where ``gt_presence`` is 0 must carry all-zero ``gt_coords``;
    their ``gt_class`` rows are ignored.
    """

    objectness_logits: np.ndarray  # (n, 2)
    class_logits: np.ndarray  # (n, C)
    pred_coords: np.ndarray  # (n, r)
    gt_presence: np.ndarray  # (n,) values in {0, 1}
    gt_coords: np.ndarray  # (n, r)
    gt_class: np.ndarray  # (n, C) one-hot rows where present

    def __post_init__(self):
        n = self.objectness_logits.shape[0]
        if self.objectness_logits.shape != (n, 2):
            raise ValueError("objectness_logits must have shape (n, 2)")
        if self.class_logits.ndim != 2 or self.class_logits.shape[0] != n:
            raise ValueError("class_logits must have shape (n, C)")
        if self.pred_coords.ndim != 2 or self.pred_coords.shape[0] != n:
            raise ValueError("pred_coords must have shape (n, r)")
        if self.gt_presence.shape != (n,):
            raise ValueError("gt_presence must have shape (n,)")
        if self.gt_coords.shape != self.pred_coords.shape:
            raise ValueError("gt_coords must match pred_coords shape")
        if self.gt_class.shape != self.class_logits.shape:
            raise ValueError("gt_class must match class_logits shape")
        absent = self.gt_presence == 0
        if np.any(self.gt_coords[absent] != 0):
            raise ValueError("absent slots must have all-zero gt_coords")

    @property
    def n(self) -> int:
        return self.objectness_logits.shape[0]

    @property
    def m(self) -> int:
        """Number of real objects among the n slots."""
        return int(self.gt_presence.sum())


@dataclass
class LossBreakdown:
    """The three loss components, their sum, and per-field gradients."""

    l_o: float
    l_r: float
    l_c: float
    total: float
    grad_objectness: np.ndarray  # (n, 2)
    grad_coords: np.ndarray  # (n, r)
    grad_class: np.ndarray  # (n, C)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def confidence_loss(inputs: LossInputs) -> tuple[float, np.ndarray]:
    """Objectness softmax cross-entropy averaged over all n slots."""
    n = inputs.n
    g = inputs.gt_presence
    target = np.stack([1.0 - g, g], axis=1)
    logp = _log_softmax(inputs.objectness_logits)
    value = float(-(target * logp).sum() / n)
    grad = (_softmax(inputs.objectness_logits) - target) / n
    return value, grad


def regression_loss(inputs: LossInputs) -> tuple[float, np.ndarray]:
    """Root mean squared coordinate error over present slots only.

    With m present slots and r coordinates each, the radicand is the sum of
    squared residuals divided by m * r. m = 0 yields 0 with zero gradient.
    """
    m = inputs.m
    grad = np.zeros_like(inputs.pred_coords)
    if m == 0:
        return 0.0, grad
    r = inputs.pred_coords.shape[1]
    mask = inputs.gt_presence[:, None]
    diff = (inputs.pred_coords - inputs.gt_coords) * mask
    radicand = float((diff * diff).sum() / (m * r))
    value = float(np.sqrt(radicand))
    denom = m * r * np.sqrt(max(radicand, GRAD_EPS))
    grad = diff / denom
    return value, grad


def class_loss(inputs: LossInputs) -> tuple[float, np.ndarray]:
    """Class softmax cross-entropy averaged over the m present slots.

    Padded slots have no class ground truth and contribute nothing; m = 0
    yields 0 with zero gradient.
    """
    m = inputs.m
    grad = np.zeros_like(inputs.class_logits)
    if m == 0:
        return 0.0, grad
    mask = inputs.gt_presence[:, None]
    logp = _log_softmax(inputs.class_logits)
    value = float(-(mask * inputs.gt_class * logp).sum() / m)
    grad = mask * (_softmax(inputs.class_logits) - inputs.gt_class) / m
    return value, grad


def total_loss(inputs: LossInputs) -> LossBreakdown:
    """Sum of confidence, regression and class losses with their gradients."""
    l_o, grad_obj = confidence_loss(inputs)
    l_r, grad_crd = regression_loss(inputs)
    l_c, grad_cls = class_loss(inputs)
    return LossBreakdown(
        l_o=l_o,
        l_r=l_r,
        l_c=l_c,
        total=l_o + l_r + l_c,
        grad_objectness=grad_obj,
        grad_coords=grad_crd,
        grad_class=grad_cls,
    )


def build_loss_inputs(
    tensor: np.ndarray, targets: CellTargets, spec: GridSpec
) -> LossInputs:
    """Flatten one image's prediction tensor and targets into loss inputs.

    Slots are flattened row-major (row, col, slot), so row i of every array
    refers to the same slot. ``targets`` must already be slot-aligned
    (e.g. the output of reorder_targets).
    """
    n, c = spec.num_slots, spec.num_classes
    obj, cls, crd = split_prediction_tensor(tensor, spec)
    presence = targets.present.reshape(n)
    class_ids = targets.class_ids.reshape(n)
    onehot = np.zeros((n, c))
    rows = np.nonzero(presence > 0)[0]
    onehot[rows, class_ids[rows]] = 1.0
    return LossInputs(
        objectness_logits=obj.reshape(n, 2),
        class_logits=cls.reshape(n, c),
        pred_coords=crd.reshape(n, spec.coord_arity),
        gt_presence=presence,
        gt_coords=targets.coords.reshape(n, spec.coord_arity),
        gt_class=onehot,
    )


def matched_loss(
    tensor: np.ndarray, targets: CellTargets, spec: GridSpec
) -> tuple[LossBreakdown, LossInputs]:
    """Match targets to one image's predictions per cell, then score them."""
    _, _, crd = split_prediction_tensor(tensor, spec)
    matched = reorder_targets(crd, targets, spec)
    inputs = build_loss_inputs(tensor, matched, spec)
    return total_loss(inputs), inputs
