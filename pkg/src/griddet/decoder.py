"""Recurrent decoding head: stacked LSTM over k time steps plus dense heads.

Every grid cell's feature vector is fed, unchanged, into a stack of LSTM
layers at each of k time steps; at every step the top hidden state drives
three dense heads (objectness logits, class logits, coordinates), producing
one prediction slot. Cells are independent, so width/height changes of the
feature grid are just batch-size changes and the same parameters serve any
grid size.

Forward, analytic backward (BPTT) and a plain gradient-descent training
loop sufficient for toy-scale experiments on synthetic feature grids are
implemented in numpy. Gate layout along the 4H axis is input, forget,
candidate, output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import CellTargets, GridSpec, ObjectAnnotation
from .losses import LossBreakdown, matched_loss

__all__ = [
    "LstmLayerParams",
    "DecoderParams",
    "DecoderCache",
    "DivergenceError",
    "ToyTrainConfig",
    "lstm_cell_forward",
    "decode_cell",
    "decoder_forward",
    "decoder_backward",
    "train_toy",
    "make_toy_scenes",
]


@dataclass
class LstmLayerParams:
    """Weights of one LSTM layer; gates packed as [input, forget, cand, output]."""

    w_x: np.ndarray  # (input_dim, 4H)
    w_h: np.ndarray  # (H, 4H)
    b: np.ndarray  # (4H,)

    @property
    def hidden_dim(self) -> int:
        return self.w_h.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_x.shape[0]


@dataclass
class DecoderParams:
    """Stacked LSTM layers plus the three dense head projections."""

    layers: list[LstmLayerParams]
    w_obj: np.ndarray  # (H, 2)
    b_obj: np.ndarray  # (2,)
    w_cls: np.ndarray  # (H, C)
    b_cls: np.ndarray  # (C,)
    w_coord: np.ndarray  # (H, r)
    b_coord: np.ndarray  # (r,)

    @property
    def feature_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def hidden_dim(self) -> int:
        return self.layers[-1].hidden_dim

    @property
    def num_classes(self) -> int:
        return self.w_cls.shape[1]

    @property
    def coord_arity(self) -> int:
        return self.w_coord.shape[1]

    @property
    def tensor_depth(self) -> int:
        return 2 + self.num_classes + self.coord_arity

    def tensors(self) -> list[np.ndarray]:
        """All parameter arrays in serialization order."""
        out: list[np.ndarray] = []
        for layer in self.layers:
            out += [layer.w_x, layer.w_h, layer.b]
        out += [self.w_obj, self.b_obj, self.w_cls, self.b_cls,
                self.w_coord, self.b_coord]
        return out

    @classmethod
    def init_random(
        cls,
        feature_dim: int,
        hidden_dim: int,
        num_classes: int,
        coord_arity: int = 2,
        num_layers: int = 2,
        seed: int = 0,
        scale: float = 0.08,
    ) -> "DecoderParams":
        """Small symmetric init, uniform(-scale, scale), from a fixed seed."""
        rng = np.random.default_rng(seed)

        def u(*shape):
            return rng.uniform(-scale, scale, size=shape)

        layers = []
        in_dim = feature_dim
        for _ in range(num_layers):
            layers.append(
                LstmLayerParams(
                    w_x=u(in_dim, 4 * hidden_dim),
                    w_h=u(hidden_dim, 4 * hidden_dim),
                    b=u(4 * hidden_dim),
                )
            )
            in_dim = hidden_dim
        return cls(
            layers=layers,
            w_obj=u(hidden_dim, 2),
            b_obj=u(2),
            w_cls=u(hidden_dim, num_classes),
            b_cls=u(num_classes),
            w_coord=u(hidden_dim, coord_arity),
            b_coord=u(coord_arity),
        )

    @classmethod
    def zeros_like(cls, params: "DecoderParams") -> "DecoderParams":
        return cls(
            layers=[
                LstmLayerParams(
                    np.zeros_like(l.w_x), np.zeros_like(l.w_h), np.zeros_like(l.b)
                )
                for l in params.layers
            ],
            w_obj=np.zeros_like(params.w_obj),
            b_obj=np.zeros_like(params.b_obj),
            w_cls=np.zeros_like(params.w_cls),
            b_cls=np.zeros_like(params.b_cls),
            w_coord=np.zeros_like(params.w_coord),
            b_coord=np.zeros_like(params.b_coord),
        )

    def axpy(self, alpha: float, other: "DecoderParams") -> None:
        """In-place self += alpha * other over every tensor."""
        for dst, src in zip(self.tensors(), other.tensors()):
            dst += alpha * src


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class _LayerStep:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray


@dataclass
class DecoderCache:
    """Forward activations needed by decoder_backward."""

    params: DecoderParams
    shape: tuple[int, int, int]  # (B, H, W)
    steps: list[list[_LayerStep]] = field(default_factory=list)  # [t][layer]
    top_h: list[np.ndarray] = field(default_factory=list)  # [t] -> (N, hidden)


def lstm_cell_forward(
    x: np.ndarray, state: tuple[np.ndarray, np.ndarray], layer: LstmLayerParams
) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM step: sigmoid gates, tanh candidate and output nonlinearity.

    ``x`` is (N, input_dim) and state is an (h, c) pair of (N, H) arrays;
    returns the new (h, c).
    """
    h_prev, c_prev = state
    if x.shape[1] != layer.input_dim:
        raise ValueError(
            f"input dim {x.shape[1]} does not match layer ({layer.input_dim})"
        )
    hd = layer.hidden_dim
    z = x @ layer.w_x + h_prev @ layer.w_h + layer.b
    i = _sigmoid(z[:, :hd])
    f = _sigmoid(z[:, hd : 2 * hd])
    g = np.tanh(z[:, 2 * hd : 3 * hd])
    o = _sigmoid(z[:, 3 * hd :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def _forward_step(
    x: np.ndarray, state: tuple[np.ndarray, np.ndarray], layer: LstmLayerParams
) -> tuple[np.ndarray, np.ndarray, _LayerStep]:
    # Same math as lstm_cell_forward but keeping the activations for BPTT.
    h_prev, c_prev = state
    hd = layer.hidden_dim
    z = x @ layer.w_x + h_prev @ layer.w_h + layer.b
    i = _sigmoid(z[:, :hd])
    f = _sigmoid(z[:, hd : 2 * hd])
    g = np.tanh(z[:, 2 * hd : 3 * hd])
    o = _sigmoid(z[:, 3 * hd :])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, _LayerStep(x, h_prev, c_prev, i, f, g, o, tanh_c)


def decoder_forward(
    grid: np.ndarray,
    params: DecoderParams,
    k: int,
    return_cache: bool = False,
):
    """Run the decoder over a (B, H, W, F) feature grid for k time steps.

    Every cell is decoded independently with zero initial state and the cell
    feature as the LSTM input at each step. Returns a (B, H, W, k, D)
    prediction tensor, D = 2 + C + r; with ``return_cache`` also the cache
    required by decoder_backward.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 4:
        raise ValueError(f"feature grid must be (B, H, W, F), got {grid.shape}")
    if k < 1:
        raise ValueError("k must be >= 1")
    b, gh, gw, f = grid.shape
    if f != params.feature_dim:
        raise ValueError(
            f"feature dim {f} does not match params ({params.feature_dim})"
        )
    n = b * gh * gw
    x = grid.reshape(n, f)
    states = [
        (np.zeros((n, layer.hidden_dim)), np.zeros((n, layer.hidden_dim)))
        for layer in params.layers
    ]
    cache = DecoderCache(params=params, shape=(b, gh, gw))
    out = np.empty((n, k, params.tensor_depth))
    c_count = params.num_classes
    for t in range(k):
        inp = x
        step_caches = []
        for li, layer in enumerate(params.layers):
            h, c, sc = _forward_step(inp, states[li], layer)
            states[li] = (h, c)
            step_caches.append(sc)
            inp = h
        top = inp
        out[:, t, :2] = top @ params.w_obj + params.b_obj
        out[:, t, 2 : 2 + c_count] = top @ params.w_cls + params.b_cls
        out[:, t, 2 + c_count :] = top @ params.w_coord + params.b_coord
        if return_cache:
            cache.steps.append(step_caches)
            cache.top_h.append(top)
    tensor = out.reshape(b, gh, gw, k, params.tensor_depth)
    if return_cache:
        return tensor, cache
    return tensor


def decode_cell(feature: np.ndarray, params: DecoderParams, k: int) -> np.ndarray:
    """Decode a single cell's feature vector into its k slot outputs."""
    feature = np.asarray(feature, dtype=np.float64).reshape(1, 1, 1, -1)
    return decoder_forward(feature, params, k)[0, 0, 0]


def decoder_backward(cache: DecoderCache, upstream: np.ndarray) -> DecoderParams:
    """Backpropagate an upstream (B, H, W, k, D) gradient to the parameters.

    ``cache`` must come from decoder_forward(..., return_cache=True);
    gradients mirror the DecoderParams layout.
    """
    if cache is None or not cache.steps:
        raise ValueError("decoder_backward requires a cached forward pass")
    params = cache.params
    b, gh, gw = cache.shape
    k = len(cache.steps)
    n = b * gh * gw
    expected = (b, gh, gw, k, params.tensor_depth)
    if upstream.shape != expected:
        raise ValueError(f"upstream shape {upstream.shape}, expected {expected}")
    up = upstream.reshape(n, k, params.tensor_depth)
    c_count = params.num_classes
    grads = DecoderParams.zeros_like(params)
    num_layers = len(params.layers)
    dh_next = [np.zeros((n, l.hidden_dim)) for l in params.layers]
    dc_next = [np.zeros((n, l.hidden_dim)) for l in params.layers]
    for t in reversed(range(k)):
        d_obj = up[:, t, :2]
        d_cls = up[:, t, 2 : 2 + c_count]
        d_crd = up[:, t, 2 + c_count :]
        top = cache.top_h[t]
        grads.w_obj += top.T @ d_obj
        grads.b_obj += d_obj.sum(axis=0)
        grads.w_cls += top.T @ d_cls
        grads.b_cls += d_cls.sum(axis=0)
        grads.w_coord += top.T @ d_crd
        grads.b_coord += d_crd.sum(axis=0)
        dh_above = d_obj @ params.w_obj.T + d_cls @ params.w_cls.T + d_crd @ params.w_coord.T
        for li in reversed(range(num_layers)):
            layer = params.layers[li]
            sc = cache.steps[t][li]
            hd = layer.hidden_dim
            dh = dh_above + dh_next[li]
            do = dh * sc.tanh_c
            dc = dh * sc.o * (1.0 - sc.tanh_c**2) + dc_next[li]
            di = dc * sc.g
            df = dc * sc.c_prev
            dg = dc * sc.i
            dc_next[li] = dc * sc.f
            dz = np.empty((n, 4 * hd))
            dz[:, :hd] = di * sc.i * (1.0 - sc.i)
            dz[:, hd : 2 * hd] = df * sc.f * (1.0 - sc.f)
            dz[:, 2 * hd : 3 * hd] = dg * (1.0 - sc.g**2)
            dz[:, 3 * hd :] = do * sc.o * (1.0 - sc.o)
            lg = grads.layers[li]
            lg.w_x += sc.x.T @ dz
            lg.w_h += sc.h_prev.T @ dz
            lg.b += dz.sum(axis=0)
            dh_next[li] = dz @ layer.w_h.T
            dh_above = dz @ layer.w_x.T  # gradient w.r.t. this layer's input
    return grads


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, step: int, last_finite_total: float):
        super().__init__(
            f"non-finite loss at step {step}; "
            f"last finite total was {last_finite_total:.6g}"
        )
        self.step = step
        self.last_finite_total = last_finite_total


@dataclass
class ToyTrainConfig:
    """Plain gradient descent with an optional one-time step-size drop.

    The drop (learning_rate * lr_decay_factor from step lr_decay_at on)
    lets the run settle once the matcher's slot assignments stabilize;
    set lr_decay_factor to 1 for a constant step size.
    """

    steps: int = 2000
    learning_rate: float = 0.5
    lr_decay_at: int = 1200
    lr_decay_factor: float = 0.1
    hidden_dim: int = 16
    num_layers: int = 2
    seed: int = 0

    def rate_at(self, step: int) -> float:
        if step >= self.lr_decay_at:
            return self.learning_rate * self.lr_decay_factor
        return self.learning_rate


def train_toy(
    features: np.ndarray,
    targets: list[CellTargets],
    spec: GridSpec,
    config: ToyTrainConfig,
    params: DecoderParams | None = None,
) -> tuple[DecoderParams, list[tuple[int, float, float, float, float]]]:
    """Plain full-batch gradient descent on the composite loss.

    Targets are re-matched to the current predictions each step. The curve
    logs (step, l_o, l_r, l_c, total) for every step, measured before that
    step's update. Raises DivergenceError if the loss stops being finite.
    """
    features = np.asarray(features, dtype=np.float64)
    num_images = features.shape[0]
    if len(targets) != num_images:
        raise ValueError("one CellTargets per image required")
    if params is None:
        params = DecoderParams.init_random(
            feature_dim=features.shape[3],
            hidden_dim=config.hidden_dim,
            num_classes=spec.num_classes,
            coord_arity=spec.coord_arity,
            num_layers=config.num_layers,
            seed=config.seed,
        )
    k = spec.slots_per_cell
    curve: list[tuple[int, float, float, float, float]] = []
    last_finite = float("nan")
    for step in range(config.steps):
        tensor, cache = decoder_forward(features, params, k, return_cache=True)
        upstream = np.zeros_like(tensor)
        sums = np.zeros(4)
        for img in range(num_images):
            breakdown, _ = matched_loss(tensor[img], targets[img], spec)
            sums += (breakdown.l_o, breakdown.l_r, breakdown.l_c, breakdown.total)
            g, c = spec.grid_size, spec.num_classes
            upstream[img, ..., :2] = breakdown.grad_objectness.reshape(g, g, k, 2)
            upstream[img, ..., 2 : 2 + c] = breakdown.grad_class.reshape(g, g, k, c)
            upstream[img, ..., 2 + c :] = breakdown.grad_coords.reshape(
                g, g, k, spec.coord_arity
            )
        sums /= num_images
        upstream /= num_images
        if not np.isfinite(sums).all():
            raise DivergenceError(step, last_finite)
        last_finite = float(sums[3])
        curve.append((step, float(sums[0]), float(sums[1]), float(sums[2]), float(sums[3])))
        grads = decoder_backward(cache, upstream)
        rate = config.rate_at(step)
        if rate != 0.0:
            params.axpy(-rate, grads)
    return params, curve


def make_toy_scenes(
    num_images: int,
    spec: GridSpec,
    objects_per_image: int = 3,
    seed: int = 0,
) -> tuple[np.ndarray, list[list[ObjectAnnotation]], list[CellTargets]]:
    """Generate a separable synthetic scene set for toy training.

    Each image places ``objects_per_image`` objects in distinct grid cells
    (so at most one per cell) with random interior positions and classes.
    Cell features encode the scene linearly:
    [has-object, rel_x, rel_y, one-hot class...], hence feature_dim = 3 + C.

    Returns the (B, G, G, 3 + C) feature grids, per-image annotations and
    per-image encoded targets.
    """
    from .codec import encode_labels

    rng = np.random.default_rng(seed)
    g, c = spec.grid_size, spec.num_classes
    feats = np.zeros((num_images, g, g, 3 + c))
    annotations: list[list[ObjectAnnotation]] = []
    targets: list[CellTargets] = []
    if objects_per_image > g * g:
        raise ValueError("more objects than cells; scenes would overlap")
    for img in range(num_images):
        cells = rng.choice(g * g, size=objects_per_image, replace=False)
        anns = []
        for cell in cells:
            row, col = divmod(int(cell), g)
            rel_x = rng.uniform(0.15, 0.85)
            rel_y = rng.uniform(0.15, 0.85)
            cls = int(rng.integers(0, c))
            feats[img, row, col, 0] = 1.0
            feats[img, row, col, 1] = rel_x
            feats[img, row, col, 2] = rel_y
            feats[img, row, col, 3 + cls] = 1.0
            anns.append(
                ObjectAnnotation(
                    class_id=cls,
                    x=(col + rel_x) * spec.cell_w,
                    y=(row + rel_y) * spec.cell_h,
                )
            )
        anns.sort(key=lambda a: (a.y, a.x))
        annotations.append(anns)
        encoded, dropped = encode_labels(anns, spec)
        assert dropped == 0
        targets.append(encoded)
    return feats, annotations, targets
