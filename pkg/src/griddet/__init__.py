"""griddet: grid-cell LSTM object detection toolkit.

Label codec, Hungarian matching, composite detection loss with analytic
gradients, a toy-trainable LSTM decoding head, detection metrics (AP / mAP
/ count RMSE) and the mosaic slicing, augmentation and dot-extraction data
pipeline.
"""

from .assignment import (
    Assignment,
    MatchedTargets,
    build_cost,
    match_cell,
    reorder_targets,
    solve_assignment,
)
from .augmentation import AffineTransform, AugmentRanges, augment_tile, sample_transform
from .codec import (
    CellTargets,
    Detection,
    GridSpec,
    ObjectAnnotation,
    cell_of,
    decode_predictions,
    encode_labels,
    normalize_image,
    perfect_predictions,
    read_labels_csv,
    split_prediction_tensor,
    write_labels_csv,
)
from .config import ConfigError, RunConfig
from .decoder import (
    DecoderParams,
    DivergenceError,
    LstmLayerParams,
    ToyTrainConfig,
    decode_cell,
    decoder_backward,
    decoder_forward,
    lstm_cell_forward,
    make_toy_scenes,
    train_toy,
)
from .dots import DotColor, DotColorTable, extract_dots, sea_lion_color_table
from .evaluation import (
    CountMatrix,
    MatchCriterion,
    PRCurve,
    average_precision,
    column_rmse,
    counts_from_annotations,
    counts_from_detections,
    evaluate_detections,
    match_detections,
    mean_ap,
)
from .losses import (
    LossBreakdown,
    LossInputs,
    build_loss_inputs,
    class_loss,
    confidence_loss,
    matched_loss,
    regression_loss,
    total_loss,
)
from .tensorio import load_params, read_tensors, save_params, write_tensors
from .tiling import (
    CountTable,
    Mosaic,
    TileIndex,
    count_table,
    read_manifest,
    slice_around_objects,
    slice_sequential,
    split_dataset,
    write_count_csv,
    write_manifest,
)

__version__ = "0.1.0"
