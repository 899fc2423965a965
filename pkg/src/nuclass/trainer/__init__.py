"""Training loop, early stopping, stratified splits and checkpoints."""
from .checkpoint import (
    CheckpointVersionError,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .estimator import SiameseCNNClassifier
from .loop import (
    DESK_LR,
    FULL_LR,
    EarlyStopping,
    EpochRecord,
    TrainConfig,
    TrainHistory,
    TrainingDivergence,
    evaluate_loss,
    fit_arrays,
    stopping_epoch,
    train,
)
from .split import SplitError, split_dataset, stratified_counts

__all__ = [
    "CheckpointVersionError", "DESK_LR", "EarlyStopping", "EpochRecord", "FULL_LR",
    "SiameseCNNClassifier", "SplitError", "TrainConfig", "TrainHistory", "TrainingDivergence",
    "decode_checkpoint", "encode_checkpoint", "evaluate_loss", "fit_arrays", "load_checkpoint",
    "save_checkpoint", "split_dataset", "stopping_epoch", "stratified_counts", "train",
]
