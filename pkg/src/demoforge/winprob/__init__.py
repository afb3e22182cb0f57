"""Round win-probability benchmark: samples, features, models and calibration metrics."""

from .features import (
    PLAYER_FEATURES,
    VECTOR_FEATURES,
    GameStateSample,
    Splits,
    build_dataset,
    featurize_set,
    featurize_vector,
    round_samples,
    set_arrays,
    split_sizes,
    vector_arrays,
)
from .metrics import (
    CalibrationBin,
    CalibrationReport,
    curve_csv,
    curve_svg,
    evaluate,
    expected_calibration_error,
    log_loss,
    score,
    win_curve,
)
from .models import (
    KINDS,
    TRAINERS,
    TrainedModel,
    TrainParams,
    load_model,
    save_model,
    train_boosted_stumps,
    train_deepsets,
    train_logreg,
    train_mlp,
)

__all__ = [
    "PLAYER_FEATURES", "VECTOR_FEATURES", "GameStateSample", "Splits", "build_dataset", "featurize_set",
    "featurize_vector", "round_samples", "set_arrays", "split_sizes", "vector_arrays", "CalibrationBin",
    "CalibrationReport", "curve_csv", "curve_svg", "evaluate", "expected_calibration_error", "log_loss",
    "score", "win_curve", "KINDS", "TRAINERS", "TrainedModel", "TrainParams", "load_model", "save_model",
    "train_boosted_stumps", "train_deepsets", "train_logreg", "train_mlp",
]
