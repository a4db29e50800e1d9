"""Key-frame guided clip classifier: model, losses, training and metrics."""

from usvideo.classifier.metrics import METRIC_NAMES, ClassificationMetrics, mean_metrics
from usvideo.classifier.model import (
    CANONICAL,
    DESK,
    REDUCED,
    ClassifierArch,
    ClassifierModel,
    ForwardResult,
    Gates,
    backward,
    forward,
    variant,
)
from usvideo.classifier.training import (
    AblationRow,
    ClassifierOutput,
    ClassifierTrainConfig,
    ClassifierTrainResult,
    ClipSet,
    CrossValResult,
    EpochLog,
    FoldOutcome,
    LossRecord,
    ablate,
    ablation_grid,
    batch_loss,
    build_clipset,
    classifier_forward,
    compute_losses,
    cross_validate,
    evaluate,
    loss_and_grads,
    make_folds,
    predict_proba,
    train_classifier,
)

__all__ = [
    "CANONICAL", "DESK", "METRIC_NAMES", "REDUCED", "AblationRow", "ClassificationMetrics", "ClassifierArch",
    "ClassifierModel", "ClassifierOutput", "ClassifierTrainConfig", "ClassifierTrainResult", "ClipSet",
    "CrossValResult", "EpochLog", "FoldOutcome", "ForwardResult", "Gates", "LossRecord", "ablate", "ablation_grid",
    "backward", "batch_loss", "build_clipset", "classifier_forward", "compute_losses", "cross_validate", "evaluate",
    "forward", "loss_and_grads", "make_folds", "mean_metrics", "predict_proba", "train_classifier", "variant",
]
