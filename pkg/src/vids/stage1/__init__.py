from .model import VARIANTS, BiganModel, Stage1Config, build_bigan
from .scoring import (DECISION_MODES, MahalanobisStats, Stage1Decision,
                      Stage1Metrics, ThresholdModel, classify_stage1,
                      fit_thresholds, reconstruction_error, score_windows,
                      stage1_metrics)
from .training import train_stage1, wgan_gp_value

__all__ = [
    "Stage1Config", "VARIANTS", "BiganModel", "build_bigan",
    "train_stage1", "wgan_gp_value",
    "MahalanobisStats", "reconstruction_error", "score_windows",
    "ThresholdModel", "fit_thresholds", "classify_stage1", "Stage1Decision",
    "Stage1Metrics", "stage1_metrics", "DECISION_MODES",
]
