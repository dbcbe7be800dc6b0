from .losses import ce_loss, focal_loss, label_smoothing_loss, make_loss
from .metrics import ConfusionMatrix, evaluate
from .model import (ClassProbs, Stage2Config, Stage2Model, build_classifier,
                    classify_forward, predict_probs)
from .training import finetune_stage2, train_stage2
from .unseen import (UnseenConfig, UnseenDecision, UnseenModel,
                     reconstruction_mse, train_unseen, unseen_detect,
                     unseen_fit)

__all__ = [
    "Stage2Config", "Stage2Model", "build_classifier", "classify_forward",
    "predict_probs", "ClassProbs",
    "ce_loss", "label_smoothing_loss", "focal_loss", "make_loss",
    "train_stage2", "finetune_stage2",
    "ConfusionMatrix", "evaluate",
    "UnseenConfig", "UnseenModel", "UnseenDecision", "unseen_fit",
    "unseen_detect", "train_unseen", "reconstruction_mse",
]
