"""Two-stage detection path: score -> threshold decision -> classification.

Stage 2 is consulted only for windows the deployment rule labels anomalous;
an optional reconstruction threshold then flags unknown attack classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compress.quant import QuantizedModel
from .compress.runtime import quantized_forward
from .data.windows import NormStats
from .errors import VidsError
from .stage1.model import BiganModel
from .stage1.scoring import (MahalanobisStats, ThresholdModel, classify_stage1,
                             score_windows)
from .stage2.model import Stage2Model, predict_probs
from .stage2.unseen import UnseenModel, reconstruction_mse


@dataclass
class Verdict:
    index: int
    sender_id: int
    score: float
    stage1_label: str            # normal | anomalous
    anomaly_rule_fired: bool
    normal_rule_fired: bool
    final_label: str             # "normal", a class label, or "unknown"
    reconstruction_error: float | None = None


@dataclass
class DetectionPipeline:
    stage1: BiganModel
    stage1_stats: MahalanobisStats
    thresholds: ThresholdModel
    stage1_norm: NormStats
    mode: str = "band_llul"
    stage2: Stage2Model | None = None
    stage2_norm: NormStats | None = None
    stage2_quant: QuantizedModel | None = None
    quant_classes: list | None = None
    unseen_threshold: float | None = None

    def alpha(self) -> float:
        return self.thresholds.alpha


def detect_windows(pipeline: DetectionPipeline, values: np.ndarray,
                   senders=None, prepared=None) -> list:
    """Run the full path over raw (unnormalized) windows.

    ``prepared`` may carry the stage-1-normalized batch (the benchmark times
    that normalization as data setup); otherwise it is computed here.
    """
    values = np.asarray(values, dtype=np.float32)
    n = values.shape[0]
    senders = np.zeros(n, dtype=np.int64) if senders is None else np.asarray(senders)
    x1 = pipeline.stage1_norm.apply(values) if prepared is None else prepared
    scores = score_windows(pipeline.stage1, x1, pipeline.stage1_stats,
                           pipeline.alpha())["combined"]

    verdicts = []
    anomalous_idx = []
    for i in range(n):
        decision = classify_stage1(scores[i], pipeline.thresholds, pipeline.mode)
        verdicts.append(Verdict(
            index=i, sender_id=int(senders[i]), score=float(scores[i]),
            stage1_label=decision.deployed_label,
            anomaly_rule_fired=decision.anomaly_rule_fired,
            normal_rule_fired=decision.normal_rule_fired,
            final_label="normal"))
        if decision.deployed_label == "anomalous":
            anomalous_idx.append(i)

    if anomalous_idx:
        _classify_anomalous(pipeline, values, anomalous_idx, verdicts)
    return verdicts


def _classify_anomalous(pipeline, values, idx, verdicts) -> None:
    if pipeline.stage2 is None and pipeline.stage2_quant is None:
        for i in idx:
            verdicts[i].final_label = "anomalous"
        return
    if pipeline.stage2_norm is None:
        raise VidsError("stage-2 normalization statistics missing")
    x2 = pipeline.stage2_norm.apply(values[idx])

    if pipeline.stage2_quant is not None:
        probs = quantized_forward(pipeline.stage2_quant, x2)
        classes = pipeline.quant_classes
        for row, i in enumerate(idx):
            verdicts[i].final_label = str(classes[int(probs[row].argmax())])
        return

    model = pipeline.stage2
    probs = predict_probs(model, x2)
    recon = None
    if pipeline.unseen_threshold is not None:
        recon = reconstruction_mse(model, x2)
    for row, i in enumerate(idx):
        label = str(model.classes[int(probs[row].argmax())])
        if recon is not None:
            verdicts[i].reconstruction_error = float(recon[row])
            if recon[row] > pipeline.unseen_threshold:
                label = "unknown"
        verdicts[i].final_label = label


def unseen_pipeline(pipeline: DetectionPipeline, umodel: UnseenModel,
                    norm: NormStats) -> DetectionPipeline:
    """Swap in a retrained known-classes model with its unseen threshold."""
    return DetectionPipeline(
        stage1=pipeline.stage1, stage1_stats=pipeline.stage1_stats,
        thresholds=pipeline.thresholds, stage1_norm=pipeline.stage1_norm,
        mode=pipeline.mode, stage2=umodel.base, stage2_norm=norm,
        unseen_threshold=umodel.threshold)
