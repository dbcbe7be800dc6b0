"""Fine-stage hybrid classifier: conv stack -> LSTM -> dense softmax head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import VidsError
from ..tensor import (Conv1d, GraphSpec, Linear, Lstm, OptimizerConfig,
                      ParamStore, ReLU, Softmax, forward, no_grad)


@dataclass
class Stage2Config:
    conv_layers: int = 2
    lstm_kind: str = "unidirectional"    # or "bidirectional"
    loss: str = "lsmooth"                # ce | lsmooth | focal
    smoothing: float = 0.1               # label-smoothing alpha
    gamma: float = 2.0                   # focal-loss focus
    epochs: int = 100
    num_classes: int = 19
    hidden: int = 64
    conv_channels: tuple = (32, 64)
    window: int = 20
    features: int = 8
    val_fraction: float = 0.2
    recon_weight: float = 1.0            # auxiliary reconstruction loss weight
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(
        kind="adam", learning_rate=3e-4))
    seed: int = 0

    def __post_init__(self):
        if self.conv_layers not in (1, 2):
            raise VidsError("conv_layers must be 1 or 2")
        if self.lstm_kind not in ("unidirectional", "bidirectional"):
            raise VidsError(f"unknown lstm_kind {self.lstm_kind!r}")
        if self.loss not in ("ce", "lsmooth", "focal"):
            raise VidsError(f"unknown loss {self.loss!r}")
        if not 0.0 <= self.smoothing < 1.0:
            raise VidsError("smoothing must be in [0, 1)")
        if self.gamma < 0:
            raise VidsError("gamma must be >= 0")

    @property
    def bidirectional(self) -> bool:
        return self.lstm_kind == "bidirectional"


def build_classifier(config: Stage2Config, num_classes: int | None = None) -> GraphSpec:
    num_classes = config.num_classes if num_classes is None else num_classes
    channels = config.conv_channels[:config.conv_layers]
    layers, cin = [], config.features
    for i, cout in enumerate(channels):
        layers += [Conv1d(f"cls.conv{i}", cin, cout, kernel=3, stride=1,
                          padding=1), ReLU()]
        cin = cout
    layers.append(Lstm("cls.lstm", cin, config.hidden,
                       bidirectional=config.bidirectional))
    width = config.hidden * (2 if config.bidirectional else 1)
    layers.append(Linear("cls.head", width, num_classes))
    layers.append(Softmax())
    graph = GraphSpec(tuple(layers), (config.features, config.window))
    graph.validate()
    return graph


@dataclass
class ClassProbs:
    probs: np.ndarray      # (C,), sums to 1
    predicted_index: int
    predicted_label: int


@dataclass
class Stage2Model:
    config: Stage2Config
    graph: GraphSpec
    params: ParamStore
    classes: list          # original labels, index-aligned with the head

    def lstm_site(self) -> str:
        from ..tensor.graph import site_name
        for i, layer in enumerate(self.graph.layers):
            if isinstance(layer, Lstm):
                return site_name(i, layer)
        raise VidsError("classifier graph has no LSTM layer")


def predict_probs(model: Stage2Model, windows: np.ndarray,
                  batch_size: int = 512) -> np.ndarray:
    """Class probabilities for a (N, features, w) batch of normalized windows."""
    outs = []
    with no_grad():
        for start in range(0, windows.shape[0], batch_size):
            outs.append(forward(model.graph, model.params,
                                windows[start:start + batch_size]).data)
    return np.concatenate(outs) if outs else np.zeros((0, len(model.classes)))


def classify_forward(model: Stage2Model, window: np.ndarray) -> ClassProbs:
    """Single-window forward pass; the window must already be normalized with
    the stage-2 training statistics."""
    probs = predict_probs(model, window[None, ...])[0]
    idx = int(np.argmax(probs))
    return ClassProbs(probs=probs, predicted_index=idx,
                      predicted_label=int(model.classes[idx]))
