"""Unseen-attack flagging via a reconstructive head on the LSTM state.

The classifier is retrained on the known classes with an auxiliary linear
head that maps the LSTM state back to the flattened window.  The decision
boundary is a percentile (default 91) of the validation reconstruction MSE;
errors strictly above it flag the window as an unknown class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import VidsError
from ..tensor import no_grad
from .model import ClassProbs, Stage2Config, Stage2Model, classify_forward
from .training import forward_with_lstm, recon_output, train_stage2


@dataclass
class UnseenConfig:
    known_classes: tuple = tuple(range(1, 10))   # A1..A9
    percentile: float = 91.0
    val_fraction: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.percentile < 100.0:
            raise VidsError("percentile must be in (0, 100)")


@dataclass
class UnseenModel:
    base: Stage2Model
    threshold: float
    percentile: float


def reconstruction_mse(model: Stage2Model, windows: np.ndarray,
                       batch_size: int = 512) -> np.ndarray:
    """Per-window MSE between the recon-head output and the flattened input."""
    if "recon.weight" not in model.params:
        raise VidsError("model has no reconstructive head")
    x = np.asarray(windows, dtype=np.float32)
    out = np.zeros(x.shape[0])
    with no_grad():
        for start in range(0, x.shape[0], batch_size):
            xb = x[start:start + batch_size]
            _, hidden = forward_with_lstm(model, xb)
            rec = recon_output(model, hidden).data
            flat = xb.reshape(xb.shape[0], -1)
            out[start:start + len(xb)] = np.mean(
                (rec.astype(np.float64) - flat.astype(np.float64)) ** 2, axis=1)
    return out


def unseen_fit(model: Stage2Model, validation_windows: np.ndarray,
               percentile: float = 91.0) -> float:
    """Threshold = the given percentile of validation reconstruction errors,
    under the same linear-interpolation quantile convention as stage 1."""
    x = np.asarray(validation_windows, dtype=np.float32)
    if x.shape[0] == 0:
        raise VidsError("empty validation set")
    errors = reconstruction_mse(model, x)
    return float(np.quantile(errors, percentile / 100.0, method="linear"))


@dataclass
class UnseenDecision:
    known: bool
    reconstruction_error: float
    class_probs: ClassProbs | None = None


def unseen_detect(umodel: UnseenModel, window: np.ndarray) -> UnseenDecision:
    """Errors strictly above the threshold flag the window as unknown; ties
    at the fitted percentile stay known."""
    err = float(reconstruction_mse(umodel.base, window[None, ...])[0])
    if err > umodel.threshold:
        return UnseenDecision(known=False, reconstruction_error=err)
    return UnseenDecision(known=True, reconstruction_error=err,
                          class_probs=classify_forward(umodel.base, window))


def train_unseen(config: Stage2Config, unseen_cfg: UnseenConfig, windows,
                 labels=None, log=None) -> tuple:
    """Retrain stage 2 on the known classes with the reconstructive head and
    fit the percentile threshold on a held-out validation slice."""
    if labels is None:
        labels = np.array([w.label for w in windows], dtype=np.int64)
        from ..data.windows import windows_to_array
        windows = windows_to_array(windows)
    labels = np.asarray(labels, dtype=np.int64)
    x = np.asarray(windows, dtype=np.float32)
    known = np.isin(labels, list(unseen_cfg.known_classes))
    if not known.any():
        raise VidsError("no windows from the known classes")
    x_known, y_known = x[known], labels[known]

    rng = np.random.default_rng(config.seed + 13)
    order = rng.permutation(x_known.shape[0])
    n_val = max(1, int(round(x_known.shape[0] * unseen_cfg.val_fraction)))
    val_idx, train_idx = order[:n_val], order[n_val:]

    model, history = train_stage2(config, x_known[train_idx],
                                  y_known[train_idx], log=log,
                                  with_recon_head=True)
    threshold = unseen_fit(model, x_known[val_idx], unseen_cfg.percentile)
    return UnseenModel(base=model, threshold=threshold,
                       percentile=unseen_cfg.percentile), history
