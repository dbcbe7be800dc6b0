"""Classification losses over probability batches.

All three are batch means; probabilities are floored at 1e-12 before the log
so a confident wrong prediction cannot produce -inf.  Degeneracies hold
exactly: smoothing alpha = 0 and focal gamma = 0 both reduce to plain
cross-entropy arithmetic.
"""

from __future__ import annotations

import numpy as np

from ..errors import VidsError
from ..tensor import Tensor
from ..tensor import core

LOG_FLOOR = 1e-12


def _one_hot(labels: np.ndarray, num_classes: int, dtype) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise VidsError("labels must be a 1-D index array")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= num_classes:
        raise VidsError(f"label outside [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes), dtype=dtype)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _log_probs(probs: Tensor) -> Tensor:
    return core.log(core.maximum_const(probs, LOG_FLOOR))


def ce_loss(probs: Tensor, labels: np.ndarray) -> Tensor:
    probs = core.as_tensor(probs)
    n, c = probs.shape
    y = Tensor(_one_hot(labels, c, probs.data.dtype))
    return core.mul(core.tsum(core.mul(y, _log_probs(probs))), -1.0 / n)


def label_smoothing_loss(probs: Tensor, labels: np.ndarray,
                         alpha_s: float) -> Tensor:
    probs = core.as_tensor(probs)
    n, c = probs.shape
    y = _one_hot(labels, c, probs.data.dtype)
    weights = Tensor((1.0 - alpha_s) * y + alpha_s / c)
    return core.mul(core.tsum(core.mul(weights, _log_probs(probs))), -1.0 / n)


def focal_loss(probs: Tensor, labels: np.ndarray, gamma: float) -> Tensor:
    probs = core.as_tensor(probs)
    n, c = probs.shape
    y = Tensor(_one_hot(labels, c, probs.data.dtype))
    focus = core.power(core.sub(1.0, probs), gamma)
    term = core.mul(core.mul(focus, y), _log_probs(probs))
    return core.mul(core.tsum(term), -1.0 / n)


def make_loss(kind: str, smoothing: float, gamma: float):
    if kind == "ce":
        return ce_loss
    if kind == "lsmooth":
        return lambda p, l: label_smoothing_loss(p, l, smoothing)
    if kind == "focal":
        return lambda p, l: focal_loss(p, l, gamma)
    raise VidsError(f"unknown loss {kind!r}")
