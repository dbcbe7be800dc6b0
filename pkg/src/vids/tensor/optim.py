"""Parameter update rules: RMSProp, Adam, and a plain-SGD fallback."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import VidsError
from .graph import ParamStore


@dataclass
class OptimizerConfig:
    kind: str = "adam"              # rmsprop | adam | sgd
    learning_rate: float = 3e-4
    batch_size: int = 64
    seed: int = 0
    rmsprop_alpha: float = 0.99
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise VidsError("learning_rate must be positive")
        if self.kind not in ("rmsprop", "adam", "sgd"):
            raise VidsError(f"unknown optimizer kind {self.kind!r}")


def optimizer_step(params: ParamStore, grads: dict, config: OptimizerConfig) -> None:
    """Update every trainable tensor in place and advance optimizer state."""
    trainable = params.trainable()
    missing = [n for n in trainable if n not in grads]
    if missing:
        raise VidsError(f"missing gradients for {missing}")
    lr = config.learning_rate
    for name, tensor in trainable.items():
        g = np.asarray(grads[name], dtype=tensor.data.dtype)
        state = params.opt_state.setdefault(name, {})
        if config.kind == "sgd":
            tensor.data -= lr * g
        elif config.kind == "rmsprop":
            sq = state.setdefault("sq", np.zeros_like(tensor.data))
            sq *= config.rmsprop_alpha
            sq += (1.0 - config.rmsprop_alpha) * g * g
            tensor.data -= lr * g / (np.sqrt(sq) + config.eps)
        else:  # adam
            step = state.get("step", 0) + 1
            state["step"] = step
            m = state.setdefault("m", np.zeros_like(tensor.data))
            v = state.setdefault("v", np.zeros_like(tensor.data))
            m *= config.adam_beta1
            m += (1.0 - config.adam_beta1) * g
            v *= config.adam_beta2
            v += (1.0 - config.adam_beta2) * g * g
            m_hat = m / (1.0 - config.adam_beta1 ** step)
            v_hat = v / (1.0 - config.adam_beta2 ** step)
            tensor.data -= lr * m_hat / (np.sqrt(v_hat) + config.eps)
