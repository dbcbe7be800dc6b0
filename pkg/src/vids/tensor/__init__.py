from .core import Tensor, as_tensor, grad, no_grad
from .graph import (Conv1d, GraphSpec, Linear, Lstm, ParamStore, ReLU, Softmax,
                    backward, forward, init_params, site_name)
from .optim import OptimizerConfig, optimizer_step

__all__ = [
    "Tensor", "as_tensor", "grad", "no_grad",
    "Conv1d", "ReLU", "Lstm", "Linear", "Softmax",
    "GraphSpec", "ParamStore", "forward", "backward", "init_params",
    "site_name", "OptimizerConfig", "optimizer_step",
]
