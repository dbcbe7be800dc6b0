"""L1 structured filter pruning with downstream rewiring.

Filter importance is the plain L1 norm of each filter's weights.  Per conv
layer the floor(p*F) lowest-importance filters go (ties: lower index first),
and every downstream consumer -- the next conv's input channels, an LSTM's
input columns, a linear layer's flattened input block -- is sliced to match.
A conv whose output is the graph's final output is never pruned: its width
is an external contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import VidsError
from ..tensor import Tensor
from ..tensor.graph import (Conv1d, GraphSpec, Linear, Lstm, ParamStore, ReLU,
                            Softmax)


@dataclass
class PruneConfig:
    ratio: float = 0.4
    finetune_epochs: int = 10
    target_layers: str = "conv"

    def __post_init__(self):
        if not 0.0 <= self.ratio < 1.0:
            raise VidsError("prune ratio must be in [0, 1)")
        if self.finetune_epochs < 0:
            raise VidsError("finetune_epochs must be >= 0")
        if self.target_layers != "conv":
            raise VidsError("only conv-layer pruning is supported")


def filter_importance(weights: np.ndarray) -> np.ndarray:
    """Per-filter sum of absolute weights (output-channel axis first)."""
    w = np.asarray(weights)
    return np.abs(w).reshape(w.shape[0], -1).sum(axis=1)


def random_importance(weights: np.ndarray, seed: int = 0) -> np.ndarray:
    """Ablation alternative: random ranking instead of L1 scores."""
    return np.random.default_rng(seed).random(np.asarray(weights).shape[0])


def _keep_indices(scores: np.ndarray, ratio: float) -> np.ndarray:
    n_remove = int(np.floor(ratio * scores.shape[0]))
    if scores.shape[0] - n_remove < 1:
        raise VidsError("pruning would remove every filter of a layer")
    order = np.argsort(scores, kind="stable")      # ties: lower index first
    removed = set(order[:n_remove].tolist())
    return np.array([i for i in range(scores.shape[0]) if i not in removed],
                    dtype=np.int64)


def prune_filters(graph: GraphSpec, params: ParamStore, config: PruneConfig,
                  scorer=filter_importance) -> tuple:
    """Return a rewired (graph, params) pair; inputs are left untouched.

    Importance is scored on the pre-pruning weights of every prunable conv
    before any rewiring, per the compression procedure.
    """
    layers = graph.layers
    last_param_idx = max((i for i, l in enumerate(layers)
                          if isinstance(l, (Conv1d, Linear, Lstm))), default=-1)
    keep_sets = {}
    for i, layer in enumerate(layers):
        if isinstance(layer, Conv1d) and i < last_param_idx and config.ratio > 0:
            scores = scorer(params[f"{layer.name}.weight"].data)
            keep_sets[i] = _keep_indices(scores, config.ratio)

    # shapes of each layer's input in the original graph (for flatten math)
    in_shapes = [graph.input_shape] + graph.activation_shapes()[:-1]

    new_layers = []
    new_params = ParamStore()
    in_keep = None            # kept channel indices of the upstream activation
    for i, layer in enumerate(layers):
        if isinstance(layer, Conv1d):
            w = params[f"{layer.name}.weight"].data
            b = params[f"{layer.name}.bias"].data
            in_ch = layer.in_ch
            if in_keep is not None:
                w = w[:, in_keep, :]
                in_ch = len(in_keep)
            keep = keep_sets.get(i)
            if keep is not None:
                w = w[keep]
                b = b[keep]
                out_ch = len(keep)
                in_keep = keep
            else:
                out_ch = layer.out_ch
                in_keep = None
            new_layers.append(Conv1d(layer.name, in_ch, out_ch, layer.kernel,
                                     layer.stride, layer.padding))
            new_params[f"{layer.name}.weight"] = Tensor(w.copy(), requires_grad=True)
            new_params[f"{layer.name}.bias"] = Tensor(b.copy(), requires_grad=True)
        elif isinstance(layer, Lstm):
            suffixes = ["", "_rev"] if layer.bidirectional else [""]
            input_size = layer.input_size
            for sfx in suffixes:
                w_ih = params[f"{layer.name}.w_ih{sfx}"].data
                if in_keep is not None:
                    w_ih = w_ih[:, in_keep]
                new_params[f"{layer.name}.w_ih{sfx}"] = Tensor(
                    w_ih.copy(), requires_grad=True)
                for part in (f"w_hh{sfx}", f"b_ih{sfx}", f"b_hh{sfx}"):
                    new_params[f"{layer.name}.{part}"] = Tensor(
                        params[f"{layer.name}.{part}"].data.copy(),
                        requires_grad=True)
            if in_keep is not None:
                input_size = len(in_keep)
            new_layers.append(Lstm(layer.name, input_size, layer.hidden_size,
                                   layer.bidirectional))
            in_keep = None
        elif isinstance(layer, Linear):
            w = params[f"{layer.name}.weight"].data
            in_features = layer.in_features
            if in_keep is not None:
                shape = in_shapes[i]
                if len(shape) != 2:
                    raise VidsError(f"cannot rewire linear '{layer.name}': "
                                    "pruned input is not channel-structured")
                length = shape[1]
                flat = np.concatenate([np.arange(c * length, (c + 1) * length)
                                       for c in in_keep])
                w = w[:, flat]
                in_features = len(flat)
            new_layers.append(Linear(layer.name, in_features, layer.out_features))
            new_params[f"{layer.name}.weight"] = Tensor(w.copy(), requires_grad=True)
            new_params[f"{layer.name}.bias"] = Tensor(
                params[f"{layer.name}.bias"].data.copy(), requires_grad=True)
            in_keep = None
        elif isinstance(layer, (ReLU, Softmax)):
            new_layers.append(layer)
        else:
            raise VidsError(f"cannot prune around layer {layer}")

    # non-graph tensors (e.g. an auxiliary head off the LSTM state) pass through
    for name, tensor in params.tensors.items():
        if name not in new_params:
            new_params[name] = Tensor(tensor.data.copy(),
                                      requires_grad=tensor.requires_grad)

    new_graph = GraphSpec(tuple(new_layers), graph.input_shape)
    new_graph.validate()
    return new_graph, new_params
