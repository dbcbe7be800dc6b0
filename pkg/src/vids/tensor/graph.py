"""Declarative layer stacks executed over a named parameter store.

A GraphSpec is an ordered tuple of layer descriptors.  Shape coercion rules
keep the vocabulary minimal: a conv1d consuming a rank-2 activation reshapes
it to (B, in_ch, -1); a linear consuming a rank-3 activation flattens the
trailing (C, L) block row-major.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GraphError
from . import core, nn
from .core import Tensor


@dataclass(frozen=True)
class Conv1d:
    name: str
    in_ch: int
    out_ch: int
    kernel: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Lstm:
    name: str
    input_size: int
    hidden_size: int
    bidirectional: bool = False


@dataclass(frozen=True)
class Linear:
    name: str
    in_features: int
    out_features: int


@dataclass(frozen=True)
class Softmax:
    pass


LAYER_KINDS = {Conv1d: "conv1d", ReLU: "relu", Lstm: "lstm",
               Linear: "linear", Softmax: "softmax"}


@dataclass
class GraphSpec:
    """Ordered layer stack plus the per-sample input shape it expects."""

    layers: tuple
    input_shape: tuple  # (channels, length) or (features,)

    def __post_init__(self):
        self.layers = tuple(self.layers)
        self.input_shape = tuple(self.input_shape)

    def validate(self) -> tuple:
        """Check layer adjacency and parameter-name uniqueness; return output shape."""
        names = [l.name for l in self.layers if hasattr(l, "name")]
        if len(names) != len(set(names)):
            raise GraphError("duplicate layer names in graph")
        return self.output_shape()

    def output_shape(self) -> tuple:
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = _infer_shape(layer, shape, i)
        return shape

    def activation_shapes(self) -> list:
        """Per-layer output shapes (per sample), index-aligned with layers."""
        shapes = []
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = _infer_shape(layer, shape, i)
            shapes.append(shape)
        return shapes

    def param_specs(self) -> dict:
        """Map parameter name -> shape for every parameterized layer."""
        specs = {}
        for layer in self.layers:
            if isinstance(layer, Conv1d):
                specs[f"{layer.name}.weight"] = (layer.out_ch, layer.in_ch, layer.kernel)
                specs[f"{layer.name}.bias"] = (layer.out_ch,)
            elif isinstance(layer, Linear):
                specs[f"{layer.name}.weight"] = (layer.out_features, layer.in_features)
                specs[f"{layer.name}.bias"] = (layer.out_features,)
            elif isinstance(layer, Lstm):
                dirs = ("", "_rev") if layer.bidirectional else ("",)
                for suffix in dirs:
                    specs[f"{layer.name}.w_ih{suffix}"] = (4 * layer.hidden_size, layer.input_size)
                    specs[f"{layer.name}.w_hh{suffix}"] = (4 * layer.hidden_size, layer.hidden_size)
                    specs[f"{layer.name}.b_ih{suffix}"] = (4 * layer.hidden_size,)
                    specs[f"{layer.name}.b_hh{suffix}"] = (4 * layer.hidden_size,)
        return specs

    def to_dict(self) -> dict:
        out = {"input_shape": list(self.input_shape), "layers": []}
        for layer in self.layers:
            d = {"kind": LAYER_KINDS[type(layer)]}
            for f in getattr(layer, "__dataclass_fields__", {}):
                d[f] = getattr(layer, f)
            out["layers"].append(d)
        return out

    @staticmethod
    def from_dict(d: dict) -> "GraphSpec":
        kinds = {v: k for k, v in LAYER_KINDS.items()}
        layers = []
        for entry in d["layers"]:
            entry = dict(entry)
            cls = kinds[entry.pop("kind")]
            layers.append(cls(**entry))
        return GraphSpec(tuple(layers), tuple(d["input_shape"]))


def _infer_shape(layer, shape: tuple, index: int) -> tuple:
    where = f"layer {index} ({LAYER_KINDS[type(layer)]}" + (
        f" '{layer.name}')" if hasattr(layer, "name") else ")")
    if isinstance(layer, Conv1d):
        if len(shape) == 1:
            if shape[0] % layer.in_ch:
                raise GraphError(f"{where}: cannot reshape {shape[0]} features "
                                 f"into {layer.in_ch} channels")
            shape = (layer.in_ch, shape[0] // layer.in_ch)
        if shape[0] != layer.in_ch:
            raise GraphError(f"{where}: expected {layer.in_ch} input channels, "
                             f"got {shape[0]}")
        l_out = (shape[1] + 2 * layer.padding - layer.kernel) // layer.stride + 1
        if l_out < 1:
            raise GraphError(f"{where}: output length {l_out} is degenerate")
        return (layer.out_ch, l_out)
    if isinstance(layer, Linear):
        feats = int(np.prod(shape))
        if feats != layer.in_features:
            raise GraphError(f"{where}: expected {layer.in_features} input "
                             f"features, got {feats}")
        return (layer.out_features,)
    if isinstance(layer, Lstm):
        if len(shape) != 2:
            raise GraphError(f"{where}: LSTM needs a (channels, length) input")
        if shape[0] != layer.input_size:
            raise GraphError(f"{where}: expected input size {layer.input_size}, "
                             f"got {shape[0]}")
        width = layer.hidden_size * (2 if layer.bidirectional else 1)
        return (width,)
    if isinstance(layer, (ReLU, Softmax)):
        return shape
    raise GraphError(f"{where}: unknown layer kind")


class ParamStore:
    """Named tensors plus per-name optimizer state and quantization metadata."""

    def __init__(self, tensors: dict | None = None):
        self.tensors: dict[str, Tensor] = dict(tensors or {})
        self.opt_state: dict[str, dict] = {}
        self.qparams: dict[str, object] = {}

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __setitem__(self, name: str, value: Tensor):
        self.tensors[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list:
        return list(self.tensors)

    def trainable(self) -> dict:
        return {n: t for n, t in self.tensors.items()
                if t.data.dtype.kind == "f"}

    def copy(self) -> "ParamStore":
        out = ParamStore({n: Tensor(t.data.copy(), t.requires_grad)
                          for n, t in self.tensors.items()})
        out.qparams = dict(self.qparams)
        return out


def init_params(graph: GraphSpec, seed: int = 0, dtype=np.float32) -> ParamStore:
    """Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) init, deterministic per seed."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    for name, shape in graph.param_specs().items():
        fan_in = _fan_in(name, shape)
        bound = float(np.sqrt(1.0 / fan_in))
        data = rng.uniform(-bound, bound, size=shape).astype(dtype)
        store[name] = Tensor(data, requires_grad=True)
    return store


def _fan_in(name: str, shape: tuple) -> int:
    if name.endswith(".bias") or ".b_" in name:
        return max(int(shape[-1]) if len(shape) else 1, 1)
    if len(shape) == 3:          # conv weight (out, in, k)
        return shape[1] * shape[2]
    return shape[-1]             # linear / lstm weights


def forward(graph: GraphSpec, params: ParamStore, x, collect: list | None = None) -> Tensor:
    """Run the layer stack. ``collect`` (if given) receives (site, Tensor) pairs
    for the graph input and every layer output, usable by quantization
    observers and by heads that tap intermediate activations."""
    cur = core.as_tensor(x)
    if collect is not None:
        collect.append(("in", cur))
    for i, layer in enumerate(graph.layers):
        cur = _apply(layer, params, cur, i)
        if collect is not None:
            collect.append((site_name(i, layer), cur))
    return cur


def site_name(index: int, layer) -> str:
    return f"{index}:{LAYER_KINDS[type(layer)]}"


def _apply(layer, params: ParamStore, cur: Tensor, index: int) -> Tensor:
    where = f"layer {index} ({LAYER_KINDS[type(layer)]}" + (
        f" '{layer.name}')" if hasattr(layer, "name") else ")")
    if isinstance(layer, Conv1d):
        if cur.ndim == 2:
            if cur.shape[1] % layer.in_ch:
                raise GraphError(f"{where}: cannot reshape {cur.shape[1]} features "
                                 f"into {layer.in_ch} channels")
            cur = core.reshape(cur, (cur.shape[0], layer.in_ch,
                                     cur.shape[1] // layer.in_ch))
        if cur.ndim != 3 or cur.shape[1] != layer.in_ch:
            raise GraphError(f"{where}: expected (B, {layer.in_ch}, L) input, "
                             f"got {cur.shape}")
        return nn.conv1d(cur, params[f"{layer.name}.weight"],
                         params[f"{layer.name}.bias"],
                         layer.stride, layer.padding)
    if isinstance(layer, Linear):
        if cur.ndim == 3:
            cur = core.reshape(cur, (cur.shape[0], cur.shape[1] * cur.shape[2]))
        if cur.shape[1] != layer.in_features:
            raise GraphError(f"{where}: expected {layer.in_features} input "
                             f"features, got {cur.shape[1]}")
        return nn.linear(cur, params[f"{layer.name}.weight"],
                         params[f"{layer.name}.bias"])
    if isinstance(layer, Lstm):
        if cur.ndim != 3 or cur.shape[1] != layer.input_size:
            raise GraphError(f"{where}: expected (B, {layer.input_size}, L) "
                             f"input, got {cur.shape}")
        h = nn.lstm(cur, params[f"{layer.name}.w_ih"], params[f"{layer.name}.w_hh"],
                    params[f"{layer.name}.b_ih"], params[f"{layer.name}.b_hh"])
        if layer.bidirectional:
            h_rev = nn.lstm(cur, params[f"{layer.name}.w_ih_rev"],
                            params[f"{layer.name}.w_hh_rev"],
                            params[f"{layer.name}.b_ih_rev"],
                            params[f"{layer.name}.b_hh_rev"], reverse=True)
            h = core.concat([h, h_rev], axis=1)
        return h
    if isinstance(layer, ReLU):
        return nn.relu(cur)
    if isinstance(layer, Softmax):
        if cur.ndim != 2:
            raise GraphError(f"{where}: softmax expects (B, F) input, got {cur.shape}")
        return nn.softmax(cur, axis=1)
    raise GraphError(f"{where}: unknown layer kind")


def backward(loss: Tensor, params: ParamStore | dict) -> dict:
    """Gradients of a recorded scalar loss w.r.t. every tensor in ``params``,
    returned as plain arrays keyed by name."""
    tensors = params.tensors if isinstance(params, ParamStore) else dict(params)
    names = list(tensors)
    grads = core.grad(loss, [tensors[n] for n in names])
    return {n: g.data for n, g in zip(names, grads)}
