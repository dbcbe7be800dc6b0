"""Analytic model profiler: parameter counts, MACs, FLOPs, serialized bytes.

Conventions (stated because reported reduction figures depend on them):
conv1d = out_ch * L_out * in_ch * kernel MACs; linear = in * out; LSTM =
4 * (input*hidden + hidden^2) * timesteps (doubled if bidirectional); bias
adds excluded; FLOPs = 2 * MACs.  Counts are per window (batch of 1).
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import VidsError
from ..tensor.graph import Conv1d, GraphSpec, Linear, Lstm

# Reference reduction figures reported for the full-scale deployment of this
# pipeline; desk-scale reports print them alongside measured values, never as
# pass/fail targets.
FULL_SCALE_REFERENCE = {
    "model_size_reduction_pct": 77.2,
    "flops_reduction_pct": 34.17,
    "macs_reduction_pct": 54.15,
    "performance_loss_pct": 5.0,
}


@dataclass
class ModelProfile:
    parameter_count: int
    serialized_bytes: int
    flops: int
    macs: int

    def to_dict(self) -> dict:
        return {"parameter_count": self.parameter_count,
                "serialized_bytes": self.serialized_bytes,
                "flops": self.flops, "macs": self.macs}


def count_params(graph: GraphSpec) -> int:
    import numpy as np
    return int(sum(np.prod(shape) for shape in graph.param_specs().values()))


def count_macs(graph: GraphSpec) -> int:
    """Multiply-accumulates for one forward pass of a single window."""
    macs = 0
    shape = graph.input_shape
    in_shapes = [graph.input_shape] + graph.activation_shapes()[:-1]
    for layer, shape in zip(graph.layers, in_shapes):
        if isinstance(layer, Conv1d):
            if len(shape) == 1:
                shape = (layer.in_ch, shape[0] // layer.in_ch)
            l_out = (shape[1] + 2 * layer.padding - layer.kernel) // layer.stride + 1
            macs += layer.out_ch * l_out * layer.in_ch * layer.kernel
        elif isinstance(layer, Linear):
            macs += layer.in_features * layer.out_features
        elif isinstance(layer, Lstm):
            if len(shape) != 2:
                raise VidsError("LSTM input shape must be (channels, length)")
            per_step = 4 * (layer.input_size * layer.hidden_size
                            + layer.hidden_size ** 2)
            macs += per_step * shape[1] * (2 if layer.bidirectional else 1)
    return int(macs)


def profile(graph: GraphSpec, serialized_bytes: int = 0) -> ModelProfile:
    """Analytic profile of a graph; pass the measured container size for the
    bytes field (0 when only compute counts are wanted)."""
    macs = count_macs(graph)
    return ModelProfile(parameter_count=count_params(graph),
                        serialized_bytes=int(serialized_bytes),
                        flops=2 * macs, macs=macs)


@dataclass
class ProfileReport:
    before: ModelProfile
    after: ModelProfile

    def reduction_pct(self, field: str) -> float:
        b = getattr(self.before, field)
        a = getattr(self.after, field)
        return 0.0 if b == 0 else 100.0 * (b - a) / b

    def to_kv(self) -> dict:
        out = {}
        for tag, prof in (("before", self.before), ("after", self.after)):
            for key, val in prof.to_dict().items():
                out[f"{tag}.{key}"] = val
        for field in ("parameter_count", "serialized_bytes", "flops", "macs"):
            out[f"reduction_pct.{field}"] = round(self.reduction_pct(field), 4)
        for key, val in FULL_SCALE_REFERENCE.items():
            out[f"reference.{key}"] = val
        out["convention"] = "flops=2*macs; bias adds excluded; per-window"
        return out
