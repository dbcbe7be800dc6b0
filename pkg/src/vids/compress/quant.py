"""Static min-max quantization: observers, scale/zero-point fitting,
quantize / dequantize kernels, and whole-model conversion.

Weights use symmetric ranges (zero-point 0); activations use asymmetric
ranges widened to include zero, as the standard min-max observer does.
Rounding is half-away-from-zero everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import VidsError
from ..tensor import no_grad
from ..tensor.graph import (Conv1d, GraphSpec, Linear, Lstm, ParamStore, ReLU,
                            Softmax, forward, site_name)

RANGE_EPS = 1e-8

SCHEMES = ("symmetric_weight", "asymmetric_activation")


@dataclass
class QuantParams:
    scale: float
    zero_point: int
    bits: int = 8
    scheme: str = "symmetric_weight"
    observed_min: float = 0.0
    observed_max: float = 0.0

    def __post_init__(self):
        if self.scale <= 0:
            raise VidsError("scale must be positive")
        if self.scheme not in SCHEMES:
            raise VidsError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "symmetric_weight" and self.zero_point != 0:
            raise VidsError("symmetric weights require zero_point 0")
        if (self.scheme == "asymmetric_activation"
                and not 0 <= self.zero_point <= 2 ** self.bits - 1):
            raise VidsError("activation zero_point outside the code range")

    def to_dict(self) -> dict:
        return {"scale": self.scale, "zero_point": self.zero_point,
                "bits": self.bits, "scheme": self.scheme,
                "observed_min": self.observed_min,
                "observed_max": self.observed_max}

    @staticmethod
    def from_dict(d: dict) -> "QuantParams":
        return QuantParams(**d)


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def compute_qparams(observed_min: float, observed_max: float, bits: int = 8,
                    scheme: str = "symmetric_weight") -> QuantParams:
    """Fit (s, z) to an observed range: s = span / (2^n - 1); asymmetric z =
    round(-min/s), symmetric range is widened to +-max(|min|, |max|) with z=0.
    Degenerate ranges are widened by 1e-8."""
    if bits < 2:
        raise VidsError("need at least 2 bits")
    if observed_min > observed_max:
        raise VidsError("observed_min exceeds observed_max")
    levels = 2 ** bits - 1
    if scheme == "symmetric_weight":
        r = max(abs(observed_min), abs(observed_max))
        if 2.0 * r < RANGE_EPS:
            r = RANGE_EPS / 2.0
        scale = 2.0 * r / levels
        zero = 0
    elif scheme == "asymmetric_activation":
        lo = min(observed_min, 0.0)
        hi = max(observed_max, 0.0)
        if hi - lo < RANGE_EPS:
            hi = lo + RANGE_EPS
        scale = (hi - lo) / levels
        zero = int(np.clip(round_half_away(-lo / scale), 0, levels))
    else:
        raise VidsError(f"unknown scheme {scheme!r}")
    return QuantParams(scale=float(scale), zero_point=zero, bits=bits,
                       scheme=scheme, observed_min=float(observed_min),
                       observed_max=float(observed_max))


def quantize_weights(w: np.ndarray, qp: QuantParams) -> np.ndarray:
    """clamp(round(w / s), -2^(n-1), 2^(n-1) - 1); int8 payload for n <= 8."""
    lo, hi = -(2 ** (qp.bits - 1)), 2 ** (qp.bits - 1) - 1
    q = np.clip(round_half_away(np.asarray(w, dtype=np.float64) / qp.scale),
                lo, hi)
    return q.astype(np.int8 if qp.bits <= 8 else np.int32)


def quantize_activation(x: np.ndarray, qp: QuantParams) -> np.ndarray:
    """clamp(round(x / s) + z, 0, 2^n - 1), kept in int32 for accumulation."""
    hi = 2 ** qp.bits - 1
    q = np.clip(round_half_away(np.asarray(x, dtype=np.float64) / qp.scale)
                + qp.zero_point, 0, hi)
    return q.astype(np.int32)


def dequantize(q: np.ndarray, qp: QuantParams) -> np.ndarray:
    """V = s * (q - z); round-trip error is at most s/2 for in-range values."""
    return qp.scale * (np.asarray(q, dtype=np.float64) - qp.zero_point)


@dataclass
class ObserverState:
    """Running min/max per observed tensor; merging is associative, so
    per-shard observers can be combined."""

    ranges: dict = field(default_factory=dict)

    def update(self, name: str, values: np.ndarray) -> None:
        lo = float(np.min(values))
        hi = float(np.max(values))
        if name in self.ranges:
            old_lo, old_hi = self.ranges[name]
            lo, hi = min(lo, old_lo), max(hi, old_hi)
        self.ranges[name] = (lo, hi)

    def merge(self, other: "ObserverState") -> "ObserverState":
        out = ObserverState(dict(self.ranges))
        for name, (lo, hi) in other.ranges.items():
            if name in out.ranges:
                olo, ohi = out.ranges[name]
                out.ranges[name] = (min(lo, olo), max(hi, ohi))
            else:
                out.ranges[name] = (lo, hi)
        return out


def quant_sites(graph: GraphSpec) -> list:
    """Requantization points: the graph input, every ReLU output, and every
    conv/linear/LSTM output not followed by a ReLU (softmax stays float)."""
    sites = ["in"]
    layers = graph.layers
    for i, layer in enumerate(layers):
        if isinstance(layer, ReLU):
            sites.append(site_name(i, layer))
        elif isinstance(layer, (Conv1d, Linear, Lstm)):
            nxt = layers[i + 1] if i + 1 < len(layers) else None
            if not isinstance(nxt, ReLU):
                sites.append(site_name(i, layer))
    return sites


def calibrate(graph: GraphSpec, params: ParamStore, calibration: np.ndarray,
              batch_size: int = 128) -> tuple:
    """Run the calibration subset through the float model.

    Returns (activation ObserverState over the requantization sites, weight
    ranges read directly from the tensors)."""
    calibration = np.asarray(calibration, dtype=np.float32)
    if calibration.shape[0] == 0:
        raise VidsError("empty calibration set")
    wanted = set(quant_sites(graph))
    act = ObserverState()
    for start in range(0, calibration.shape[0], batch_size):
        collect = []
        with no_grad():
            forward(graph, params, calibration[start:start + batch_size],
                    collect=collect)
        for site, tensor in collect:
            if site in wanted:
                act.update(site, tensor.data)
    weights = ObserverState()
    for name, tensor in params.tensors.items():
        weights.update(name, tensor.data)
    return act, weights


@dataclass
class QuantizedModel:
    """Int8 weights plus per-site activation qparams over the same graph.

    Conv/linear biases are pre-scaled into the int32 accumulator domain
    (scale s_w * s_in); LSTM weights are stored int8 and dequantized for the
    gate math, its biases stay float.
    """

    graph: GraphSpec
    bits: int
    weights: dict            # name -> int ndarray
    weight_qp: dict          # name -> QuantParams
    biases: dict             # name -> int32 ndarray (accumulator domain)
    bias_scales: dict        # name -> float (s_w * s_in)
    float_tensors: dict      # name -> float ndarray (lstm biases)
    act_qp: dict             # site -> QuantParams


def _layer_input_sites(graph: GraphSpec) -> dict:
    """Map each parameterized layer name to the site providing its input."""
    current = "in"
    mapping = {}
    sites = set(quant_sites(graph))
    for i, layer in enumerate(graph.layers):
        if isinstance(layer, (Conv1d, Linear, Lstm)):
            mapping[layer.name] = current
        name = site_name(i, layer)
        if name in sites:
            current = name
    return mapping


def quantize_model(graph: GraphSpec, params: ParamStore, act_obs: ObserverState,
                   weight_obs: ObserverState, bits: int = 8) -> QuantizedModel:
    """Convert a calibrated float model to the quantized execution form."""
    act_qp = {site: compute_qparams(lo, hi, bits, "asymmetric_activation")
              for site, (lo, hi) in act_obs.ranges.items()}
    input_sites = _layer_input_sites(graph)
    weights, weight_qp, biases, bias_scales, float_tensors = {}, {}, {}, {}, {}

    for layer in graph.layers:
        if isinstance(layer, (Conv1d, Linear)):
            wname, bname = f"{layer.name}.weight", f"{layer.name}.bias"
            lo, hi = weight_obs.ranges[wname]
            qp = compute_qparams(lo, hi, bits, "symmetric_weight")
            weights[wname] = quantize_weights(params[wname].data, qp)
            weight_qp[wname] = qp
            in_site = input_sites[layer.name]
            if in_site not in act_qp:
                raise VidsError(f"no activation qparams for site {in_site!r}")
            s_acc = qp.scale * act_qp[in_site].scale
            biases[bname] = round_half_away(
                params[bname].data.astype(np.float64) / s_acc).astype(np.int32)
            bias_scales[bname] = s_acc
        elif isinstance(layer, Lstm):
            suffixes = ["", "_rev"] if layer.bidirectional else [""]
            for sfx in suffixes:
                for part in (f"w_ih{sfx}", f"w_hh{sfx}"):
                    name = f"{layer.name}.{part}"
                    lo, hi = weight_obs.ranges[name]
                    qp = compute_qparams(lo, hi, bits, "symmetric_weight")
                    weights[name] = quantize_weights(params[name].data, qp)
                    weight_qp[name] = qp
                for part in (f"b_ih{sfx}", f"b_hh{sfx}"):
                    name = f"{layer.name}.{part}"
                    float_tensors[name] = params[name].data.astype(np.float32)
    return QuantizedModel(graph=graph, bits=bits, weights=weights,
                          weight_qp=weight_qp, biases=biases,
                          bias_scales=bias_scales, float_tensors=float_tensors,
                          act_qp=act_qp)
