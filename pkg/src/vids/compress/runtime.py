"""Quantized execution path.

Conv and linear layers run as integer multiply-accumulates over int32
accumulators with biases already in the accumulator domain; activations are
re-quantized at every observed site.  LSTM gates are computed in dequantized
real arithmetic from the int8 weights.  The final output is real-valued.
"""

from __future__ import annotations

import numpy as np

from ..errors import VidsError
from ..tensor.core import _im2col_data
from ..tensor.graph import Conv1d, Linear, Lstm, ReLU, Softmax, site_name
from .quant import QuantizedModel, dequantize, quantize_activation


class _State:
    """Activation flowing through the quantized graph: int codes with their
    qparams, or a float array between a matmul and its activation function."""

    def __init__(self, codes=None, qp=None, real=None):
        self.codes = codes
        self.qp = qp
        self.real = real

    @property
    def is_int(self):
        return self.codes is not None

    def to_real(self) -> np.ndarray:
        if self.is_int:
            return dequantize(self.codes, self.qp)
        return self.real


def quantized_forward(qmodel: QuantizedModel, x: np.ndarray,
                      collect: list | None = None) -> np.ndarray:
    """Run a (N, features, w) batch through the quantized model."""
    if "in" not in qmodel.act_qp:
        raise VidsError("missing qparams for the input site")
    x = np.asarray(x, dtype=np.float32)
    state = _State(codes=quantize_activation(x, qmodel.act_qp["in"]),
                   qp=qmodel.act_qp["in"])
    if collect is not None:
        collect.append(("in", state.to_real()))

    layers = qmodel.graph.layers
    for i, layer in enumerate(layers):
        site = site_name(i, layer)
        if isinstance(layer, Conv1d):
            state = _State(real=_int_conv(qmodel, layer, state))
        elif isinstance(layer, Linear):
            state = _State(real=_int_linear(qmodel, layer, state))
        elif isinstance(layer, Lstm):
            state = _State(real=_dequant_lstm(qmodel, layer, state))
        elif isinstance(layer, ReLU):
            state = _State(real=np.maximum(state.to_real(), 0.0))
        elif isinstance(layer, Softmax):
            logits = state.to_real()
            shifted = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            state = _State(real=e / e.sum(axis=1, keepdims=True))
        else:
            raise VidsError(f"unsupported layer in quantized graph: {layer}")
        if site in qmodel.act_qp and not isinstance(layer, Softmax):
            qp = qmodel.act_qp[site]
            state = _State(codes=quantize_activation(state.to_real(), qp), qp=qp)
        if collect is not None:
            collect.append((site, state.to_real()))
    return state.to_real().astype(np.float32)


def _require_int(state: _State, where: str) -> _State:
    if not state.is_int:
        raise VidsError(f"{where}: expected a re-quantized input "
                        "(missing qparams at the previous site)")
    return state


def _int_conv(qmodel: QuantizedModel, layer: Conv1d, state: _State) -> np.ndarray:
    state = _require_int(state, layer.name)
    codes = state.codes
    if codes.ndim == 2:
        codes = codes.reshape(codes.shape[0], layer.in_ch, -1)
    centered = (codes - state.qp.zero_point).astype(np.int32)
    cols = _im2col_data(centered, layer.kernel, layer.stride, layer.padding)
    wq = qmodel.weights[f"{layer.name}.weight"].astype(np.int32)
    wf = wq.reshape(layer.out_ch, layer.in_ch * layer.kernel)
    acc = np.matmul(wf, cols)                                   # int32
    acc += qmodel.biases[f"{layer.name}.bias"][None, :, None]
    s = qmodel.weight_qp[f"{layer.name}.weight"].scale * state.qp.scale
    return s * acc.astype(np.float64)


def _int_linear(qmodel: QuantizedModel, layer: Linear, state: _State) -> np.ndarray:
    state = _require_int(state, layer.name)
    codes = state.codes
    if codes.ndim == 3:
        codes = codes.reshape(codes.shape[0], -1)
    centered = (codes - state.qp.zero_point).astype(np.int32)
    wq = qmodel.weights[f"{layer.name}.weight"].astype(np.int32)
    acc = np.matmul(centered, wq.T)
    acc += qmodel.biases[f"{layer.name}.bias"][None, :]
    s = qmodel.weight_qp[f"{layer.name}.weight"].scale * state.qp.scale
    return s * acc.astype(np.float64)


def _dequant_lstm(qmodel: QuantizedModel, layer: Lstm, state: _State) -> np.ndarray:
    x = state.to_real()
    if x.ndim != 3:
        raise VidsError(f"{layer.name}: LSTM expects a (B, C, L) input")

    def weights(sfx):
        w_ih = dequantize(qmodel.weights[f"{layer.name}.w_ih{sfx}"],
                          qmodel.weight_qp[f"{layer.name}.w_ih{sfx}"])
        w_hh = dequantize(qmodel.weights[f"{layer.name}.w_hh{sfx}"],
                          qmodel.weight_qp[f"{layer.name}.w_hh{sfx}"])
        b = (qmodel.float_tensors[f"{layer.name}.b_ih{sfx}"].astype(np.float64)
             + qmodel.float_tensors[f"{layer.name}.b_hh{sfx}"].astype(np.float64))
        return w_ih, w_hh, b

    h = _np_lstm(x, *weights(""), reverse=False)
    if layer.bidirectional:
        h_rev = _np_lstm(x, *weights("_rev"), reverse=True)
        h = np.concatenate([h, h_rev], axis=1)
    return h


def _np_lstm(x: np.ndarray, w_ih: np.ndarray, w_hh: np.ndarray, b: np.ndarray,
             reverse: bool) -> np.ndarray:
    batch, _, length = x.shape
    hidden = w_hh.shape[1]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    steps = range(length - 1, -1, -1) if reverse else range(length)
    for t in steps:
        gates = x[:, :, t] @ w_ih.T + h @ w_hh.T + b
        i = _sig(gates[:, 0 * hidden:1 * hidden])
        f = _sig(gates[:, 1 * hidden:2 * hidden])
        g = np.tanh(gates[:, 2 * hidden:3 * hidden])
        o = _sig(gates[:, 3 * hidden:4 * hidden])
        c = f * c + i * g
        h = o * np.tanh(c)
    return h


def _sig(v):
    return np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                    np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
