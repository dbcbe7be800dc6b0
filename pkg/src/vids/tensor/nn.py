"""Forward kernels: 1-D convolution, linear, LSTM, softmax.

All kernels are compositions of the autodiff primitives in ``core``, so
they are differentiable to any order without bespoke backward code.
"""

from __future__ import annotations

import numpy as np

from . import core
from .core import Tensor, as_tensor


def conv1d(x, weight, bias, stride: int = 1, padding: int = 0) -> Tensor:
    """x: (B, C_in, L); weight: (C_out, C_in, K); bias: (C_out,)."""
    x = as_tensor(x)
    out_ch, in_ch, kernel = weight.shape
    cols = core.im2col(x, kernel, stride, padding)          # (B, C_in*K, L_out)
    wf = core.reshape(weight, (out_ch, in_ch * kernel))
    out = core.matmul(wf, cols)                             # (B, C_out, L_out)
    return core.add(out, core.reshape(bias, (1, out_ch, 1)))


def linear(x, weight, bias) -> Tensor:
    """x: (B, In); weight: (Out, In); bias: (Out,)."""
    out = core.matmul(x, core.transpose(weight, (1, 0)))
    return core.add(out, core.reshape(bias, (1, weight.shape[0])))


def lstm_cell(x_t, h, c, w_ih, w_hh, b_ih, b_hh):
    """One LSTM step. Gate order along the 4H axis: input, forget, cell, output."""
    hidden = w_hh.shape[1]
    gates = core.add(
        core.add(core.matmul(x_t, core.transpose(w_ih, (1, 0))),
                 core.matmul(h, core.transpose(w_hh, (1, 0)))),
        core.reshape(core.add(b_ih, b_hh), (1, 4 * hidden)))
    i = core.sigmoid(gates[:, 0 * hidden:1 * hidden])
    f = core.sigmoid(gates[:, 1 * hidden:2 * hidden])
    g = core.tanh(gates[:, 2 * hidden:3 * hidden])
    o = core.sigmoid(gates[:, 3 * hidden:4 * hidden])
    c_next = core.add(core.mul(f, c), core.mul(i, g))
    h_next = core.mul(o, core.tanh(c_next))
    return h_next, c_next


def lstm(x, w_ih, w_hh, b_ih, b_hh, reverse: bool = False) -> Tensor:
    """Run an LSTM over x (B, C, L) and return the final hidden state (B, H)."""
    x = as_tensor(x)
    batch, _, length = x.shape
    hidden = w_hh.shape[1]
    h = Tensor(np.zeros((batch, hidden), dtype=x.dtype))
    c = Tensor(np.zeros((batch, hidden), dtype=x.dtype))
    steps = range(length - 1, -1, -1) if reverse else range(length)
    for t in steps:
        x_t = x[:, :, t]
        h, c = lstm_cell(x_t, h, c, w_ih, w_hh, b_ih, b_hh)
    return h


def softmax(x, axis: int = -1) -> Tensor:
    """Numerically stable softmax; the shift is a detached constant."""
    x = as_tensor(x)
    shift = Tensor(np.max(x.data, axis=axis, keepdims=True))
    e = core.exp(core.sub(x, shift))
    return core.div(e, core.tsum(e, axis=axis if axis >= 0 else x.ndim + axis,
                                 keepdims=True))


relu = core.relu
