import numpy as np
import pytest


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


def finite_difference(fn, params, eps=1e-5):
    """Central-difference gradients of a scalar fn() w.r.t. each Tensor in
    ``params`` (mutated in place, restored)."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        it = np.nditer(p.data, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p.data[idx]
            p.data[idx] = old + eps
            up = fn()
            p.data[idx] = old - eps
            down = fn()
            p.data[idx] = old
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def relative_error(analytic, numeric):
    denom = np.maximum(np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
