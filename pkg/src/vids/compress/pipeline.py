"""End-to-end hybrid compression: prune -> fine-tune -> calibrate -> quantize."""

from __future__ import annotations

import numpy as np

from ..errors import VidsError
from ..tensor.graph import GraphSpec, ParamStore
from .profiler import ModelProfile, ProfileReport, profile
from .prune import PruneConfig, filter_importance, prune_filters
from .quant import QuantizedModel, calibrate, quantize_model


def sample_calibration(data: np.ndarray, count: int = 512,
                       seed: int = 0) -> np.ndarray:
    """Seed-deterministic calibration subset drawn from training data."""
    data = np.asarray(data, dtype=np.float32)
    if data.shape[0] == 0:
        raise VidsError("no data to sample a calibration set from")
    if data.shape[0] <= count:
        return data
    idx = np.random.default_rng(seed).choice(data.shape[0], size=count,
                                             replace=False)
    return data[np.sort(idx)]


def compress_pipeline(graph: GraphSpec, params: ParamStore, data: np.ndarray,
                      prune_config: PruneConfig, bits: int = 8,
                      finetune_fn=None, scorer=filter_importance,
                      bytes_before: int = 0, bytes_fn=None,
                      calibration_count: int = 512, seed: int = 0) -> tuple:
    """Run the full compression chain on a trained float model.

    ``finetune_fn(graph, params, epochs)`` reruns the owning stage's training
    objective on the pruned model.  ``bits >= 32`` is the passthrough mode:
    the model stays float and no calibration runs.  ``bytes_fn(model)`` maps
    a model (float (graph, params) pair or QuantizedModel) to its measured
    serialized size; when omitted the report's byte fields stay zero.

    Returns (compressed model, ProfileReport).  The compressed model is a
    QuantizedModel, or a (graph, params) tuple in passthrough mode.
    """
    before = profile(graph, serialized_bytes=bytes_before or
                     (bytes_fn((graph, params)) if bytes_fn else 0))

    pruned_graph, pruned_params = prune_filters(graph, params, prune_config,
                                                scorer=scorer)
    if finetune_fn is not None and prune_config.finetune_epochs > 0:
        finetune_fn(pruned_graph, pruned_params, prune_config.finetune_epochs)

    if bits >= 32:
        model = (pruned_graph, pruned_params)
        after = profile(pruned_graph, serialized_bytes=(
            bytes_fn(model) if bytes_fn else 0))
        return model, ProfileReport(before=before, after=after)

    calib = sample_calibration(data, calibration_count, seed)
    act_obs, weight_obs = calibrate(pruned_graph, pruned_params, calib)
    qmodel = quantize_model(pruned_graph, pruned_params, act_obs, weight_obs,
                            bits=bits)
    after = profile(pruned_graph, serialized_bytes=(
        bytes_fn(qmodel) if bytes_fn else 0))
    return qmodel, ProfileReport(before=before, after=after)
