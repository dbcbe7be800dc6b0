from .pipeline import compress_pipeline, sample_calibration
from .profiler import (FULL_SCALE_REFERENCE, ModelProfile, ProfileReport,
                       count_macs, count_params, profile)
from .prune import (PruneConfig, filter_importance, prune_filters,
                    random_importance)
from .quant import (ObserverState, QuantizedModel, QuantParams, calibrate,
                    compute_qparams, dequantize, quant_sites,
                    quantize_activation, quantize_model, quantize_weights,
                    round_half_away)
from .runtime import quantized_forward

__all__ = [
    "PruneConfig", "filter_importance", "random_importance", "prune_filters",
    "QuantParams", "ObserverState", "compute_qparams", "quantize_weights",
    "quantize_activation", "dequantize", "calibrate", "quantize_model",
    "QuantizedModel", "quant_sites", "round_half_away", "quantized_forward",
    "ModelProfile", "ProfileReport", "profile", "count_macs", "count_params",
    "FULL_SCALE_REFERENCE", "compress_pipeline", "sample_calibration",
]
