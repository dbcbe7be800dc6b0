from .records import (BsmRecord, ParseResult, apply_labels, load_label_map,
                      parse_records, serialize_records)
from .synth import INJECTOR_LABELS, SynthConfig, kinematic_residuals, synth_generate
from .windows import (FeatureWindow, NormStats, make_windows, normalize_apply,
                      normalize_fit, window_labels, window_senders,
                      windows_to_array)

__all__ = [
    "BsmRecord", "ParseResult", "parse_records", "serialize_records",
    "load_label_map", "apply_labels",
    "FeatureWindow", "make_windows", "windows_to_array", "window_labels",
    "window_senders", "NormStats", "normalize_fit", "normalize_apply",
    "SynthConfig", "synth_generate", "kinematic_residuals", "INJECTOR_LABELS",
]
