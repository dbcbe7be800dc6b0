"""Latency benchmark: data setup vs prediction, median over repetitions.

Setup covers normalization and batch layout of incoming windows; prediction
covers the model forward passes.  Model load time is excluded.  Absolute
numbers are hardware-specific and are reported, never asserted.
"""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass

import numpy as np

from .errors import VidsError


@dataclass
class BenchReport:
    total_windows: int
    unique_vehicles: int
    repetitions: int
    data_setup_s: float
    prediction_s: float
    total_s: float
    per_vehicle_s: float
    environment: str

    def to_kv(self) -> dict:
        return {
            "total_windows": self.total_windows,
            "unique_vehicles": self.unique_vehicles,
            "repetitions": self.repetitions,
            "data_setup_s": repr(self.data_setup_s),
            "prediction_s": repr(self.prediction_s),
            "total_inference_s": repr(self.total_s),
            "per_vehicle_s": repr(self.per_vehicle_s),
            "environment": self.environment,
            "split": "setup=normalization+layout; prediction=model forward",
        }


def bench(setup_fn, predict_fn, windows: np.ndarray, senders,
          repetitions: int = 5, warmup: int = 1,
          environment: str | None = None) -> tuple:
    """Time ``setup_fn(windows) -> prepared`` and ``predict_fn(prepared)``.

    Warm-up iterations are excluded; the report carries medians.  Returns
    (BenchReport, predictions from the last repetition).
    """
    windows = np.asarray(windows)
    if windows.shape[0] == 0:
        raise VidsError("nothing to benchmark")
    if repetitions < 1:
        raise VidsError("need at least one repetition")
    senders = np.asarray(senders)
    vehicles = int(np.unique(senders).shape[0])

    for _ in range(warmup):
        predict_fn(setup_fn(windows))

    setup_times, predict_times = [], []
    predictions = None
    for _ in range(repetitions):
        t0 = time.perf_counter()
        prepared = setup_fn(windows)
        t1 = time.perf_counter()
        predictions = predict_fn(prepared)
        t2 = time.perf_counter()
        setup_times.append(t1 - t0)
        predict_times.append(t2 - t1)

    setup_s = float(np.median(setup_times))
    predict_s = float(np.median(predict_times))
    total = setup_s + predict_s
    report = BenchReport(
        total_windows=int(windows.shape[0]), unique_vehicles=vehicles,
        repetitions=repetitions, data_setup_s=setup_s, prediction_s=predict_s,
        total_s=total, per_vehicle_s=total / vehicles,
        environment=environment or platform.platform())
    return report, predictions
