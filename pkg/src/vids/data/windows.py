"""Fixed-length feature windows and per-feature normalization."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import groupby

import numpy as np

from ..errors import VidsError
from .records import FEATURE_NAMES

NUM_FEATURES = len(FEATURE_NAMES)
STD_FLOOR = 1e-8


@dataclass
class FeatureWindow:
    """w consecutive samples from one sender, stored (features, w) to match
    the (batch, features, sequence_length) layer-input layout."""

    values: np.ndarray
    sender_id: int
    label: int


def make_windows(records, w: int, stride: int | None = None) -> list:
    """Cut per-sender, time-ordered, single-label runs into windows.

    Windows never straddle senders or label changes; senders with fewer than
    ``w`` records in a run yield nothing from that run.
    """
    if w < 1:
        raise VidsError("window size must be >= 1")
    stride = w if stride is None else stride
    if stride < 1:
        raise VidsError("stride must be >= 1")

    by_sender: dict[int, list] = {}
    for r in records:
        by_sender.setdefault(r.sender_id, []).append(r)

    windows = []
    for sender_id, recs in by_sender.items():
        recs = sorted(recs, key=lambda r: r.send_time)
        for label, run in groupby(recs, key=lambda r: r.label):
            run = list(run)
            n = len(run)
            if n < w:
                continue
            feats = np.array([r.features() for r in run], dtype=np.float32).T
            for start in range(0, n - w + 1, stride):
                windows.append(FeatureWindow(
                    values=np.ascontiguousarray(feats[:, start:start + w]),
                    sender_id=sender_id,
                    label=label,
                ))
    return windows


def windows_to_array(windows) -> np.ndarray:
    """Stack windows into a (N, features, w) float32 array."""
    if not windows:
        return np.zeros((0, NUM_FEATURES, 0), dtype=np.float32)
    return np.stack([wd.values for wd in windows]).astype(np.float32)


def window_labels(windows) -> np.ndarray:
    return np.array([wd.label for wd in windows], dtype=np.int64)


def window_senders(windows) -> np.ndarray:
    return np.array([wd.sender_id for wd in windows], dtype=np.int64)


@dataclass
class NormStats:
    """Per-feature mean/std fitted on training windows only (population std,
    floored at 1e-8)."""

    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(windows) -> "NormStats":
        if isinstance(windows, np.ndarray):
            arr = windows
        else:
            arr = windows_to_array(windows)
        if arr.size == 0:
            raise VidsError("cannot fit normalization on an empty training set")
        arr = arr.astype(np.float64)
        mean = arr.mean(axis=(0, 2))
        std = np.maximum(arr.std(axis=(0, 2)), STD_FLOOR)
        return NormStats(mean, std)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Normalize a (features, w) window or an (N, features, w) batch."""
        mean = self.mean.reshape(-1, 1) if values.ndim == 2 else self.mean.reshape(1, -1, 1)
        std = self.std.reshape(-1, 1) if values.ndim == 2 else self.std.reshape(1, -1, 1)
        return ((values - mean) / std).astype(np.float32)


def normalize_fit(train_windows) -> NormStats:
    return NormStats.fit(train_windows)


def normalize_apply(stats: NormStats, windows):
    """Return new FeatureWindows (or array) with normalized values."""
    if isinstance(windows, np.ndarray):
        return stats.apply(windows)
    return [FeatureWindow(stats.apply(wd.values), wd.sender_id, wd.label)
            for wd in windows]
