"""Reconstruction-error scoring and IQR threshold rules.

Scores combine the plain MSE between a window and its reconstruction with
the Mahalanobis distance of the reconstruction from the training-data mean:
score = alpha * d_m + (1 - alpha) * mse.  Quartiles of the ground-truth
score distribution give the decision bands; quantiles use linear
interpolation between order statistics (positions (n-1)*q) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import VidsError
from ..tensor import no_grad
from .model import BiganModel

QUANTILE_CONVENTION = "linear"


@dataclass
class MahalanobisStats:
    """Mean and regularized inverse covariance of flattened training windows."""

    mu: np.ndarray
    sigma_inv: np.ndarray

    @staticmethod
    def fit(windows: np.ndarray, ridge_scale: float = 1e-6) -> "MahalanobisStats":
        """Fit on (N, features, w) or (N, d) training data; the covariance is
        ridge-regularized with eps = ridge_scale * trace(Sigma) / d before
        inversion so near-singular fits stay positive definite."""
        x = np.asarray(windows, dtype=np.float64)
        x = x.reshape(x.shape[0], -1)
        if x.shape[0] < 2:
            raise VidsError("need >= 2 windows to fit Mahalanobis statistics")
        mu = x.mean(axis=0)
        sigma = np.cov(x, rowvar=False, bias=True)
        sigma = np.atleast_2d(sigma)
        d = sigma.shape[0]
        eps = ridge_scale * max(np.trace(sigma), 1e-12) / d
        sigma[np.diag_indices(d)] += eps
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise VidsError("covariance is not positive definite after "
                            "regularization") from exc
        sigma_inv = np.linalg.inv(sigma)
        sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)
        return MahalanobisStats(mu=mu, sigma_inv=sigma_inv)

    @staticmethod
    def identity(dim: int) -> "MahalanobisStats":
        return MahalanobisStats(np.zeros(dim), np.eye(dim))

    def distance(self, values: np.ndarray) -> np.ndarray:
        """sqrt((v - mu)^T Sigma^-1 (v - mu)) for one flattened vector or a
        (N, d) batch."""
        v = np.asarray(values, dtype=np.float64)
        squeeze = v.ndim == 1
        v = np.atleast_2d(v.reshape(-1, self.mu.shape[0]) if v.ndim > 2 else v)
        diff = v - self.mu
        quad = np.einsum("ni,ij,nj->n", diff, self.sigma_inv, diff)
        out = np.sqrt(np.maximum(quad, 0.0))
        return float(out[0]) if squeeze else out


def reconstruction_error(x: np.ndarray, x_rec: np.ndarray,
                         stats: MahalanobisStats, alpha: float) -> tuple:
    """(mse, d_m, combined) for one window and its reconstruction."""
    x = np.asarray(x, dtype=np.float64)
    x_rec = np.asarray(x_rec, dtype=np.float64)
    if x.shape != x_rec.shape:
        raise VidsError(f"shape mismatch: {x.shape} vs {x_rec.shape}")
    mse = float(np.mean((x - x_rec) ** 2))
    d_m = float(stats.distance(x_rec.reshape(-1)))
    combined = alpha * d_m + (1.0 - alpha) * mse
    return mse, d_m, combined


def score_windows(model: BiganModel, windows: np.ndarray,
                  stats: MahalanobisStats, alpha: float,
                  batch_size: int = 256) -> dict:
    """Batched scoring of normalized windows; returns mse/d_m/combined arrays."""
    n = windows.shape[0]
    mses = np.zeros(n)
    dms = np.zeros(n)
    for start in range(0, n, batch_size):
        x = windows[start:start + batch_size]
        with no_grad():
            rec = model.reconstruct(x).data
        mses[start:start + len(x)] = np.mean(
            (x.astype(np.float64) - rec.astype(np.float64)) ** 2, axis=(1, 2))
        dms[start:start + len(x)] = stats.distance(
            rec.reshape(rec.shape[0], -1))
    return {"mse": mses, "d_m": dms,
            "combined": alpha * dms + (1.0 - alpha) * mses}


@dataclass
class ThresholdModel:
    alpha: float
    q1: float
    q3: float
    iqr: float
    ll: float
    ul: float
    quantile_convention: str = QUANTILE_CONVENTION

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("alpha", "q1", "q3", "iqr", "ll", "ul", "quantile_convention")}

    @staticmethod
    def from_dict(d: dict) -> "ThresholdModel":
        return ThresholdModel(**d)


def fit_thresholds(scores, alpha: float = 0.5) -> ThresholdModel:
    """Quartile bands of ground-truth scores: [q1, q3] and the 1.5*IQR-widened
    [ll, ul].  Two scores are the minimum the interpolating quartiles need."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size < 2:
        raise VidsError("need >= 2 scores to fit thresholds")
    q1, q3 = np.quantile(scores, [0.25, 0.75], method="linear")
    iqr = q3 - q1
    return ThresholdModel(alpha=alpha, q1=float(q1), q3=float(q3),
                          iqr=float(iqr), ll=float(q1 - 1.5 * iqr),
                          ul=float(q3 + 1.5 * iqr))


DECISION_MODES = ("band_llul", "band_q1q3")


@dataclass
class Stage1Decision:
    score: float
    anomaly_rule_fired: bool   # score < q1 or score > q3
    normal_rule_fired: bool    # ll <= score <= ul
    deployed_label: str        # "normal" | "anomalous"


def classify_stage1(score: float, model: ThresholdModel,
                    mode: str = "band_llul") -> Stage1Decision:
    """Apply both per-ground-truth rules plus the configured deployment rule.

    The rules overlap on [ll, q1) and (q3, ul]; the deployment mode picks
    which band defines "normal" for a single verdict.
    """
    if mode not in DECISION_MODES:
        raise VidsError(f"unknown decision mode {mode!r}")
    anomaly = score < model.q1 or score > model.q3
    normal = model.ll <= score <= model.ul
    if mode == "band_llul":
        label = "normal" if normal else "anomalous"
    else:
        label = "anomalous" if anomaly else "normal"
    return Stage1Decision(score=float(score), anomaly_rule_fired=anomaly,
                          normal_rule_fired=normal, deployed_label=label)


@dataclass
class Stage1Metrics:
    normal_recall: float | None
    anomaly_recall: float | None


def stage1_metrics(decisions, is_anomalous) -> Stage1Metrics:
    """Per-ground-truth recalls as reported in the ablation: normal instances
    are counted by the normal rule, anomalous instances by the anomaly rule."""
    flags_anom = np.array([d.anomaly_rule_fired for d in decisions], dtype=bool)
    flags_norm = np.array([d.normal_rule_fired for d in decisions], dtype=bool)
    truth = np.asarray(is_anomalous, dtype=bool)
    if truth.shape[0] != flags_anom.shape[0]:
        raise VidsError("decisions and labels differ in length")
    normal_recall = (float(flags_norm[~truth].mean())
                     if (~truth).any() else None)
    anomaly_recall = (float(flags_anom[truth].mean())
                      if truth.any() else None)
    return Stage1Metrics(normal_recall, anomaly_recall)
