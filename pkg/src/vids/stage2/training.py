"""Training loop for the attack classifier (with optional reconstructive head)."""

from __future__ import annotations

import numpy as np

from ..errors import TrainingDiverged, VidsError
from ..tensor import Tensor, forward, init_params, optimizer_step
from ..tensor import core
from ..tensor.graph import backward
from .losses import make_loss
from .model import Stage2Config, Stage2Model, build_classifier


def _split_labels(windows, labels):
    if labels is None:
        labels = np.array([w.label for w in windows], dtype=np.int64)
        from ..data.windows import windows_to_array
        windows = windows_to_array(windows)
    else:
        labels = np.asarray(labels, dtype=np.int64)
    return np.asarray(windows, dtype=np.float32), labels


def train_stage2(config: Stage2Config, windows, labels=None, log=None,
                 with_recon_head: bool = False) -> tuple:
    """Train on anomalous windows (labels 1..19; class 0 must be absent).

    Returns (Stage2Model, history).  ``with_recon_head`` adds a linear map
    from the LSTM state back to the flattened window, trained jointly with an
    auxiliary MSE term, for the unseen-attack detector.
    """
    x, raw_labels = _split_labels(windows, labels)
    if x.shape[0] == 0:
        raise VidsError("no training windows")
    if (raw_labels == 0).any():
        raise VidsError("class-0 (normal) windows must not enter stage 2")
    classes = sorted(set(int(l) for l in raw_labels))
    if len(classes) < 2:
        raise VidsError("need at least 2 classes to train a classifier")
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[int(l)] for l in raw_labels], dtype=np.int64)

    graph = build_classifier(config, num_classes=len(classes))
    params = init_params(graph, seed=config.seed)
    model = Stage2Model(config, graph, params, classes)
    if with_recon_head:
        _add_recon_head(model)

    rng = np.random.default_rng(config.seed)
    n = x.shape[0]
    n_val = int(round(n * config.val_fraction))
    order = rng.permutation(n)
    val_idx, train_idx = order[:n_val], order[n_val:]
    if train_idx.size == 0:
        raise VidsError("validation fraction leaves no training data")
    loss_fn = make_loss(config.loss, config.smoothing, config.gamma)

    history = []
    bs = config.optimizer.batch_size
    for epoch in range(config.epochs):
        perm = rng.permutation(train_idx)
        losses = []
        for start in range(0, perm.size, bs):
            idx = perm[start:start + bs]
            loss = _batch_loss(model, x[idx], y[idx], loss_fn, with_recon_head)
            if not np.isfinite(loss.data).all():
                raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
            grads = backward(loss, model.params)
            optimizer_step(model.params, grads, config.optimizer)
            losses.append(loss.item())
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if val_idx.size:
            entry["val_accuracy"] = _accuracy(model, x[val_idx], y[val_idx])
        history.append(entry)
        if log:
            log(entry)
    return model, history


def _add_recon_head(model: Stage2Model) -> None:
    config = model.config
    width = config.hidden * (2 if config.bidirectional else 1)
    out = config.features * config.window
    rng = np.random.default_rng(config.seed + 7)
    bound = float(np.sqrt(1.0 / width))
    model.params["recon.weight"] = Tensor(
        rng.uniform(-bound, bound, size=(out, width)).astype(np.float32),
        requires_grad=True)
    model.params["recon.bias"] = Tensor(
        rng.uniform(-bound, bound, size=(out,)).astype(np.float32),
        requires_grad=True)


def forward_with_lstm(model: Stage2Model, x) -> tuple:
    """(probs, lstm final state) for a batch; the state feeds the recon head."""
    collect = []
    probs = forward(model.graph, model.params, x, collect=collect)
    site = model.lstm_site()
    hidden = dict(collect)[site]
    return probs, hidden


def recon_output(model: Stage2Model, hidden) -> "core.Tensor":
    from ..tensor import nn
    return nn.linear(hidden, model.params["recon.weight"],
                     model.params["recon.bias"])


def _batch_loss(model, xb, yb, loss_fn, with_recon):
    if not with_recon:
        probs = forward(model.graph, model.params, xb)
        return loss_fn(probs, yb)
    probs, hidden = forward_with_lstm(model, xb)
    cls = loss_fn(probs, yb)
    rec = recon_output(model, hidden)
    target = Tensor(xb.reshape(xb.shape[0], -1))
    diff = core.sub(rec, target)
    mse = core.tmean(core.mul(diff, diff))
    return core.add(cls, core.mul(mse, model.config.recon_weight))


def _accuracy(model: Stage2Model, x: np.ndarray, y: np.ndarray) -> float:
    from .model import predict_probs
    pred = predict_probs(model, x).argmax(axis=1)
    return float((pred == y).mean())


def finetune_stage2(model: Stage2Model, windows, labels, epochs: int,
                    log=None) -> list:
    """Continue training an existing model (used after pruning).

    Zero epochs is a no-op.  Optimizer state starts fresh so a rewired graph
    is not coupled to stale moments."""
    if epochs == 0:
        return []
    x, raw_labels = _split_labels(windows, labels)
    index = {c: i for i, c in enumerate(model.classes)}
    try:
        y = np.array([index[int(l)] for l in raw_labels], dtype=np.int64)
    except KeyError as exc:
        raise VidsError(f"finetune label {exc} unknown to the model") from exc
    config = model.config
    loss_fn = make_loss(config.loss, config.smoothing, config.gamma)
    rng = np.random.default_rng(config.seed + 1)
    model.params.opt_state = {}
    has_recon = "recon.weight" in model.params
    history = []
    bs = config.optimizer.batch_size
    for epoch in range(epochs):
        perm = rng.permutation(x.shape[0])
        losses = []
        for start in range(0, perm.size, bs):
            idx = perm[start:start + bs]
            loss = _batch_loss(model, x[idx], y[idx], loss_fn, has_recon)
            if not np.isfinite(loss.data).all():
                raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
            grads = backward(loss, model.params)
            optimizer_step(model.params, grads, config.optimizer)
            losses.append(loss.item())
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        history.append(entry)
        if log:
            log(entry)
    return history
