"""Adversarial objectives and the alternating training loop for Stage 1.

``wgan_gp_value`` evaluates the value function literally: data term minus
generated term plus lambda times the squared deviation of the input-gradient
norm from 1, with expectations as batch means.  The training loop ascends
the critic on (data - generated - lambda*penalty) -- the penalty acts as a
Lipschitz regularizer on the critic -- and descends the encoder/generator on
the data terms; see the notes on the value-vs-training distinction in the
repository docs.
"""

from __future__ import annotations

import numpy as np

from ..errors import TrainingDiverged
from ..tensor import Tensor, grad, no_grad, optimizer_step
from ..tensor import core
from ..tensor.graph import backward
from .model import BiganModel, Stage1Config, build_bigan


def _penalty(model: BiganModel, x_pen: Tensor, z: Tensor,
             eps: float = 0.0) -> Tensor:
    """lambda-free penalty term: mean((||d D / d x_pen||_2 - 1)^2).

    The training path passes a small eps inside the sqrt so a dead gradient
    path (norm exactly 0) cannot produce an infinite derivative; the value
    oracle uses eps=0 and stays exact."""
    d_pen = model.discriminate(x_pen, z)
    g = grad(core.tsum(d_pen), x_pen, create_graph=True)
    sq = core.tsum(core.mul(g, g), axis=(1, 2))
    if eps:
        sq = core.add(sq, eps)
    norms = core.sqrt(sq)
    dev = core.sub(norms, 1.0)
    return core.tmean(core.mul(dev, dev))


def _penalty_input(x: Tensor, x_hat: Tensor, mode: str, seed: int) -> Tensor:
    if mode == "generated":
        return x_hat
    u = np.random.default_rng(seed).uniform(size=(x.shape[0], 1, 1))
    u = Tensor(u.astype(x.data.dtype))
    return core.add(core.mul(u, x), core.mul(core.sub(1.0, u), x_hat))


def wgan_gp_value(model: BiganModel, batch, lambda_gp: float | None = None,
                  interpolation_seed: int = 0) -> Tensor:
    """Value of the adversarial objective on a batch, penalty included."""
    config = model.config
    lam = config.lambda_gp if lambda_gp is None else lambda_gp
    x = core.as_tensor(batch)
    z = model.encode(x)
    x_hat = model.generate(z)
    d_real = model.discriminate(x, z)
    d_fake = model.discriminate(x_hat, z)
    value = core.sub(core.tmean(d_real), core.tmean(d_fake))
    if lam > 0:
        x_pen = _penalty_input(x, x_hat, config.penalty_point, interpolation_seed)
        value = core.add(value, core.mul(_penalty(model, x_pen, z), lam))
    return value


def _critic_loss(model: BiganModel, x: Tensor, seed: int) -> Tensor:
    """Loss minimized by the discriminator step (E and G detached)."""
    config = model.config
    with no_grad():
        z = model.encode(x)
        x_hat = model.generate(z)
    d_real = model.discriminate(x, z)
    d_fake = model.discriminate(x_hat, z)
    if config.loss == "bce":
        return core.add(core.tmean(core.softplus(core.neg(d_real))),
                        core.tmean(core.softplus(d_fake)))
    loss = core.sub(core.tmean(d_fake), core.tmean(d_real))
    if config.loss == "wgan_gp" and config.lambda_gp > 0:
        with no_grad():
            pen_data = _penalty_input(x, x_hat, config.penalty_point, seed).data
        x_pen = Tensor(pen_data.copy(), requires_grad=True)
        loss = core.add(loss, core.mul(_penalty(model, x_pen, z, eps=1e-12),
                                       config.lambda_gp))
    return loss


def _eg_loss(model: BiganModel, x: Tensor) -> Tensor:
    """Loss minimized by the encoder/generator step."""
    z = model.encode(x)
    x_hat = model.generate(z)
    d_real = model.discriminate(x, z)
    d_fake = model.discriminate(x_hat, z)
    if model.config.loss == "bce":
        return core.neg(core.add(core.tmean(core.softplus(core.neg(d_real))),
                                 core.tmean(core.softplus(d_fake))))
    return core.sub(core.tmean(d_real), core.tmean(d_fake))


def train_stage1(config: Stage1Config, train_windows: np.ndarray,
                 log=None, model: BiganModel | None = None) -> tuple:
    """Train the BiGAN on ground-truth (normal) windows.

    ``train_windows``: (N, features, w) normalized array.  Returns the trained
    model plus a per-epoch history of mean critic / encoder-generator losses.
    Fully deterministic under a fixed config seed.  Passing an existing
    ``model`` continues its training (used when fine-tuning after pruning).
    """
    if model is None:
        model = build_bigan(config)
    rng = np.random.default_rng(config.seed)
    n = train_windows.shape[0]
    bs = config.optimizer.batch_size
    eg_params = {**model.enc_params.tensors, **model.gen_params.tensors}
    eg_store = _merged_store(model)
    history = []

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        d_losses, eg_losses = [], []
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            x = Tensor(train_windows[idx])
            for k in range(config.critic_steps):
                d_loss = _critic_loss(model, x, seed=config.seed + epoch + k)
                _check_finite(d_loss, epoch, "critic")
                grads = backward(d_loss, model.disc_params)
                optimizer_step(model.disc_params, grads, config.optimizer)
                d_losses.append(d_loss.item())
            eg_loss = _eg_loss(model, x)
            _check_finite(eg_loss, epoch, "encoder/generator")
            grads = backward(eg_loss, eg_params)
            optimizer_step(eg_store, grads, config.optimizer)
            eg_losses.append(eg_loss.item())
        entry = {"epoch": epoch, "critic_loss": float(np.mean(d_losses)),
                 "eg_loss": float(np.mean(eg_losses))}
        history.append(entry)
        if log:
            log(entry)
    return model, history


class _MergedStore:
    """View over encoder+generator stores so one optimizer updates both."""

    def __init__(self, model: BiganModel):
        self.tensors = {**model.enc_params.tensors, **model.gen_params.tensors}
        self.opt_state: dict = {}

    def trainable(self):
        return {n: t for n, t in self.tensors.items()
                if t.data.dtype.kind == "f"}


def _merged_store(model: BiganModel) -> _MergedStore:
    return _MergedStore(model)


def _check_finite(loss: Tensor, epoch: int, which: str):
    if not np.isfinite(loss.data).all():
        raise TrainingDiverged(f"{which} loss became non-finite at epoch {epoch}")
