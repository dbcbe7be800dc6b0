"""Coarse-stage BiGAN: encoder / generator / discriminator construction.

Variants select layer counts and the adversarial loss; layer counts include
each net's dense head.  Channel widths follow one canonical ladder (32-64-..-32)
scaled by ``width_scale`` so desk-scale runs stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import VidsError
from ..tensor import (Conv1d, GraphSpec, Linear, OptimizerConfig, ParamStore,
                      ReLU, Tensor, forward, init_params)
from ..tensor import core

# variant -> (encoder layers, generator layers, discriminator layers, loss)
VARIANTS = {
    "M1": (5, 4, 4, "wgan_gp"),
    "M2": (6, 4, 4, "wgan_gp"),
    "M3": (5, 5, 5, "wgan_gp"),
    "M4": (4, 4, 4, "wgan_gp"),
    "M5": (5, 4, 4, "wgan"),
    "M6": (5, 4, 4, "bce"),
    "M7": (5, 4, 4, "wgan_gp"),   # same net as M1; trained per time-slice file
}


@dataclass
class Stage1Config:
    variant: str = "M1"
    latent_dim: int = 100
    lambda_gp: float = 10.0
    alpha: float = 0.5                  # combined-score weight
    epochs: int = 30
    window: int = 20
    features: int = 8
    width_scale: float = 1.0
    critic_steps: int = 1
    penalty_point: str = "generated"    # or "interpolated"
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(
        kind="rmsprop", learning_rate=2e-4))
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise VidsError(f"unknown variant {self.variant!r}")
        if self.latent_dim < 1:
            raise VidsError("latent_dim must be >= 1")
        if self.lambda_gp < 0:
            raise VidsError("lambda_gp must be >= 0")
        if self.penalty_point not in ("generated", "interpolated"):
            raise VidsError(f"unknown penalty_point {self.penalty_point!r}")

    @property
    def loss(self) -> str:
        return VARIANTS[self.variant][3]


def _ladder(n_convs: int, scale: float) -> list:
    if n_convs < 1:
        raise VidsError("each net needs at least one conv layer")
    widths = [32] + [64] * (n_convs - 2) + [32] if n_convs >= 2 else [32]
    return [max(2, round(w * scale)) for w in widths]


def _conv(name: str, cin: int, cout: int) -> Conv1d:
    return Conv1d(name, cin, cout, kernel=3, stride=1, padding=1)


def build_encoder(config: Stage1Config) -> GraphSpec:
    n_convs = VARIANTS[config.variant][0] - 1
    ladder = _ladder(n_convs, config.width_scale)
    layers, cin = [], config.features
    for i, cout in enumerate(ladder):
        layers += [_conv(f"enc.conv{i}", cin, cout), ReLU()]
        cin = cout
    layers.append(Linear("enc.latent", cin * config.window, config.latent_dim))
    return GraphSpec(tuple(layers), (config.features, config.window))


def build_generator(config: Stage1Config) -> GraphSpec:
    n_convs = VARIANTS[config.variant][1] - 1
    ladder = _ladder(n_convs, config.width_scale)
    layers = [Linear("gen.fc", config.latent_dim, ladder[0] * config.window), ReLU()]
    chain = ladder + [config.features]
    for i, (cin, cout) in enumerate(zip(chain[:-1], chain[1:])):
        layers.append(_conv(f"gen.conv{i}", cin, cout))
        if i < len(chain) - 2:
            layers.append(ReLU())
    return GraphSpec(tuple(layers), (config.latent_dim,))


def build_discriminator(config: Stage1Config) -> GraphSpec:
    n_convs = VARIANTS[config.variant][2] - 1
    ladder = _ladder(n_convs, config.width_scale)
    layers, cin = [], config.features + config.latent_dim
    for i, cout in enumerate(ladder):
        layers += [_conv(f"disc.conv{i}", cin, cout), ReLU()]
        cin = cout
    layers.append(Linear("disc.score", cin * config.window, 1))
    return GraphSpec(tuple(layers), (config.features + config.latent_dim,
                                     config.window))


@dataclass
class BiganModel:
    config: Stage1Config
    encoder: GraphSpec
    generator: GraphSpec
    discriminator: GraphSpec
    enc_params: ParamStore
    gen_params: ParamStore
    disc_params: ParamStore

    def encode(self, x) -> Tensor:
        return forward(self.encoder, self.enc_params, x)

    def generate(self, z) -> Tensor:
        out = forward(self.generator, self.gen_params, z)
        b = out.shape[0]
        return core.reshape(out, (b, self.config.features, self.config.window))

    def discriminate(self, x, z) -> Tensor:
        """Score the joint pair: the latent is tiled along time and stacked
        onto the window as extra channels."""
        x = core.as_tensor(x)
        z = core.as_tensor(z)
        b = x.shape[0]
        ones = Tensor(np.ones((1, self.config.window), dtype=z.data.dtype))
        tiled = core.matmul(core.reshape(z, (b, z.shape[1], 1)), ones)
        joint = core.concat([x, tiled], axis=1)
        return forward(self.discriminator, self.disc_params, joint)

    def reconstruct(self, x) -> Tensor:
        return self.generate(self.encode(x))

    def layer_counts(self) -> tuple:
        def count(graph):
            return sum(1 for l in graph.layers if isinstance(l, (Conv1d, Linear)))
        return (count(self.encoder), count(self.generator),
                count(self.discriminator))

    def trainable(self) -> dict:
        out = {}
        for prefix, store in (("enc", self.enc_params), ("gen", self.gen_params),
                              ("disc", self.disc_params)):
            out.update({n: t for n, t in store.tensors.items()})
        return out


def build_bigan(config: Stage1Config) -> BiganModel:
    enc = build_encoder(config)
    gen = build_generator(config)
    disc = build_discriminator(config)
    for g in (enc, gen, disc):
        g.validate()
    model = BiganModel(
        config, enc, gen, disc,
        init_params(enc, seed=config.seed),
        init_params(gen, seed=config.seed + 1),
        init_params(disc, seed=config.seed + 2))
    out_shape = gen.output_shape()
    if int(np.prod(out_shape)) != config.features * config.window:
        raise VidsError("generator output does not match the window shape")
    return model
