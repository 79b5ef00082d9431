"""Joint training of generator g, discriminator d and latent inverter h."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import LabeledDataset
from .latent import LatentConfig, ModePriorParams, sample_latent, sample_unimodal
from .nn import (
    Mlp,
    Optimizer,
    binary_cross_entropy,
    categorical_cross_entropy,
    load_networks,
    one_hot,
    save_networks,
)

log = logging.getLogger(__name__)

TRACE_EVERY = 100


class TrainingAborted(RuntimeError):
    """Raised when a loss turns non-finite."""


@dataclass(frozen=True)
class Conditions:
    multimodal_latent: bool = True
    use_inverter: bool = True
    matched_prior: bool = True

    @property
    def combo(self) -> str:
        return "".join(
            f"C{i}" if on else f"~C{i}"
            for i, on in enumerate((self.multimodal_latent, self.use_inverter, self.matched_prior), 1)
        )


@dataclass
class TrainConfig:
    latent: LatentConfig
    alpha: ModePriorParams
    batch_size: int = 128
    steps: int = 5000
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    lr_h: float = 2e-4
    inverter_weight: float = 1.0
    seed: int = 0
    conditions: Conditions = field(default_factory=Conditions)
    hidden: tuple = (64, 64)
    output_activation: str = "identity"

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 0:
            raise ValueError("batch_size must be positive and steps non-negative")
        if min(self.lr_g, self.lr_d, self.lr_h) <= 0:
            raise ValueError("learning rates must be positive")
        if self.inverter_weight < 0:
            raise ValueError("inverter_weight must be non-negative")
        if self.alpha.num_modes != self.latent.num_modes:
            raise ValueError("alpha length must equal latent.num_modes")

    @property
    def effective_alpha(self) -> ModePriorParams:
        if self.conditions.matched_prior:
            return self.alpha
        return ModePriorParams.uniform(self.latent.num_modes)

    @property
    def effective_inverter_weight(self) -> float:
        return self.inverter_weight if self.conditions.use_inverter else 0.0


@dataclass
class GanModel:
    g: Mlp
    d: Mlp
    h: Mlp
    latent: LatentConfig
    alpha: ModePriorParams
    multimodal_latent: bool = True

    def __post_init__(self):
        if self.g.n_in != self.latent.dim:
            raise ValueError("generator input width must equal the latent dimension")
        if self.h.n_out != self.latent.num_modes:
            raise ValueError("inverter output width must equal the number of modes")
        if self.d.n_out != 1 or self.d.n_in != self.g.n_out or self.h.n_in != self.g.n_out:
            raise ValueError("discriminator/inverter input width must equal the data dimension")

    @classmethod
    def build(cls, latent, alpha, data_dim, rng, hidden=(64, 64), output_activation="identity",
              multimodal_latent=True):
        hidden = list(hidden)
        relus = ["relu"] * len(hidden)
        g = Mlp([latent.dim, *hidden, data_dim], relus + [output_activation], rng)
        d = Mlp([data_dim, *hidden, 1], relus + ["sigmoid"], rng)
        h = Mlp([data_dim, *hidden, latent.num_modes], relus + ["softmax"], rng)
        return cls(g, d, h, latent, alpha, multimodal_latent)

    def sample_latent(self, n, rng, alpha=None):
        if not self.multimodal_latent:
            return sample_unimodal(self.latent, n, rng)
        return sample_latent(self.latent, alpha or self.alpha, n, rng)

    def save(self, path):
        meta = {
            "latent": {
                "num_modes": self.latent.num_modes,
                "mode_spacing": self.latent.mode_spacing,
                "noise_halfwidth": self.latent.noise_halfwidth,
                "extra_dims": self.latent.extra_dims,
            },
            "alpha": [float(a) for a in self.alpha.alpha],
            "multimodal_latent": self.multimodal_latent,
        }
        save_networks(path, {"g": self.g, "d": self.d, "h": self.h}, meta)

    @classmethod
    def load(cls, path):
        nets, meta = load_networks(path)
        missing = {"g", "d", "h"} - set(nets)
        if missing or "latent" not in meta:
            raise ValueError(f"{path} is not a model checkpoint (missing {sorted(missing)})")
        return cls(
            nets["g"], nets["d"], nets["h"],
            LatentConfig(**meta["latent"]),
            ModePriorParams(meta["alpha"]),
            meta.get("multimodal_latent", True),
        )


@dataclass
class TrainingTrace:
    rows: list = field(default_factory=list)

    def record(self, step, d_loss, g_loss, inv_loss):
        self.rows.append((step, d_loss, g_loss, inv_loss))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,d_loss,g_loss,inv_loss\n")
        for step, dl, gl, il in self.rows:
            buf.write(f"{step},{dl!r},{gl!r},{il!r}\n")
        return buf.getvalue()


class Trainer:
    def __init__(self, model: GanModel, config: TrainConfig):
        self.model = model
        self.config = config
        self.opt_g = Optimizer("adam", config.lr_g)
        self.opt_d = Optimizer("adam", config.lr_d)
        self.opt_h = Optimizer("adam", config.lr_h)

    @staticmethod
    def _guard(name, value, step):
        if not np.isfinite(value):
            raise TrainingAborted(f"{name} became non-finite ({value}) at step {step}")

    def discriminator_step(self, real_batch, latent_batch, step=0):
        """One ascent step of d on E[log d(w)] + E[log(1 - d(g(z)))]; returns the negated objective."""
        m = self.model
        real_batch = np.asarray(real_batch, dtype=np.float64)
        if real_batch.shape[0] == 0 or latent_batch.shape[0] == 0:
            raise ValueError("empty batch")
        fake = m.g.predict(latent_batch)
        nr = real_batch.shape[0]
        p = m.d.forward(np.vstack([real_batch, fake]))
        loss_r, grad_r = binary_cross_entropy(p[:nr], np.ones((nr, 1)))
        loss_f, grad_f = binary_cross_entropy(p[nr:], np.zeros((fake.shape[0], 1)))
        loss = loss_r + loss_f
        self._guard("d_loss", loss, step)
        grads, _ = m.d.backward(np.vstack([grad_r, grad_f]))
        self.opt_d.step(m.d, grads)
        return loss

    def generator_inverter_step(self, latent_batch, modes, step=0):
        """Joint step on g and h for -E[log d(g(z))] + lambda * CE(h(g(z)), onehot(y))."""
        m = self.model
        lam = self.config.effective_inverter_weight
        x = m.g.forward(latent_batch)
        p = m.d.forward(x)
        gen_loss, grad_p = binary_cross_entropy(p, np.ones_like(p))
        self._guard("g_loss", gen_loss, step)
        _, dx = m.d.backward(grad_p)
        inv_loss = 0.0
        if self.config.conditions.use_inverter:
            q = m.h.forward(x)
            inv_loss, grad_q = categorical_cross_entropy(q, one_hot(modes, m.latent.num_modes))
            self._guard("inv_loss", inv_loss, step)
            h_grads, dx_h = m.h.backward(grad_q)
            if lam > 0:
                dx = dx + lam * dx_h
                self.opt_h.step(m.h, [lam * gr for gr in h_grads])
        g_grads, _ = m.g.backward(dx)
        self.opt_g.step(m.g, g_grads)
        return gen_loss, inv_loss


def build_model(config: TrainConfig, data_dim: int, rng) -> GanModel:
    return GanModel.build(
        config.latent,
        config.effective_alpha,
        data_dim,
        rng,
        hidden=config.hidden,
        output_activation=config.output_activation,
        multimodal_latent=config.conditions.multimodal_latent,
    )


def train(config: TrainConfig, data: LabeledDataset, model: GanModel | None = None):
    """Alternate one d step and one (g, h) step per iteration.

    Returns ``(model, trace)``.  Everything random is drawn from a single
    generator seeded with ``config.seed``.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = build_model(config, data.dim, rng)
    trainer = Trainer(model, config)
    trace = TrainingTrace()
    points = data.points
    n, bs = len(data), config.batch_size
    acc = np.zeros(3)
    count = 0
    for step in range(1, config.steps + 1):
        real = points[rng.integers(0, n, bs)]
        modes, z = model.sample_latent(bs, rng)
        d_loss = trainer.discriminator_step(real, z, step)
        g_loss, inv_loss = trainer.generator_inverter_step(z, modes, step)
        acc += (d_loss, g_loss, inv_loss)
        count += 1
        if step % TRACE_EVERY == 0 or step == config.steps:
            mean = acc / count
            trace.record(step, float(mean[0]), float(mean[1]), float(mean[2]))
            log.debug("step %d d=%.4f g=%.4f inv=%.4f", step, *mean)
            acc[:] = 0
            count = 0
    return model, trace


def generate(model: GanModel, n, rng, alpha=None):
    """Draw ``n`` generated points; returns ``(x, modes)`` with each point's latent mode tag."""
    if n == 0:
        return np.zeros((0, model.g.n_out)), np.zeros(0, dtype=np.int64)
    modes, z = model.sample_latent(n, rng, alpha)
    return model.g.predict(z), modes


def with_conditions(config: TrainConfig, **toggles) -> TrainConfig:
    return replace(config, conditions=replace(config.conditions, **toggles))
