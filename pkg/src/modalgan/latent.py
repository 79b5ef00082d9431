"""Multimodal latent space built from a reparameterized multinoulli.

A mode index ``y`` is drawn by pushing a uniform variable through a
step-function indicator whose breakpoints are the cumulative softmax of a
logit vector ``alpha``.  The continuous latent point is the scaled one-hot
embedding of ``y`` plus compact uniform noise, so every mode owns a
disjoint axis-aligned cube.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class AmbiguousModeError(ValueError):
    """Raised when a latent point cannot be attributed to a single mode."""


@dataclass(frozen=True)
class ModePriorParams:
    alpha: np.ndarray = field(repr=True)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        if alpha.size < 2:
            raise ValueError(f"need at least 2 modes, got {alpha.size}")
        if not np.all(np.isfinite(alpha)):
            raise ValueError("alpha entries must be finite")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @property
    def num_modes(self) -> int:
        return self.alpha.size

    @property
    def probs(self) -> np.ndarray:
        return softmax_prior(self)

    @classmethod
    def uniform(cls, num_modes: int) -> "ModePriorParams":
        return cls(np.zeros(num_modes))

    @classmethod
    def from_probs(cls, probs) -> "ModePriorParams":
        return cls(np.log(np.asarray(probs, dtype=np.float64)))


@dataclass(frozen=True)
class LatentConfig:
    num_modes: int
    mode_spacing: float = 1.0
    noise_halfwidth: float = 0.25
    extra_dims: int = 0

    def __post_init__(self):
        if self.num_modes < 2:
            raise ValueError("num_modes must be >= 2")
        if self.mode_spacing <= 0 or self.noise_halfwidth <= 0:
            raise ValueError("mode_spacing and noise_halfwidth must be positive")
        if not self.noise_halfwidth < self.mode_spacing / 2:
            raise ValueError(
                f"noise_halfwidth ({self.noise_halfwidth}) must be < mode_spacing/2 "
                f"({self.mode_spacing / 2}) for the mode supports to be disjoint"
            )
        if self.extra_dims < 0:
            raise ValueError("extra_dims must be non-negative")

    @property
    def dim(self) -> int:
        return self.num_modes + self.extra_dims


def softmax_prior(params: ModePriorParams) -> np.ndarray:
    a = params.alpha
    e = np.exp(a - a.max())
    return e / e.sum()


def cumulative_breakpoints(params: ModePriorParams) -> np.ndarray:
    a = np.cumsum(softmax_prior(params))
    a[-1] = 1.0
    return a


def _step(t):
    # unit step, right-closed: step(0) == 1
    return (np.asarray(t) >= 0).astype(np.float64)


def reparam_indicator(params: ModePriorParams, nu1) -> np.ndarray:
    """One-hot indicator f(alpha, nu1) built from differences of unit steps.

    ``nu1`` may be a scalar (returns shape ``(M,)``) or an array of draws
    (returns shape ``(n, M)``).
    """
    nu = np.asarray(nu1, dtype=np.float64)
    if np.any(nu < 0) or np.any(nu > 1) or np.any(np.isnan(nu)):
        raise ValueError("nu1 must lie in [0, 1]")
    a = cumulative_breakpoints(params)
    steps = _step(a - nu[..., None])
    f = steps.copy()
    f[..., 1:] -= steps[..., :-1]
    return f


def sample_modes(params: ModePriorParams, n: int, rng) -> np.ndarray:
    nu1 = rng.random(n)
    return np.argmax(reparam_indicator(params, nu1), axis=-1)


def sample_mode(params: ModePriorParams, rng) -> int:
    return int(sample_modes(params, 1, rng)[0])


def embed(config: LatentConfig, modes, rng) -> np.ndarray:
    """Place each mode index inside its own cube: spacing * onehot(y) + U[-eps, eps]."""
    modes = np.asarray(modes, dtype=np.int64).reshape(-1)
    n, m = modes.size, config.num_modes
    if np.any(modes < 0) or np.any(modes >= m):
        raise ValueError("mode index out of range")
    z = rng.uniform(-config.noise_halfwidth, config.noise_halfwidth, size=(n, m))
    z[np.arange(n), modes] += config.mode_spacing
    if config.extra_dims:
        z = np.hstack([z, rng.uniform(-1.0, 1.0, size=(n, config.extra_dims))])
    return z


def sample_latent(config: LatentConfig, params: ModePriorParams, n: int, rng):
    """Draw ``n`` latent samples; returns ``(modes, z)``."""
    if params.num_modes != config.num_modes:
        raise ValueError("alpha length does not match num_modes")
    modes = sample_modes(params, n, rng)
    return modes, embed(config, modes, rng)


def sample_unimodal(config: LatentConfig, n: int, rng):
    """Unimodal U[-1, 1]^D latent used when the multimodal condition is switched off.

    The tag returned with each point is still ``modes_of(z)``, i.e. the
    argmax of its first M coordinates.
    """
    z = rng.uniform(-1.0, 1.0, size=(n, config.dim))
    return modes_of(z, config), z


def modes_of(z, config: LatentConfig) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    head = z[:, : config.num_modes]
    if head.shape[1] < 2:
        raise ValueError("latent points have fewer than 2 mode coordinates")
    top2 = np.sort(head, axis=1)[:, -2:]
    if np.any(top2[:, 0] == top2[:, 1]):
        raise AmbiguousModeError("top two mode coordinates are equal")
    return np.argmax(head, axis=1)


def mode_of(z, config: LatentConfig) -> int:
    return int(modes_of(np.asarray(z).reshape(1, -1), config)[0])
