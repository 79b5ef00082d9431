"""Recovering mode priors from a handful of labelled points.

The inverter is fine-tuned on the labelled subset with cross-entropy, its
posterior is averaged over an unlabelled probe set, and the logits are
refit so that their softmax equals that average.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .latent import ModePriorParams, softmax_prior
from .nn import Mlp, Optimizer, categorical_cross_entropy, one_hot

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-6


@dataclass
class LabeledSubset:
    points: np.ndarray
    labels: np.ndarray
    num_classes: int
    fraction: float = float("nan")

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.labels.size == 0:
            raise ValueError("labelled subset is empty")
        if self.points.shape[0] != self.labels.size:
            raise ValueError("one label per point required")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(f"labels must lie in [0, {self.num_classes})")


@dataclass
class RetrainResult:
    h: Mlp
    epochs: int
    train_accuracy: float
    converged: bool


@dataclass
class PriorLearningResult:
    alpha: ModePriorParams
    posterior_marginal: np.ndarray
    residual: float
    retrain: RetrainResult

    @property
    def priors(self) -> np.ndarray:
        return softmax_prior(self.alpha)


def estimate_posterior_marginal(h: Mlp, samples) -> np.ndarray:
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0:
        raise ValueError("need at least one sample")
    p = h.predict(samples).mean(axis=0)
    return p / p.sum()


def retrain_inverter(h: Mlp, ws: LabeledSubset, epochs=200, lr=1e-3, target_accuracy=0.95,
                     in_place=False) -> RetrainResult:
    """Full-batch Adam on the cross-entropy of ``h`` over ``ws`` for ``epochs`` epochs.

    Falling short of ``target_accuracy`` is logged and flagged, not raised.
    """
    net = h if in_place else h.copy()
    if ws.num_classes != net.n_out:
        raise ValueError("subset class count does not match inverter outputs")
    opt = Optimizer("adam", lr, beta1=0.9)
    target = one_hot(ws.labels, net.n_out)
    epoch = 0
    for epoch in range(1, epochs + 1):
        q = net.forward(ws.points)
        _, grad = categorical_cross_entropy(q, target)
        grads, _ = net.backward(grad)
        opt.step(net, grads)
    acc = float(np.mean(net.predict(ws.points).argmax(axis=1) == ws.labels))
    converged = acc >= target_accuracy
    if not converged:
        log.warning("inverter retraining reached %.3f accuracy after %d epochs", acc, epoch)
    return RetrainResult(net, epoch, acc, converged)


def fit_alpha(target, floor=PROB_FLOOR, max_iter=2000, lr=0.05):
    """Logits whose softmax reproduces ``target``; returns ``(params, l1_residual)``.

    Closed form ``log(target)``; entries below ``floor`` are raised to it and
    the result polished by subgradient descent on the L1 residual.
    """
    t = np.asarray(target, dtype=np.float64)
    if t.ndim != 1 or t.size < 2 or np.any(t < 0) or abs(t.sum() - 1) > 1e-6:
        raise ValueError("target must be a probability vector")
    alpha = np.log(np.maximum(t, floor))
    params = ModePriorParams(alpha)
    residual = float(np.abs(softmax_prior(params) - t).sum())
    if np.all(t >= floor):
        return params, residual
    best = (residual, alpha.copy())
    for _ in range(max_iter):
        s = softmax_prior(ModePriorParams(alpha))
        sign = np.sign(s - t)
        # d|s - t|_1 / d alpha = J^T sign with J = diag(s) - s s^T
        grad = s * sign - s * np.dot(s, sign)
        alpha = alpha - lr * grad / max(np.abs(grad).max(), 1e-12)
        # keep the floored entries from running off to -inf
        alpha = np.maximum(alpha, alpha.max() + np.log(floor))
        res = float(np.abs(softmax_prior(ModePriorParams(alpha)) - t).sum())
        if res < best[0]:
            best = (res, alpha.copy())
    log.info("floored prior target; L1 residual %.3g", best[0])
    return ModePriorParams(best[1]), best[0]


def learn_priors(model, ws: LabeledSubset, probe, epochs=200, lr=1e-3) -> PriorLearningResult:
    """Retrain a copy of ``model.h`` on ``ws`` and refit alpha to its probe-set marginal.

    ``model`` itself is left untouched.
    """
    retrained = retrain_inverter(model.h, ws, epochs=epochs, lr=lr)
    p_hat = estimate_posterior_marginal(retrained.h, probe)
    alpha, residual = fit_alpha(p_hat)
    return PriorLearningResult(alpha, p_hat, residual, retrained)


def sparse_split(n, label_fraction, probe_fraction, rng):
    """Disjoint index sets for the labelled subset and the unlabelled probe."""
    perm = rng.permutation(n)
    n_lab = max(1, int(round(label_fraction * n)))
    n_probe = max(1, int(round(probe_fraction * n)))
    if n_lab + n_probe > n:
        raise ValueError("label and probe fractions exceed the dataset")
    return np.sort(perm[:n_lab]), np.sort(perm[n_lab:n_lab + n_probe])
