"""Clustering and generation-quality metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist


def _check_pair(pred, truth):
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if pred.size != truth.size:
        raise ValueError(f"length mismatch: {pred.size} vs {truth.size}")
    return pred, truth


def contingency(pred, truth):
    pred, truth = _check_pair(pred, truth)
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pi.max(initial=-1) + 1, ti.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def clustering_accuracy(pred, truth) -> float:
    """Best matched fraction over one-to-one relabelings (Hungarian assignment)."""
    pred, truth = _check_pair(pred, truth)
    if pred.size == 0:
        raise ValueError("empty labelings")
    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / pred.size)


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth) -> float:
    """Mutual information normalised by the geometric mean of the two entropies."""
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1))
    h_truth = _entropy(table.sum(axis=0))
    if h_pred == 0.0 and h_truth == 0.0:
        return 1.0
    if h_pred == 0.0 or h_truth == 0.0:
        return 0.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / n**2
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    return float(max(0.0, min(1.0, mi / np.sqrt(h_pred * h_truth))))


def _comb2(x):
    return x * (x - 1) / 2.0


def ari(pred, truth) -> float:
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = _comb2(n)
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    support = p > 0
    if np.any(q[support] <= 0):
        raise ValueError("q must be positive wherever p is positive")
    return float(max(0.0, np.sum(p[support] * np.log(p[support] / q[support]))))


def kl_gap(p_yhat, p_y, p_xhat) -> float:
    """KL(p_yhat||p_y) - KL(p_yhat||p_xhat), equal to sum p_yhat * log(p_xhat / p_y)."""
    return kl_divergence(p_yhat, p_y) - kl_divergence(p_yhat, p_xhat)


def kl_identity_check(p_yhat, p_y, p_xhat, tol=1e-9) -> bool:
    """True when the inverter's KL to the latent prior equals its KL to the generated modal masses.

    This holds exactly whenever the latent and generated modal masses agree.
    """
    return abs(kl_gap(p_yhat, p_y, p_xhat)) <= tol


def modal_mass(assignments, num_clusters=None) -> np.ndarray:
    a = np.asarray(assignments, dtype=np.int64).reshape(-1)
    if a.size == 0:
        raise ValueError("modal_mass of an empty sample")
    m = int(a.max()) + 1 if num_clusters is None else num_clusters
    counts = np.bincount(a, minlength=m).astype(np.float64)
    return counts / counts.sum()


class NearestNeighbourAssigner:
    """Assigns points to the label of their nearest labelled reference point."""

    def __init__(self, points, labels):
        self.tree = cKDTree(np.asarray(points, dtype=np.float64))
        self.labels = np.asarray(labels, dtype=np.int64)

    def __call__(self, x):
        _, idx = self.tree.query(np.asarray(x, dtype=np.float64))
        return self.labels[idx]


def mode_coverage(samples, centers, threshold_radius):
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if threshold_radius <= 0:
        raise ValueError("threshold_radius must be positive")
    n = samples.shape[0]
    if n == 0:
        return 0, 0.0
    dist, idx = cKDTree(centers).query(samples)
    close = dist <= threshold_radius
    per_mode = np.bincount(idx[close], minlength=centers.shape[0])
    need = max(10, 0.02 * n)
    return int(np.sum(per_mode >= need)), float(close.mean())


def mmd(x, y, biased=False, bandwidth=None) -> float:
    """Squared MMD with an RBF kernel; bandwidth defaults to the median pooled distance.

    The unbiased form is the U-statistic; for equal sample sizes it is the
    paired version, which is exactly zero when ``x`` and ``y`` coincide.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise ValueError("dimension mismatch")
    m, n = x.shape[0], y.shape[0]
    if m == 0 or n == 0:
        raise ValueError("mmd needs non-empty samples")
    pooled = np.vstack([x, y])
    if bandwidth is None:
        bandwidth = float(np.median(pdist(pooled))) if pooled.shape[0] > 1 else 1.0
        if bandwidth == 0.0:
            bandwidth = 1.0
    sq = np.sum(pooled**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * pooled @ pooled.T, 0.0)
    k = np.exp(-d2 / (2 * bandwidth**2))
    kxx, kyy, kxy = k[:m, :m], k[m:, m:], k[:m, m:]
    if biased or m < 2 or n < 2:
        return float(kxx.mean() + kyy.mean() - 2 * kxy.mean())
    sxx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    syy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    if m == n:
        # paired U-statistic: i == j terms dropped from the cross sum too
        sxy = (kxy.sum() - np.trace(kxy)) / (m * (m - 1))
    else:
        sxy = kxy.mean()
    return float(sxx + syy - 2 * sxy)


@dataclass
class ClusterMetricsReport:
    acc: float
    nmi: float
    ari: float
    mmd: float
    modal_mass: list
    modes_covered: int
    high_quality_fraction: float
    # generation view: latent tags of generated points vs their oracle cluster
    gen_acc: float = float("nan")
    gen_nmi: float = float("nan")
    gen_ari: float = float("nan")
    majority_baseline: float = float("nan")
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)
