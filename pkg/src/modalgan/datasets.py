"""Labelled clustered datasets: synthetic generators and IDX (MNIST-format) ingest."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


class BadMagicError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


class InsufficientSamplesError(ValueError):
    pass


@dataclass
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.points.ndim != 2 or self.points.shape[0] != self.labels.size:
            raise ValueError("points must be (N, D) with one label per row")
        m = self.num_classes
        if self.labels.size < m:
            raise ValueError("need at least one point per class")
        if self.labels.min() < 0 or np.any(np.bincount(self.labels, minlength=m) == 0):
            raise ValueError("labels must be 0..M-1 with every class non-empty")

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def class_masses(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes) / self.labels.size

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.labels.size

    def class_means(self) -> np.ndarray:
        return np.stack([self.points[self.labels == k].mean(axis=0) for k in range(self.num_classes)])

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.points[idx], self.labels[idx], self.name)


def split_counts(n, ratio):
    """Integer class counts close to ``n * ratio`` that sum exactly to ``n``."""
    ratio = np.asarray(ratio, dtype=np.float64)
    counts = np.round(n * ratio).astype(np.int64)
    diff = n - counts.sum()
    # largest remainders absorb the correction one unit at a time
    order = np.argsort(-(n * ratio - counts)) if diff > 0 else np.argsort(n * ratio - counts)
    for k in range(abs(int(diff))):
        counts[order[k % counts.size]] += np.sign(diff)
    return counts


def _check_ratio(ratio, m=None):
    ratio = np.asarray(ratio, dtype=np.float64)
    if m is not None and ratio.size != m:
        raise ValueError(f"expected {m} ratios, got {ratio.size}")
    if np.any(ratio <= 0):
        raise ValueError("every ratio entry must be positive")
    if abs(ratio.sum() - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    return ratio


def two_moons(n, ratio=(0.5, 0.5), noise_sigma=0.08, seed=0) -> LabeledDataset:
    """Two interleaved unit half-circles, centred on the origin.

    Class 0 is the upper arc ``(cos t, sin t)``; class 1 the lower arc
    ``(1 - cos t, 0.5 - sin t)``; both are shifted by ``(-0.5, -0.25)``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    ratio = _check_ratio(ratio, 2)
    rng = np.random.default_rng(seed)
    n0, n1 = split_counts(n, ratio)
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    pts = np.vstack([upper, lower]) + np.array([-0.5, -0.25])
    if noise_sigma > 0:
        pts = pts + rng.normal(0.0, noise_sigma, pts.shape)
    labels = np.concatenate([np.zeros(n0, np.int64), np.ones(n1, np.int64)])
    perm = rng.permutation(n)
    return LabeledDataset(pts[perm], labels[perm], "two_moons")


def ring_centers(k, radius):
    ang = 2 * np.pi * np.arange(k) / k
    return radius * np.column_stack([np.cos(ang), np.sin(ang)])


def gmm_ring(n, k=8, radius=2.0, sigma=0.05, seed=0, ratio=None) -> LabeledDataset:
    if k < 2:
        raise ValueError("k must be >= 2")
    ratio = np.full(k, 1.0 / k) if ratio is None else _check_ratio(ratio, k)
    rng = np.random.default_rng(seed)
    counts = split_counts(n, ratio)
    labels = np.repeat(np.arange(k), counts)
    pts = ring_centers(k, radius)[labels] + rng.normal(0.0, sigma, (n, 2))
    perm = rng.permutation(n)
    return LabeledDataset(pts[perm], labels[perm], "gmm_ring")


def _read_header(buf, path, expected_magic):
    if len(buf) < 4:
        raise TruncatedFileError(f"{path}: file shorter than the magic number")
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != expected_magic:
        raise BadMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    end = 4 + 4 * ndim
    if len(buf) < end:
        raise TruncatedFileError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", buf[4:end])
    size = int(np.prod(dims))
    if len(buf) < end + size:
        raise TruncatedFileError(f"{path}: expected {size} payload bytes, found {len(buf) - end}")
    payload = np.frombuffer(buf, dtype=np.uint8, count=size, offset=end)
    return dims, payload


def _read_bytes(path):
    # the published archives are gzipped; accept either form
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] == b"\x1f\x8b":
        try:
            buf = gzip.decompress(buf)
        except (OSError, EOFError) as exc:
            raise TruncatedFileError(f"{path}: corrupt gzip stream ({exc})") from exc
    return buf


def read_idx_images(path):
    buf = _read_bytes(path)
    dims, payload = _read_header(buf, path, IDX_IMAGES_MAGIC)
    return payload.reshape(dims)


def read_idx_labels(path):
    buf = _read_bytes(path)
    dims, payload = _read_header(buf, path, IDX_LABELS_MAGIC)
    return payload.reshape(dims)


def write_idx(path, array):
    """Write a uint8 array as IDX (images if 3-D, labels if 1-D)."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | arr.ndim
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def load_idx(images_path, labels_path) -> LabeledDataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    pts = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LabeledDataset(pts, labels.astype(np.int64), "idx")


def subsample_classes(ds: LabeledDataset, classes, ratios, seed=0) -> LabeledDataset:
    """Keep ``classes`` (relabelled 0..k-1) and subsample to the given mass ratios.

    The largest total size compatible with every class's availability is
    used, so only majority classes lose samples.
    """
    classes = [int(c) for c in classes]
    if len(set(classes)) != len(classes):
        raise ValueError("classes must be distinct")
    ratios = _check_ratio(ratios, len(classes))
    rng = np.random.default_rng(seed)
    pools = [np.flatnonzero(ds.labels == c) for c in classes]
    for c, pool in zip(classes, pools):
        if pool.size == 0:
            raise ValueError(f"class {c} not present")
    avail = np.array([p.size for p in pools])
    total = int(np.floor(np.min(avail / ratios)))
    while np.any(split_counts(total, ratios) > avail):
        total -= 1
    counts = split_counts(total, ratios)
    if np.any(counts < 1) or total < len(classes):
        raise InsufficientSamplesError(f"cannot realise ratios {ratios.tolist()} from class sizes {avail.tolist()}")
    keep, new_labels = [], []
    for k, (pool, cnt) in enumerate(zip(pools, counts)):
        keep.append(np.sort(rng.choice(pool, size=cnt, replace=False)))
        new_labels.append(np.full(cnt, k))
    idx = np.concatenate(keep)
    labels = np.concatenate(new_labels)
    perm = rng.permutation(idx.size)
    return LabeledDataset(ds.points[idx[perm]], labels[perm], ds.name)


def merge_classes(ds: LabeledDataset, groups) -> LabeledDataset:
    groups = [[int(c) for c in g] for g in groups]
    flat = [c for g in groups for c in g]
    present = set(np.unique(ds.labels).tolist())
    if len(flat) != len(set(flat)) or set(flat) != present or any(not g for g in groups):
        raise ValueError("groups must partition the labels present in the dataset")
    lut = np.empty(max(flat) + 1, dtype=np.int64)
    for k, g in enumerate(groups):
        lut[g] = k
    return LabeledDataset(ds.points, lut[ds.labels], ds.name)


FMNIST_CLASSES = [
    "T-shirt/top", "Trouser", "Pullover", "Dress", "Coat",
    "Sandal", "Shirt", "Sneaker", "Bag", "Ankle boot",
]

# Named image-data recipes; "classes"+"ratios" subsample, "groups" merge.
PRESETS = {
    "mnist2_3v5_70_30": {"classes": [3, 5], "ratios": [0.7, 0.3]},
    "mnist2_3v5_90_10": {"classes": [3, 5], "ratios": [0.9, 0.1]},
    "mnist2_0v4_70_30": {"classes": [0, 4], "ratios": [0.7, 0.3]},
    "mnist2_0v4_90_10": {"classes": [0, 4], "ratios": [0.9, 0.1]},
    "mnist5": {"groups": [[3, 5, 8], [2], [1, 4, 7, 9], [6], [0]]},
    "fmnist5": {"groups": [[5, 7, 9], [8], [0, 3], [2, 4, 6], [1]]},
}


def apply_preset(ds: LabeledDataset, preset, seed=0) -> LabeledDataset:
    recipe = PRESETS[preset] if isinstance(preset, str) else preset
    if "groups" in recipe:
        return merge_classes(ds, recipe["groups"])
    return subsample_classes(ds, recipe["classes"], recipe["ratios"], seed)


def write_csv(path, ds: LabeledDataset):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"x_{j}" for j in range(ds.dim)])
        for lab, row in zip(ds.labels, ds.points):
            w.writerow([int(lab)] + [repr(float(v)) for v in row])


def read_labeled_csv(path):
    """Read a labelled CSV; the ``label`` column may be first or last.

    Returns ``(points, labels)`` without validating label ranges.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header = rows[0]
    if "label" not in header:
        raise ValueError(f"{path} has no 'label' column")
    li = header.index("label")
    body = np.array(rows[1:], dtype=np.float64).reshape(len(rows) - 1, len(header))
    labels = body[:, li].astype(np.int64)
    points = np.delete(body, li, axis=1)
    return points, labels
