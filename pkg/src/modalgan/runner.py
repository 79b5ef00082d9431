"""Run orchestration: single training runs, evaluation and the condition matrix."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .config import build_dataset, make_train_config
from .datasets import LabeledDataset
from .nn import Mlp, Optimizer, categorical_cross_entropy, one_hot
from .trainer import GanModel, TrainingAborted, generate, train

log = logging.getLogger(__name__)

LOW_DIM = 3


class ReferenceClassifier:
    """Supervised classifier on real data; assigns generated images to clusters."""

    def __init__(self, ds: LabeledDataset, seed=0, steps=1500, batch_size=128, hidden=256, lr=1e-3):
        rng = np.random.default_rng(seed)
        self.net = Mlp([ds.dim, hidden, ds.num_classes], ["relu", "softmax"], rng)
        opt = Optimizer("adam", lr, beta1=0.9)
        target = one_hot(ds.labels, ds.num_classes)
        for _ in range(steps):
            idx = rng.integers(0, len(ds), batch_size)
            q = self.net.forward(ds.points[idx])
            _, grad = categorical_cross_entropy(q, target[idx])
            grads, _ = self.net.backward(grad)
            opt.step(self.net, grads)

    def __call__(self, x):
        return self.net.predict(x).argmax(axis=1)


def cluster_oracle(ds: LabeledDataset, seed=0):
    if ds.dim <= LOW_DIM:
        return metrics.NearestNeighbourAssigner(ds.points, ds.labels)
    return ReferenceClassifier(ds, seed)


def default_coverage_radius(ds: LabeledDataset) -> float:
    # three pooled within-class standard deviations (per coordinate)
    means = ds.class_means()
    resid = ds.points - means[ds.labels]
    return 3.0 * float(np.sqrt(np.mean(resid**2)))


def evaluate(model: GanModel, ds: LabeledDataset, eval_cfg: dict, seed=0, oracle=None):
    rng = np.random.default_rng(seed)
    m = ds.num_classes
    pred = model.h.predict(ds.points).argmax(axis=1)
    n = int(eval_cfg["n_samples"])
    x, tags = generate(model, n, rng)
    oracle = oracle or cluster_oracle(ds, seed)
    assigned = oracle(x) if n else np.zeros(0, np.int64)
    k = int(eval_cfg["mmd_samples"])
    real_idx = rng.choice(len(ds), size=min(k, len(ds)), replace=False)
    mmd = metrics.mmd(x[:k], ds.points[real_idx]) if n else float("nan")
    radius = eval_cfg.get("coverage_radius") or default_coverage_radius(ds)
    covered, hq = metrics.mode_coverage(x, ds.class_means(), radius)
    z_modes, z = model.sample_latent(n, rng)
    consistency = float(np.mean(model.h.predict(model.g.predict(z)).argmax(axis=1) == z_modes)) if n else float("nan")
    return metrics.ClusterMetricsReport(
        acc=metrics.clustering_accuracy(pred, ds.labels),
        nmi=metrics.nmi(pred, ds.labels),
        ari=metrics.ari(pred, ds.labels),
        mmd=mmd,
        modal_mass=metrics.modal_mass(assigned, m).tolist() if n else [],
        modes_covered=covered,
        high_quality_fraction=hq,
        gen_acc=metrics.clustering_accuracy(tags, assigned) if n else float("nan"),
        gen_nmi=metrics.nmi(tags, assigned) if n else float("nan"),
        gen_ari=metrics.ari(tags, assigned) if n else float("nan"),
        majority_baseline=float(ds.class_masses.max()),
        extra={"inverter_consistency": consistency, "coverage_radius": float(radius),
               "inverter_mass": metrics.modal_mass(pred, m).tolist(),
               "latent_prior": model.alpha.probs.tolist()},
    )


@dataclass
class CellResult:
    dataset: str
    combo: str
    status: str
    report: metrics.ClusterMetricsReport | None
    trace_csv: str
    wall_time: float
    error: str = ""
    model: GanModel | None = field(default=None, repr=False)


def run_cell(cfg: dict, dataset_spec: dict, combo: str, seed: int) -> CellResult:
    start = time.perf_counter()
    label = dataset_spec["label"]
    try:
        ds = build_dataset(dataset_spec)
        tcfg = make_train_config(cfg, ds, combo, seed)
        model, trace = train(tcfg, ds)
        report = evaluate(model, ds, cfg["eval"], seed)
        return CellResult(label, combo, "ok", report, trace.to_csv(), time.perf_counter() - start, model=model)
    except (TrainingAborted, ValueError, FloatingPointError) as exc:
        log.error("cell %s/%s failed: %s", label, combo, exc)
        return CellResult(label, combo, "failed", None, "", time.perf_counter() - start, str(exc))


def _run_cell_args(args):
    return run_cell(*args)


def cell_seeds(cfg: dict):
    # combos of one dataset share a seed so only the toggles differ
    return [cfg["seed"] + i for i in range(len(cfg["datasets"]))]


def run_ablation(cfg: dict, workers=1):
    jobs = []
    for ds_spec, seed in zip(cfg["datasets"], cell_seeds(cfg)):
        for combo in cfg["combos"]:
            jobs.append((cfg, ds_spec, combo, seed))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_args, jobs))
    else:
        results = [run_cell(*j) for j in jobs]
    return AblationReport(results)


REPORT_COLUMNS = [
    "dataset", "combo", "status", "acc", "nmi", "ari", "mmd", "modal_mass", "inverter_mass", "modes_covered",
    "high_quality_fraction", "gen_acc", "gen_nmi", "gen_ari", "inverter_consistency",
    "majority_baseline", "error",
]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class AblationReport:
    cells: list = field(default_factory=list)

    def rows(self):
        out = []
        for c in self.cells:
            row = {"dataset": c.dataset, "combo": c.combo, "status": c.status, "error": c.error}
            if c.report is not None:
                r = c.report
                row.update(acc=r.acc, nmi=r.nmi, ari=r.ari, mmd=r.mmd, modal_mass=r.modal_mass,
                           modes_covered=r.modes_covered, high_quality_fraction=r.high_quality_fraction,
                           gen_acc=r.gen_acc, gen_nmi=r.gen_nmi, gen_ari=r.gen_ari,
                           inverter_consistency=r.extra.get("inverter_consistency"),
                           inverter_mass=r.extra.get("inverter_mass"),
                           majority_baseline=r.majority_baseline)
            out.append(row)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in self.rows():
            vals = []
            for col in REPORT_COLUMNS:
                v = row.get(col, "")
                if col in ("modal_mass", "inverter_mass") and isinstance(v, list):
                    v = ";".join(repr(float(p)) for p in v)
                vals.append(_fmt(v))
            w.writerow(vals)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.rows(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def timings(self) -> dict:
        return {f"{c.dataset}/{c.combo}": c.wall_time for c in self.cells}

    def cell(self, dataset, combo) -> CellResult:
        for c in self.cells:
            if c.dataset == dataset and c.combo == combo:
                return c
        raise KeyError((dataset, combo))

    def row(self, dataset, combo):
        combo_rows = [r for r in self.rows() if r["dataset"] == dataset and r["combo"] == combo]
        if not combo_rows:
            raise KeyError((dataset, combo))
        return combo_rows[0]


def read_report_csv(path_or_text):
    text = path_or_text
    if os.path.exists(str(path_or_text)):
        with open(path_or_text) as fh:
            text = fh.read()
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {"dataset": rec["dataset"], "combo": rec["combo"], "status": rec["status"], "error": rec["error"]}
        if rec["status"] == "ok":
            for col in ("acc", "nmi", "ari", "mmd", "high_quality_fraction", "gen_acc", "gen_nmi",
                        "gen_ari", "inverter_consistency", "majority_baseline"):
                row[col] = float(rec[col])
            row["modes_covered"] = int(rec["modes_covered"])
            for col in ("modal_mass", "inverter_mass"):
                row[col] = [float(p) for p in rec[col].split(";")] if rec[col] else []
        rows.append(row)
    return rows


def modal_mass_deviation(mass, target) -> float:
    """Largest absolute per-cluster difference between two mass vectors."""
    return float(np.max(np.abs(np.asarray(mass) - np.asarray(target))))

