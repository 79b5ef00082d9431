"""Command-line interface: ``modalgan {train,ablate,learn-prior,eval,gen,plot}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import zipfile

import numpy as np

from . import plotting
from .config import ConfigError, build_dataset, dump, load_config, make_train_config
from .datasets import IdxFormatError, read_labeled_csv
from .priors import LabeledSubset, learn_priors, sparse_split
from .runner import evaluate, run_ablation
from .trainer import GanModel, TrainingAborted, train

log = logging.getLogger("modalgan")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_IO = 0, 2, 3, 4


def _out_dir(cfg, args):
    out = args.out or cfg["out"]
    os.makedirs(out, exist_ok=True)
    return out


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _load_model(path):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        return GanModel.load(path)
    except (zipfile.BadZipFile, EOFError, KeyError) as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc}") from exc


def cmd_train(args):
    cfg = load_config(args.config, overrides={"seed": args.seed})
    ds = build_dataset(cfg["dataset"])
    tcfg = make_train_config(cfg, ds, cfg["combo"], cfg["seed"])
    out = _out_dir(cfg, args)
    _write(os.path.join(out, "config.resolved.json"), dump(cfg))
    model, trace = train(tcfg, ds)
    model.save(os.path.join(out, "model.npz"))
    _write(os.path.join(out, "trace.csv"), trace.to_csv())
    plotting.plot_trace(trace.rows, os.path.join(out, "trace.svg"))
    log.info("wrote model, trace and resolved config to %s", out)
    return EXIT_OK


def cmd_ablate(args):
    cfg = load_config(args.config, multi=True, overrides={"seed": args.seed})
    out = _out_dir(cfg, args)
    _write(os.path.join(out, "config.resolved.json"), dump(cfg))
    report = run_ablation(cfg, workers=args.workers)
    for cell in report.cells:
        cell_dir = os.path.join(out, "cells", f"{cell.dataset}_{cell.combo}")
        os.makedirs(cell_dir, exist_ok=True)
        _write(os.path.join(cell_dir, "trace.csv"), cell.trace_csv)
    _write(os.path.join(out, "report.csv"), report.to_csv())
    _write(os.path.join(out, "report.json"), report.to_json())
    _write(os.path.join(out, "timings.json"), json.dumps(report.timings(), indent=2) + "\n")
    plotting.plot_ablation(report.rows(), os.path.join(out, "report.svg"))
    print(report.to_csv(), end="")
    return EXIT_OK


def cmd_learn_prior(args):
    cfg = load_config(args.config, overrides={"seed": args.seed})
    pcfg = cfg["prior"]
    if not pcfg["checkpoint"]:
        raise ConfigError("prior.checkpoint is required")
    model = _load_model(pcfg["checkpoint"])
    m = model.latent.num_modes
    ds = build_dataset(cfg["dataset"])
    rng = np.random.default_rng(cfg["seed"])
    lab_idx, probe_idx = sparse_split(len(ds), pcfg["label_fraction"], pcfg["probe_fraction"], rng)
    if pcfg["labeled_csv"]:
        points, labels = read_labeled_csv(pcfg["labeled_csv"])
    else:
        points, labels = ds.points[lab_idx], ds.labels[lab_idx]
    ws = LabeledSubset(points, labels, m, fraction=labels.size / len(ds))
    if pcfg["probe_csv"]:
        probe, _ = read_labeled_csv(pcfg["probe_csv"]) if _has_label(pcfg["probe_csv"]) else (
            np.loadtxt(pcfg["probe_csv"], delimiter=",", skiprows=1, ndmin=2), None)
    else:
        probe = ds.points[probe_idx]
    result = learn_priors(model, ws, probe, epochs=pcfg["epochs"], lr=pcfg["lr"])
    payload = {
        "alpha": result.alpha.alpha.tolist(),
        "learned_priors": result.priors.tolist(),
        "posterior_marginal": result.posterior_marginal.tolist(),
        "real_priors": ds.class_masses.tolist(),
        "l1_residual": result.residual,
        "retrain_accuracy": result.retrain.train_accuracy,
        "retrain_converged": result.retrain.converged,
        "labeled_points": int(ws.labels.size),
        "probe_points": int(np.atleast_2d(probe).shape[0]),
    }
    out = _out_dir(cfg, args)
    _write(os.path.join(out, "priors.json"), json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _has_label(path):
    with open(path) as fh:
        return "label" in fh.readline().strip().split(",")


def cmd_eval(args):
    cfg = load_config(args.config, overrides={"seed": args.seed})
    model = _load_model(args.checkpoint)
    ds = build_dataset(cfg["dataset"])
    if ds.num_classes != model.latent.num_modes:
        raise ConfigError(f"dataset has {ds.num_classes} classes, checkpoint has {model.latent.num_modes} modes")
    ev = dict(cfg["eval"])
    if args.samples is not None:
        ev["n_samples"] = args.samples
    report = evaluate(model, ds, ev, cfg["seed"])
    text = report.to_json()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write(os.path.join(args.out, "eval.json"), text + "\n")
    print(text)
    return EXIT_OK


def cmd_gen(args):
    model = _load_model(args.checkpoint)
    rng = np.random.default_rng(args.seed or 0)
    modes, z = model.sample_latent(args.n, rng)
    x = model.g.predict(z) if args.n else np.zeros((0, model.g.n_out))
    out = args.out or "samples.csv"
    plotting.write_samples_csv(out, modes, x, "x")
    if args.latent_out:
        plotting.write_samples_csv(args.latent_out, modes, z, "z")
    return EXIT_OK


def cmd_plot(args):
    tags, coords, _ = plotting.read_samples_csv(args.input)
    out = args.out or os.path.splitext(args.input)[0] + ".svg"
    plotting.scatter_by_mode(tags, coords, out, title=args.title)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="modalgan", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="JSON run config")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("train", help="train one model")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("ablate", help="train and evaluate the condition matrix")
    common(sp)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("learn-prior", help="learn mode priors from sparse labels")
    common(sp)
    sp.set_defaults(func=cmd_learn_prior)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--samples", type=int, default=None)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gen", help="sample from a checkpoint")
    common(sp, config=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--latent-out", default=None)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("plot", help="scatter plot of a samples CSV")
    common(sp, config=False)
    sp.add_argument("--input", required=True)
    sp.add_argument("--title", default=None)
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except TrainingAborted as exc:
        log.error("training aborted: %s", exc)
        return EXIT_ABORT
    except (OSError, IdxFormatError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
