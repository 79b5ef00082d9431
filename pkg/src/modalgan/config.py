"""JSON run configuration: parsing, validation and default resolution.

Unknown keys anywhere in a config are rejected.
"""

from __future__ import annotations

import copy
import json

from .datasets import LabeledDataset, apply_preset, gmm_ring, load_idx, read_labeled_csv, two_moons
from .latent import LatentConfig, ModePriorParams
from .trainer import Conditions, TrainConfig


class ConfigError(ValueError):
    pass


STUDIED_COMBOS = {
    "~C1~C2~C3": Conditions(False, False, False),
    "C1~C2~C3": Conditions(True, False, False),
    "~C1C2~C3": Conditions(False, True, False),
    "C1C2~C3": Conditions(True, True, False),
    "C1C2C3": Conditions(True, True, True),
}

DATASET_KEYS = {
    "two_moons": {"n": 20000, "ratio": [0.8, 0.2], "noise_sigma": 0.08, "seed": 0},
    "gmm_ring": {"n": 20000, "k": 8, "radius": 2.0, "sigma": 0.05, "seed": 0, "ratio": None},
    "idx": {"images": None, "labels": None, "preset": None, "seed": 0},
    "csv": {"path": None},
}

LATENT_DEFAULTS = {"mode_spacing": 1.0, "noise_halfwidth": 0.25, "extra_dims": 0}

TRAIN_DEFAULTS_2D = {
    "batch_size": 256,
    "steps": 10000,
    "lr_g": 1e-3,
    "lr_d": 1e-3,
    "lr_h": 1e-3,
    "inverter_weight": 1.0,
    "hidden": [128, 128],
    "output_activation": "identity",
}
TRAIN_DEFAULTS_IMAGE = dict(TRAIN_DEFAULTS_2D, batch_size=128, steps=20000, lr_g=2e-4, lr_d=2e-4, lr_h=2e-4,
                            hidden=[256, 256], output_activation="sigmoid")

EVAL_DEFAULTS = {"n_samples": 10000, "mmd_samples": 2000, "coverage_radius": None}

PRIOR_DEFAULTS = {
    "checkpoint": None,
    "labeled_csv": None,
    "probe_csv": None,
    "label_fraction": 0.01,
    "probe_fraction": 0.01,
    "epochs": 200,
    "lr": 1e-3,
}

TOP_KEYS = {"dataset", "datasets", "combo", "combos", "conditions", "latent", "train", "alpha",
            "seed", "out", "eval", "prior"}


def _strict(section, given, allowed):
    if given is None:
        return {}
    if not isinstance(given, dict):
        raise ConfigError(f"'{section}' must be an object")
    unknown = set(given) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {sorted(unknown)}")
    return given


def normalize_combo(text: str) -> str:
    s = text.strip().replace("Ĉ", "~C").replace("!C", "~C").replace("^C", "~C").replace(" ", "")
    s = s.replace("̂", "")
    if s not in STUDIED_COMBOS:
        raise ConfigError(
            f"condition combination {text!r} is not one of the studied combinations "
            f"{sorted(STUDIED_COMBOS)}; ~Ci marks an unsatisfied condition"
        )
    return s


def combo_from_conditions(cond: dict) -> str:
    c = Conditions(**cond)
    return normalize_combo(c.combo)


def resolve_dataset(spec) -> dict:
    spec = dict(spec or {})
    name = spec.get("name")
    if name not in DATASET_KEYS:
        raise ConfigError(f"dataset name must be one of {sorted(DATASET_KEYS)}, got {name!r}")
    allowed = dict(DATASET_KEYS[name])
    _strict(f"dataset[{name}]", spec, set(allowed) | {"name", "label"})
    out = {"name": name, "label": spec.get("label", name)}
    for k, default in allowed.items():
        out[k] = spec.get(k, default)
    if name == "idx" and (not out["images"] or not out["labels"]):
        raise ConfigError("idx dataset needs 'images' and 'labels' paths")
    if name == "csv" and not out["path"]:
        raise ConfigError("csv dataset needs 'path'")
    return out


def build_dataset(spec: dict) -> LabeledDataset:
    name = spec["name"]
    try:
        if name == "two_moons":
            return two_moons(spec["n"], spec["ratio"], spec["noise_sigma"], spec["seed"])
        if name == "gmm_ring":
            return gmm_ring(spec["n"], spec["k"], spec["radius"], spec["sigma"], spec["seed"], spec["ratio"])
        if name == "idx":
            ds = load_idx(spec["images"], spec["labels"])
            return apply_preset(ds, spec["preset"], spec["seed"]) if spec["preset"] else ds
        points, labels = read_labeled_csv(spec["path"])
        return LabeledDataset(points, labels, "csv")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad dataset parameters: {exc}") from exc


def is_image_dataset(spec: dict) -> bool:
    return spec["name"] == "idx"


def resolve(raw: dict, multi=False) -> dict:
    """Materialise every default.  ``multi`` selects the ablation layout."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _strict("config", raw, TOP_KEYS)
    cfg = {}
    if multi:
        if "dataset" in raw or "combo" in raw or "conditions" in raw:
            raise ConfigError("ablation configs use 'datasets' and 'combos'")
        datasets = raw.get("datasets")
        if not datasets or not isinstance(datasets, list):
            raise ConfigError("'datasets' must be a non-empty list")
        cfg["datasets"] = [resolve_dataset(d) for d in datasets]
        combos = raw.get("combos", list(STUDIED_COMBOS))
        if not combos:
            raise ConfigError("'combos' must be non-empty")
        cfg["combos"] = [normalize_combo(c) for c in combos]
        image = any(is_image_dataset(d) for d in cfg["datasets"])
    else:
        if "datasets" in raw or "combos" in raw:
            raise ConfigError("single-run configs use 'dataset' and 'combo'")
        cfg["dataset"] = resolve_dataset(raw.get("dataset"))
        if "combo" in raw and "conditions" in raw:
            raise ConfigError("give either 'combo' or 'conditions', not both")
        if "conditions" in raw:
            cond = _strict("conditions", raw["conditions"], {"multimodal_latent", "use_inverter", "matched_prior"})
            cfg["combo"] = combo_from_conditions(cond)
        else:
            cfg["combo"] = normalize_combo(raw.get("combo", "C1C2C3"))
        image = is_image_dataset(cfg["dataset"])
    latent = _strict("latent", raw.get("latent"), LATENT_DEFAULTS)
    cfg["latent"] = {k: latent.get(k, v) for k, v in LATENT_DEFAULTS.items()}
    tdef = TRAIN_DEFAULTS_IMAGE if image else TRAIN_DEFAULTS_2D
    train = _strict("train", raw.get("train"), tdef)
    cfg["train"] = {k: copy.deepcopy(train.get(k, v)) for k, v in tdef.items()}
    ev = _strict("eval", raw.get("eval"), EVAL_DEFAULTS)
    cfg["eval"] = {k: ev.get(k, v) for k, v in EVAL_DEFAULTS.items()}
    pr = _strict("prior", raw.get("prior"), PRIOR_DEFAULTS)
    cfg["prior"] = {k: pr.get(k, v) for k, v in PRIOR_DEFAULTS.items()}
    cfg["alpha"] = raw.get("alpha")
    cfg["seed"] = raw.get("seed", 0)
    cfg["out"] = raw.get("out", "runs/default")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigError("'seed' must be an integer")
    # surface invalid numeric settings now rather than mid-run
    try:
        LatentConfig(2, **cfg["latent"])
        if cfg["alpha"] is not None:
            ModePriorParams(cfg["alpha"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path, multi=False, overrides=None) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    return resolve(raw, multi=multi)


def make_train_config(cfg: dict, ds: LabeledDataset, combo: str, seed: int) -> TrainConfig:
    m = ds.num_classes
    latent = LatentConfig(m, **cfg["latent"])
    if cfg["alpha"] is not None:
        alpha = ModePriorParams(cfg["alpha"])
        if alpha.num_modes != m:
            raise ConfigError(f"alpha has {alpha.num_modes} entries but the dataset has {m} classes")
    else:
        alpha = ModePriorParams.from_probs(ds.class_masses)
    t = dict(cfg["train"])
    t["hidden"] = tuple(t["hidden"])
    try:
        return TrainConfig(latent=latent, alpha=alpha, seed=seed, conditions=STUDIED_COMBOS[combo], **t)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dump(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
