import json
from pathlib import Path
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from modalgan.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from modalgan.config import ConfigError, resolve
from modalgan.plotting import read_samples_csv, write_samples_csv
from modalgan.runner import modal_mass_deviation, read_report_csv

SVG = "{http://www.w3.org/2000/svg}"

TINY = {
    "dataset": {"name": "two_moons", "n": 600, "ratio": [0.8, 0.2]},
    "combo": "C1C2C3",
    "train": {"steps": 120, "batch_size": 32, "hidden": [8, 8]},
    "eval": {"n_samples": 300, "mmd_samples": 100},
    "seed": 5,
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def tiny_ablation(**kw):
    cfg = {k: v for k, v in TINY.items() if k not in ("dataset", "combo")}
    cfg["datasets"] = [TINY["dataset"]]
    cfg.update(kw)
    return cfg


def test_train_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", write_cfg(tmp_path, TINY), "--out", str(out)]) == EXIT_OK
    for name in ("model.npz", "trace.csv", "config.resolved.json", "trace.svg"):
        assert (out / name).is_file()
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["train"]["lr_g"] > 0 and resolved["latent"]["noise_halfwidth"] == 0.25
    assert (out / "trace.csv").read_text().splitlines()[0] == "step,d_loss,g_loss,inv_loss"


def test_train_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, TINY)
    main(["train", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["train", "--config", cfg, "--out", str(tmp_path / "b")])
    for name in ("trace.csv", "model.npz", "trace.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path, TINY)
    main(["train", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["train", "--config", cfg, "--seed", "6", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "trace.csv").read_bytes() != (tmp_path / "b" / "trace.csv").read_bytes()


@pytest.mark.parametrize("combo", ["Ĉ1Ĉ2C3", "C1~C2C3", "C1C2"])
def test_invalid_combo(tmp_path, combo, caplog):
    code = main(["train", "--config", write_cfg(tmp_path, dict(TINY, combo=combo)), "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert "studied combinations" in caplog.text and "C1C2~C3" in caplog.text


@pytest.mark.parametrize("combo", ["Ĉ1Ĉ2Ĉ3", "C1Ĉ2Ĉ3", "~C1C2~C3", "C1C2!C3", "C1C2C3"])
def test_valid_combo_spellings(combo):
    assert resolve(dict(TINY, combo=combo))["combo"] in {"~C1~C2~C3", "C1~C2~C3", "~C1C2~C3", "C1C2~C3", "C1C2C3"}


def test_conditions_object():
    cfg = resolve(dict({k: v for k, v in TINY.items() if k != "combo"},
                       conditions={"multimodal_latent": True, "use_inverter": True, "matched_prior": False}))
    assert cfg["combo"] == "C1C2~C3"


@pytest.mark.parametrize("patch", [
    {"bogus": 1},
    {"train": {"stepz": 10}},
    {"dataset": {"name": "two_moons", "radius": 1.0}},
    {"dataset": {"name": "nope"}},
    {"latent": {"noise_halfwidth": 0.6}},
    {"seed": "x"},
])
def test_config_errors(tmp_path, patch):
    with pytest.raises(ConfigError):
        resolve(dict(TINY, **patch))
    assert main(["train", "--config", write_cfg(tmp_path, dict(TINY, **patch)), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_malformed_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["train", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["train", "--config", str(tmp_path / "absent.json")]) == EXIT_IO


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_abort_exit_code(tmp_path):
    cfg = dict(TINY, train=dict(TINY["train"], lr_g=1e200, lr_d=1e200, lr_h=1e200))
    assert main(["train", "--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path / "r")]) == EXIT_ABORT


def test_ablation_layout_rules():
    with pytest.raises(ConfigError):
        resolve(TINY, multi=True)
    with pytest.raises(ConfigError):
        resolve(tiny_ablation(), multi=False)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("trained")
    cfg = write_cfg(root, TINY)
    assert main(["train", "--config", cfg, "--out", str(root / "run")]) == EXIT_OK
    return root, cfg, root / "run" / "model.npz"


def test_eval_prints_report(trained, capsys, tmp_path):
    _, cfg, ckpt = trained
    assert main(["eval", "--config", cfg, "--checkpoint", str(ckpt), "--out", str(tmp_path)]) == EXIT_OK
    first = json.loads(capsys.readouterr().out)
    for key in ("acc", "nmi", "ari", "mmd", "modal_mass", "modes_covered"):
        assert key in first
    assert len(first["modal_mass"]) == 2
    main(["eval", "--config", cfg, "--checkpoint", str(ckpt)])
    assert json.loads(capsys.readouterr().out) == first


def test_eval_checkpoint_errors(trained, tmp_path):
    _, cfg, _ = trained
    empty = tmp_path / "empty.npz"
    empty.write_bytes(b"")
    assert main(["eval", "--config", cfg, "--checkpoint", str(empty)]) == EXIT_IO
    assert main(["eval", "--config", cfg, "--checkpoint", str(tmp_path / "missing.npz")]) == EXIT_IO


def test_gen_then_plot(trained, tmp_path):
    _, _, ckpt = trained
    samples, latents = tmp_path / "s.csv", tmp_path / "z.csv"
    assert main(["gen", "--checkpoint", str(ckpt), "--n", "500", "--seed", "1", "--out", str(samples),
                 "--latent-out", str(latents)]) == EXIT_OK
    tags, x, header = read_samples_csv(samples)
    ztags, z, _ = read_samples_csv(latents)
    assert header == ["mode", "x_0", "x_1"] and x.shape == (500, 2)
    np.testing.assert_array_equal(tags, ztags)
    np.testing.assert_array_equal(np.argmax(z[:, :2], axis=1), tags)
    out = tmp_path / "s.svg"
    assert main(["plot", "--input", str(samples), "--out", str(out)]) == EXIT_OK
    groups = {g.get("id") for g in ET.parse(out).iter(f"{SVG}g") if g.get("id", "").startswith("mode-")}
    assert groups == {"mode-0", "mode-1"}


def mode_markers(svg_path):
    counts = {}
    for g in ET.parse(svg_path).iter(f"{SVG}g"):
        gid = g.get("id", "")
        if gid.startswith("mode-"):
            counts[gid] = sum(1 for _ in g.iter(f"{SVG}use"))
    return counts


def test_plot_three_points(tmp_path):
    src = tmp_path / "p.csv"
    write_samples_csv(src, [0, 1, 0], np.array([[0.1, 0.2], [0.5, 0.5], [-1.0, 2.0]]))
    out = tmp_path / "p.svg"
    assert main(["plot", "--input", str(src), "--out", str(out)]) == EXIT_OK
    counts = mode_markers(out)
    assert counts == {"mode-0": 2, "mode-1": 1}
    assert sum(counts.values()) == 3


def test_plot_rejects_non_2d(tmp_path, caplog):
    src = tmp_path / "p.csv"
    write_samples_csv(src, [0, 1], np.zeros((2, 3)))
    assert main(["plot", "--input", str(src), "--out", str(tmp_path / "p.svg")]) == EXIT_CONFIG
    assert "eval" in caplog.text


def test_learn_prior_label_range(trained, tmp_path):
    _, _, ckpt = trained
    lab = tmp_path / "lab.csv"
    lab.write_text("x_0,x_1,label\n0.1,0.2,0\n0.3,0.1,2\n")
    cfg = dict(TINY, prior={"checkpoint": str(ckpt), "labeled_csv": str(lab), "epochs": 2})
    assert main(["learn-prior", "--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_learn_prior_missing_checkpoint(tmp_path):
    cfg = dict(TINY, prior={"checkpoint": str(tmp_path / "none.npz")})
    assert main(["learn-prior", "--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_IO


def test_learn_prior_writes_json(trained, tmp_path):
    _, _, ckpt = trained
    cfg = dict(TINY, prior={"checkpoint": str(ckpt), "label_fraction": 0.05, "probe_fraction": 0.1, "epochs": 5})
    assert main(["learn-prior", "--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_OK
    payload = json.loads((tmp_path / "priors.json").read_text())
    assert len(payload["alpha"]) == 2
    assert sum(payload["learned_priors"]) == pytest.approx(1.0)
    np.testing.assert_allclose(payload["real_priors"], [0.8, 0.2], atol=1e-9)


def test_ablate_single_cell(tmp_path, capsys):
    cfg = write_cfg(tmp_path, tiny_ablation(combos=["C1C2C3"]))
    out = tmp_path / "abl"
    assert main(["ablate", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = read_report_csv((out / "report.csv").read_text())
    assert len(rows) == 1 and rows[0]["combo"] == "C1C2C3"
    report = json.loads((out / "report.json").read_text())
    assert len(report) == 1
    assert rows[0]["acc"] == report[0]["acc"]
    assert (out / "report.svg").is_file() and (out / "cells" / "two_moons_C1C2C3" / "trace.csv").is_file()
    assert "wall_time" not in (out / "report.csv").read_text()


def test_ablate_matrix_and_determinism(tmp_path):
    cfg_dict = tiny_ablation(datasets=[TINY["dataset"], dict(TINY["dataset"], ratio=[0.5, 0.5], label="moons55")],
                             combos=["C1C2C3", "C1C2~C3", "~C1~C2~C3"])
    cfg = write_cfg(tmp_path, cfg_dict)
    main(["ablate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["ablate", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "2"])
    rows = read_report_csv((tmp_path / "a" / "report.csv").read_text())
    assert [(r["dataset"], r["combo"]) for r in rows] == [
        (d, c) for d in ("two_moons", "moons55") for c in ("C1C2C3", "C1C2~C3", "~C1~C2~C3")]
    for name in ("report.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_report_round_trip(tmp_path):
    cfg = write_cfg(tmp_path, tiny_ablation(combos=["C1C2~C3", "C1C2C3"]))
    main(["ablate", "--config", cfg, "--out", str(tmp_path / "a")])
    text = (tmp_path / "a" / "report.csv").read_text()
    rows = read_report_csv(text)
    as_json = json.loads((tmp_path / "a" / "report.json").read_text())
    for r, j in zip(rows, as_json):
        for key in ("acc", "nmi", "ari", "mmd"):
            assert r[key] == j[key]
        assert list(r["modal_mass"]) == j["modal_mass"]
        assert list(r["inverter_mass"]) == j["inverter_mass"]
        assert modal_mass_deviation(r["modal_mass"], j["modal_mass"]) == 0.0


@pytest.mark.parametrize("path", sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.json")),
                         ids=lambda p: p.name)
def test_shipped_configs_resolve(path):
    raw = json.loads(path.read_text())
    cfg = resolve(raw, multi="datasets" in raw)
    assert cfg["train"]["steps"] > 0
