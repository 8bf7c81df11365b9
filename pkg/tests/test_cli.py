import csv
import hashlib
import json

import numpy as np
import pytest
import yaml

from mambax.bicubic import bicubic_upsample
from mambax.cli import ABLATIONS, main
from mambax.fusion import ROLE_LABELS
from mambax.pipeline.data import load_dataset
from mambax.pipeline.metrics import evaluate

TINY = {
    "scale": 2,
    "seed": 3,
    "model": {"blocks": 1, "c_m": 4, "c_d": 8, "c_r": 2, "n_state": 4},
    "train": {"max_steps": 3, "patch": 16},
    "data": {"bands": 3, "size": 32, "n_train": 3, "n_test": 2},
}


@pytest.fixture
def env(tmp_path):
    tree = json.loads(json.dumps(TINY))
    tree["data"]["root"] = str(tmp_path / "data")
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(tree))
    return tmp_path, str(path)


def run(*argv):
    return main([str(a) for a in argv])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def digest(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(root.rglob("*")) if p.is_file()}


def test_synth_deterministic_and_shapes(env):
    tmp, cfg = env
    assert run("synth", "--config", cfg) == 0
    assert run("synth", "--config", cfg, "--out", tmp / "again") == 0
    assert digest(tmp / "data") == digest(tmp / "again")
    manifest = json.loads((tmp / "data" / "manifest.json").read_text())
    assert manifest["bands"] == 3
    pair = load_dataset(tmp / "data", "train")[0]
    assert pair.hr.shape == (3, 32, 32) and pair.lr.shape == (3, 16, 16)


def test_train_eval_cycle(env):
    tmp, cfg = env
    run("synth", "--config", cfg)
    assert run("train", "--config", cfg, "--out", tmp / "r1") == 0
    assert run("train", "--config", cfg, "--out", tmp / "r2") == 0
    assert (tmp / "r1/checkpoint.nspc").read_bytes() == (tmp / "r2/checkpoint.nspc").read_bytes()
    hist = rows(tmp / "r1/history.csv")
    assert [int(h["step"]) for h in hist] == [1, 2, 3]

    ck = tmp / "r1/checkpoint.nspc"
    assert run("eval", "--checkpoint", ck, "--out", tmp / "e1", "--emit-bicubic", "--emit-svg") == 0
    assert run("eval", "--checkpoint", ck, "--out", tmp / "e2", "--emit-bicubic", "--emit-svg") == 0
    for name in ("report.csv", "report.json", "per_band_rmse.csv", "per_band_rmse.svg"):
        assert (tmp / "e1" / name).read_bytes() == (tmp / "e2" / name).read_bytes(), name
    report = rows(tmp / "e1/report.csv")
    assert len(report) == 2 + 1 + 1  # images, aggregate, bicubic
    mean = report[2]
    assert mean["image"] == "mean" and float(mean["psnr"]) == pytest.approx(
        np.mean([float(r["psnr"]) for r in report[:2]]), rel=1e-15
    )
    test = load_dataset(tmp / "data", "test", with_aux=False)
    ref = np.mean([evaluate(np.clip(bicubic_upsample(p.lr, 2), 0, 1), p.hr, 2).psnr for p in test])
    assert abs(float(report[3]["psnr"]) - ref) <= 1e-12
    assert len(rows(tmp / "e1/per_band_rmse.csv")) == 3
    assert json.loads((tmp / "e1/run.json").read_text())["wall_clock_s"] >= 0


def test_eval_self_check(env):
    tmp, cfg = env
    run("synth", "--config", cfg)
    run("train", "--config", cfg, "--out", tmp / "r")
    assert run("eval", "--checkpoint", tmp / "r/checkpoint.nspc", "--out", tmp / "e", "--self-check") == 0
    for r in rows(tmp / "e/report.csv"):
        assert float(r["psnr"]) == 100.0 and float(r["ssim"]) == 1.0


def test_resume_continues_step_count(env):
    tmp, cfg = env
    run("synth", "--config", cfg)
    half = tmp / "half.yaml"
    tree = yaml.safe_load(open(cfg))
    tree["train"]["max_steps"] = 1
    half.write_text(yaml.safe_dump(tree))
    assert run("train", "--config", half, "--out", tmp / "h") == 0
    assert run("train", "--config", cfg, "--resume", tmp / "h/checkpoint.nspc", "--out", tmp / "h2") == 0
    assert run("train", "--config", cfg, "--out", tmp / "full") == 0
    assert [int(h["step"]) for h in rows(tmp / "h2/history.csv")] == [1, 2, 3]
    assert (tmp / "h2/checkpoint.nspc").read_bytes() == (tmp / "full/checkpoint.nspc").read_bytes()
    tree["model"]["c_m"] = 8
    other = tmp / "other.yaml"
    other.write_text(yaml.safe_dump(tree))
    assert run("train", "--config", other, "--resume", tmp / "h/checkpoint.nspc", "--out", tmp / "x") == 2


def test_ablate_matrix_rows(env):
    tmp, cfg = env
    run("synth", "--config", cfg)
    assert run("ablate", "--config", cfg, "--axis", "matrix", "--out", tmp / "ab") == 0
    table = rows(tmp / "ab/ablation_matrix.csv")
    assert [r["variant"] for r in table] == ["w/o S_l(·)", "w/o C_l(·)", "linear", "nSPC"]


def test_ablation_label_sets():
    assert [v for v, _ in ABLATIONS["domain"]] == ["Bicubic", "PixelShuffle", "w/o Weights", "MambaX"]
    assert [v for v, _ in ABLATIONS["fusion"]] == list(ROLE_LABELS.values())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # the NaN case overflows on purpose
def test_exit_codes(env, capsys):
    tmp, cfg = env
    bad = tmp / "bad.yaml"
    bad.write_text("model: {widht: 3}\n")
    assert run("train", "--config", bad) == 2
    assert "model.widht" in capsys.readouterr().err
    assert run("train", "--config", cfg, "--data", tmp / "nowhere") == 3
    assert run("eval", "--checkpoint", tmp / "nowhere.nspc") == 3

    run("synth", "--config", cfg)
    tree = yaml.safe_load(open(cfg))
    tree["train"]["lr"] = 1e200
    boom = tmp / "boom.yaml"
    boom.write_text(yaml.safe_dump(tree))
    assert run("train", "--config", boom, "--out", tmp / "b") == 4
    assert "non-finite" in capsys.readouterr().err


def test_eval_band_mismatch(env):
    tmp, cfg = env
    run("synth", "--config", cfg)
    run("train", "--config", cfg, "--out", tmp / "r")
    tree = yaml.safe_load(open(cfg))
    tree["data"]["bands"] = 4
    tree["data"]["root"] = str(tmp / "data4")
    four = tmp / "four.yaml"
    four.write_text(yaml.safe_dump(tree))
    run("synth", "--config", four)
    assert run("eval", "--checkpoint", tmp / "r/checkpoint.nspc", "--data", tmp / "data4", "--out", tmp / "e") == 2
