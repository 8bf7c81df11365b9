"""Command-line front end: ``mambax synth|train|eval|ablate``.

Exit codes: 0 ok, 2 configuration/contract error, 3 data error, 4 numeric abort.
Every emitted number is a function of (config, seed); wall-clock time goes to
``run.json`` only, so reports and checkpoints compare bitwise across runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .bicubic import bicubic_upsample
from .checkpoint import Checkpoint, from_trainer
from .config import ExperimentConfig, load_config
from .errors import ConfigError, ContractError, DataError, DimensionError, DomainError, MambaXError, NumericError
from .fusion import ROLE_LABELS
from .pipeline.data import ImagePair, load_dataset, load_manifest, synthesize_dataset
from .pipeline.metrics import MetricsReport, evaluate
from .pipeline.model import MambaX
from .pipeline.train import Trainer, predict

log = logging.getLogger("mambax")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
METRIC_COLUMNS = ("psnr", "ssim", "sam", "ergas", "cc")

# (row label, config overrides) per ablation axis; labels mirror the ablation table rows
ABLATIONS: dict[str, list[tuple[str, dict[str, Any]]]] = {
    "domain": [
        ("Bicubic", {"model": {"transition_mode": "bicubic"}}),
        ("PixelShuffle", {"model": {"transition_mode": "pixelshuffle"}}),
        ("w/o Weights", {"model": {"transition_mode": "adaptive_no_weights"}}),
        ("MambaX", {"model": {"transition_mode": "adaptive"}}),
    ],
    "matrix": [
        ("w/o S_l(·)", {"model": {"delta_mode": "nspc", "c_mode": "nspc", "use_spatial": False}}),
        ("w/o C_l(·)", {"model": {"delta_mode": "nspc", "c_mode": "nspc", "use_channel": False}}),
        ("linear", {"model": {"delta_mode": "linear", "c_mode": "linear"}}),
        ("nSPC", {"model": {"delta_mode": "nspc", "c_mode": "nspc", "use_spatial": True, "use_channel": True}}),
    ],
    "fusion": [(label, {"task": "mfsr", "model": {"role_map": key}}) for key, label in ROLE_LABELS.items()],
}


# -- helpers ------------------------------------------------------------------------------
def _fmt(x: float) -> str:
    return repr(float(x))


def _merge(tree: dict, overrides: dict) -> dict:
    out = json.loads(json.dumps(tree))
    for k, v in overrides.items():
        out[k] = _merge(out.get(k, {}), v) if isinstance(v, dict) else v
    return out


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
    if getattr(args, "seed", None) is not None:
        cfg = ExperimentConfig.from_dict(_merge(cfg.to_dict(), {"seed": args.seed}))
    return cfg


def _data_root(args, cfg: ExperimentConfig) -> Path:
    return Path(getattr(args, "data", None) or cfg.data.root)


def _load_split(root: Path, cfg: ExperimentConfig, split: str) -> list[ImagePair]:
    manifest = load_manifest(root)
    if int(manifest["scale"]) != cfg.scale:
        raise ContractError(f"dataset {root} has scale {manifest['scale']}, config expects {cfg.scale}")
    return load_dataset(root, split, with_aux=cfg.task == "mfsr")


def _write_csv(path: Path, header: Sequence[str], rows: list[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _mean_row(reports: list[MetricsReport]) -> dict[str, float]:
    return {k: float(np.mean([getattr(r, k) for r in reports])) for k in METRIC_COLUMNS}


def _run_record(out: Path, command: str, cfg: ExperimentConfig, t0: float) -> None:
    _write_json(out / "run.json", {"command": command, "config_hash": cfg.hash(), "wall_clock_s": time.time() - t0})


# -- commands ---------------------------------------------------------------------------------
def cmd_synth(args) -> int:
    cfg = _load(args)
    d = cfg.data
    out = Path(args.out or d.root)
    manifest = synthesize_dataset(
        out,
        bands=d.bands,
        size=d.size,
        n_train=d.n_train,
        n_test=d.n_test,
        scale=cfg.scale,
        blur_sigma=d.blur_sigma,
        noise_sigma=d.noise_sigma,
        srf=d.srf,
        seed=cfg.seed,
    )
    n = sum(len(v) for v in manifest["splits"].values())
    print(f"wrote {n} image pairs to {out}")
    return EXIT_OK


def _same_model(a: ExperimentConfig, b: ExperimentConfig) -> bool:
    strip = lambda c: {k: v for k, v in c.to_dict().items() if k != "train"}  # noqa: E731
    return strip(a) == strip(b)


def cmd_train(args) -> int:
    t0 = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.resume:
        ckpt = Checkpoint.load(args.resume)
        cfg = _load(args) if args.config else ckpt.experiment_config()
        if not _same_model(cfg, ckpt.experiment_config()):
            raise ConfigError("--resume: config differs from the checkpoint outside the 'train' section")
        data = _load_split(_data_root(args, cfg), cfg, "train")
        trainer = ckpt.restore_trainer(data, cfg)
        trainer.model.config = cfg
        log.info("resuming at step %d of %d", trainer.step, trainer.total_steps)
    else:
        cfg = _load(args)
        data = _load_split(_data_root(args, cfg), cfg, "train")
        trainer = Trainer(cfg, data)
    trainer.run()
    from_trainer(trainer).save(out / "checkpoint.nspc")
    _write_csv(out / "history.csv", ("step", "loss"), [(h["step"], _fmt(h["loss"])) for h in trainer.history])
    _run_record(out, "train", cfg, t0)
    final = trainer.history[-1]["loss"] if trainer.history else float("nan")
    print(f"step {trainer.step} loss {final:.6g} -> {out / 'checkpoint.nspc'}")
    return EXIT_OK


def evaluate_model(
    model: MambaX | None, pairs: list[ImagePair], self_check: bool = False
) -> tuple[list[MetricsReport], list[MetricsReport]]:
    """Per-image reports for the model (or HR vs HR when self_check) and for bicubic."""
    ours, base = [], []
    for pair in pairs:
        if self_check:
            sr = pair.hr
        else:
            sr = np.clip(predict(model, pair), 0.0, 1.0)
        ours.append(evaluate(sr, pair.hr, pair.scale))
        base.append(evaluate(np.clip(bicubic_upsample(pair.lr, pair.scale), 0.0, 1.0), pair.hr, pair.scale))
    return ours, base


def _emit_svg(path: Path, curves: dict[str, np.ndarray]) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "mambax"
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, values in curves.items():
        ax.plot(np.arange(1, len(values) + 1), values, marker="o", ms=3, label=label)
    ax.set_xlabel("band")
    ax.set_ylabel("RMSE")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_eval(args) -> int:
    t0 = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = Checkpoint.load(args.checkpoint)
    cfg = ckpt.experiment_config()
    model = ckpt.build_model()
    pairs = _load_split(_data_root(args, cfg), cfg, args.split)
    if pairs and pairs[0].hr.shape[0] != model.bands:
        raise ContractError(f"checkpoint model has {model.bands} bands, dataset has {pairs[0].hr.shape[0]}")
    ours, base = evaluate_model(model, pairs, args.self_check)
    label = "hr_self_check" if args.self_check else "mambax"
    rows = [[p.meta.get("source", str(i)), label] + [_fmt(getattr(r, k)) for k in METRIC_COLUMNS]
            for i, (p, r) in enumerate(zip(pairs, ours))]
    agg = _mean_row(ours)
    rows.append(["mean", label] + [_fmt(agg[k]) for k in METRIC_COLUMNS])
    curves = {label: np.mean([r.per_band_rmse for r in ours], axis=0)}
    report: dict[str, Any] = {"config_hash": cfg.hash(), "rows": [dict(zip(("image", "method") + METRIC_COLUMNS, r)) for r in rows]}
    if args.emit_bicubic:
        bagg = _mean_row(base)
        rows.append(["mean", "bicubic"] + [_fmt(bagg[k]) for k in METRIC_COLUMNS])
        curves["bicubic"] = np.mean([r.per_band_rmse for r in base], axis=0)
        report["bicubic"] = bagg
    report["aggregate"] = agg
    _write_csv(out / "report.csv", ("image", "method") + METRIC_COLUMNS, rows)
    bands = len(next(iter(curves.values())))
    _write_csv(
        out / "per_band_rmse.csv",
        ("band",) + tuple(curves),
        [[b + 1] + [_fmt(c[b]) for c in curves.values()] for b in range(bands)],
    )
    _write_json(out / "report.json", report)
    if args.emit_svg:
        _emit_svg(out / "per_band_rmse.svg", curves)
    _run_record(out, "eval", cfg, t0)
    print("  ".join(f"{k}={agg[k]:.4f}" for k in METRIC_COLUMNS))
    return EXIT_OK


def run_ablation(cfg: ExperimentConfig, axis: str, root: Path) -> list[dict[str, Any]]:
    if axis not in ABLATIONS:
        raise ConfigError(f"unknown ablation axis {axis!r}; expected one of {sorted(ABLATIONS)}")
    rows = []
    for label, overrides in ABLATIONS[axis]:
        vcfg = ExperimentConfig.from_dict(_merge(cfg.to_dict(), overrides))
        train_pairs = _load_split(root, vcfg, "train")
        test_pairs = _load_split(root, vcfg, "test")
        log.info("ablation %s: training variant %r", axis, label)
        model, history = Trainer(vcfg, train_pairs).run()
        ours, _ = evaluate_model(model, test_pairs)
        row = {"variant": label, **_mean_row(ours)}
        row["final_loss"] = history[-1]["loss"] if history else float("nan")
        row["config_hash"] = vcfg.hash()
        rows.append(row)
    return rows


def cmd_ablate(args) -> int:
    t0 = time.time()
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_ablation(cfg, args.axis, _data_root(args, cfg))
    header = ("variant",) + METRIC_COLUMNS + ("final_loss", "config_hash")
    body = [[r["variant"]] + [_fmt(r[k]) for k in METRIC_COLUMNS + ("final_loss",)] + [r["config_hash"]] for r in rows]
    _write_csv(out / f"ablation_{args.axis}.csv", header, body)
    _run_record(out, f"ablate:{args.axis}", cfg, t0)
    for r in rows:
        print(f"{r['variant']:<24} psnr={r['psnr']:.3f} ssim={r['ssim']:.4f} sam={r['sam']:.3f}")
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mambax", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="YAML experiment config")
        p.add_argument("--seed", type=int, help="override config seed")

    p = sub.add_parser("synth", help="write the synthetic HR/LR/PAN dataset")
    common(p)
    p.add_argument("--out", help="dataset directory (default: data.root)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    p.add_argument("--data", help="dataset directory (default: data.root)")
    p.add_argument("--out", default="runs/train", help="output directory")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset directory (default: data.root from the checkpoint config)")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--out", default="runs/eval")
    p.add_argument("--emit-bicubic", action="store_true", help="add the bicubic baseline row")
    p.add_argument("--emit-svg", action="store_true", help="plot per-band RMSE to SVG")
    p.add_argument("--self-check", action="store_true", help="debug: score HR against itself")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare the variants of one ablation axis")
    common(p)
    p.add_argument("--axis", required=True, choices=sorted(ABLATIONS))
    p.add_argument("--data", help="dataset directory (default: data.root)")
    p.add_argument("--out", default="runs/ablate")
    p.set_defaults(func=cmd_ablate)
    return parser


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, (ConfigError, ContractError)):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, DimensionError, DomainError, OSError)):
        return EXIT_DATA
    return 1


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (MambaXError, OSError) as exc:
        print(f"mambax {args.command}: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    raise SystemExit(main())
