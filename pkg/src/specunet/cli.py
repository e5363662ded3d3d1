"""Command-line pipeline: generate -> train -> eval -> longhorizon -> lipschitz
-> transfer -> bench -> oracles.

Configs are flat JSON with dotted keys; CLI flags override config values and
unknown keys are rejected. Every command writes its outputs atomically (staging
path, rename on success) along with a run manifest.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from . import bench as bench_mod
from . import evaluate as ev
from . import simulate as sim
from .model import ModelConfig, PersistenceModel, build_model, load_model
from .train import TrainConfig, train_epochs

PRESETS = {
    "desk": {
        "model.width": 8,
        "model.modes": 8,
        "model.levels": 3,
        "model.t_in": 10,
        "train.epochs": 50,
        "train.batch_size": 16,
        "train.split": [48, 8, 8],
    },
    "paperish": {
        "model.width": 32,
        "model.modes": 12,
        "model.levels": 3,
        "model.t_in": 10,
        "train.epochs": 500,
        "train.batch_size": 10,
        "train.split": [850, 150, 200],
    },
}


class CliError(SystemExit):
    def __init__(self, message):
        print(f"error: {message}", file=sys.stderr)
        super().__init__(2)


def _load_config_file(path):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise CliError(f"config file {path} must hold a flat JSON object")
    return cfg


def resolve_config(defaults, config_path=None, overrides=None, preset=None):
    """defaults <- preset <- config file <- explicit CLI flags; flags win."""
    resolved = dict(defaults)
    if preset:
        for k, v in PRESETS[preset].items():
            if k not in resolved:
                raise CliError(f"preset key {k!r} unknown for this command")
            resolved[k] = v
    if config_path:
        for k, v in _load_config_file(config_path).items():
            if k not in resolved:
                raise CliError(f"unknown config key {k!r} (known: {sorted(resolved)})")
            resolved[k] = v
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in resolved:
            raise CliError(f"unknown option key {k!r}")
        resolved[k] = v
    return resolved


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory, command, config, seed):
    """One manifest per output directory, with hashes of every other artifact."""
    directory = Path(directory)
    hashes = {}
    for p in sorted(directory.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            hashes[str(p.relative_to(directory))] = _sha256(p)
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "artifact_hashes": hashes,
        "tool_version": __version__,
    }
    with open(directory / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


class staging_dir:
    """Build outputs in a temp directory; atomically rename into place on success."""

    def __init__(self, final_path):
        self.final = Path(final_path)
        if self.final.exists():
            raise CliError(f"output path already exists: {self.final}")

    def __enter__(self):
        self.final.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(
            tempfile.mkdtemp(prefix=f".{self.final.name}.partial-", dir=self.final.parent)
        )
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            os.replace(self.tmp, self.final)
        else:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise CliError(f"--{n.replace('_', '-')} is required")


def _load_dataset(path):
    try:
        return sim.load_dataset(path)
    except FileNotFoundError:
        raise CliError(f"dataset file not found: {path}")


def _load_checkpoint_model(path):
    try:
        return load_model(path)
    except FileNotFoundError:
        raise CliError(f"checkpoint file not found: {path}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args):
    defaults = {
        "nu": 1e-3,
        "grid": 32,
        "ntraj": 64,
        "frames": 20,
        "seed": 0,
        "dt": 1e-3,
        "frame_interval": 250,
        "forcing_amplitude": 0.1,
        "ic_alpha": 5.0,
        "ic_tau": 7.0,
        "ic_std": 1.0,
        "burn_in_steps": 0,
    }
    overrides = {k: getattr(args, k, None) for k in defaults}
    cfg = resolve_config(defaults, args.config, overrides)
    _require(args, "out")
    solver_cfg = sim.SolverConfig(
        grid_n=cfg["grid"],
        nu=cfg["nu"],
        dt=cfg["dt"],
        frame_interval=cfg["frame_interval"],
        t_frames=cfg["frames"],
        forcing_amplitude=cfg["forcing_amplitude"],
        ic_alpha=cfg["ic_alpha"],
        ic_tau=cfg["ic_tau"],
        ic_std=cfg["ic_std"],
        burn_in_steps=cfg["burn_in_steps"],
        seed=cfg["seed"],
    )
    out = Path(args.out)
    with staging_dir(out) as tmp:
        ds = sim.generate_dataset(solver_cfg, cfg["ntraj"], log=print)
        sim.save_dataset(tmp / out.name, ds)
        write_manifest(tmp, "generate", cfg, cfg["seed"])
    print(f"wrote {out} ({cfg['ntraj']} trajectories at {cfg['grid']}^2)")
    return 0


def _train_defaults():
    return {
        "model.arch": "spectral_unet",
        "model.width": 8,
        "model.modes": 8,
        "model.levels": 3,
        "model.t_in": 10,
        "model.residual_target": True,
        "model.head_hidden_mult": 4,
        "train.epochs": 50,
        "train.batch_size": 16,
        "train.peak_lr": 1e-3,
        "train.weight_decay": 1e-5,
        "train.lambda_sg": 0.1,
        "train.seed": 0,
        "train.t_in": 10,
        "train.t_out": 10,
        "train.split": [48, 8, 8],
    }


def cmd_train(args):
    overrides = {
        "model.arch": args.arch,
        "model.width": args.width,
        "model.modes": args.modes,
        "model.levels": args.levels,
        "model.t_in": args.t_in,
        "model.residual_target": None if args.direct is None else not args.direct,
        "train.epochs": args.epochs,
        "train.batch_size": args.batch_size,
        "train.peak_lr": args.peak_lr,
        "train.weight_decay": args.weight_decay,
        "train.lambda_sg": args.lambda_sg,
        "train.seed": args.seed,
        "train.t_out": args.t_out,
        "train.split": None if args.split is None else [int(s) for s in args.split.split("/")],
    }
    cfg = resolve_config(_train_defaults(), args.config, overrides, preset=args.preset)
    _require(args, "data", "out")
    ds = _load_dataset(args.data)
    h = ds.data.shape[-1]
    if cfg["model.arch"] == "fno_baseline":
        cfg["model.residual_target"] = False
    mcfg = ModelConfig(
        width=cfg["model.width"],
        modes=cfg["model.modes"],
        levels=cfg["model.levels"],
        t_in=cfg["model.t_in"],
        grid=(h, h),
        residual_target=cfg["model.residual_target"],
        head_hidden_mult=cfg["model.head_hidden_mult"],
        arch=cfg["model.arch"],
    )
    tcfg = TrainConfig(
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        peak_lr=cfg["train.peak_lr"],
        weight_decay=cfg["train.weight_decay"],
        lambda_sg=cfg["train.lambda_sg"],
        seed=cfg["train.seed"],
        t_in=cfg["train.t_in"],
        t_out=cfg["train.t_out"],
        split=tuple(cfg["train.split"]),
    )
    model = build_model(mcfg, seed=tcfg.seed)
    with staging_dir(args.out) as tmp:
        report = train_epochs(model, ds, tcfg, run_dir=tmp, log=print if args.verbose else None)
        pers, _ = ev.persistence_baseline(ds.data, report.test_traj, tcfg.t_in, tcfg.t_out)
        with open(tmp / "summary.json", "w") as f:
            json.dump(
                {
                    "best_epoch": report.best_epoch,
                    "best_val_l2": report.best_val_l2,
                    "test_l2_mean": report.test_l2_mean,
                    "persistence_l2": pers,
                    "wall_seconds": report.wall_seconds,
                },
                f,
                indent=2,
                sort_keys=True,
            )
            f.write("\n")
        write_manifest(tmp, "train", cfg, tcfg.seed)
    print(
        f"trained {cfg['model.arch']}: test joint L2 {report.test_l2_mean:.4f} "
        f"(persistence {pers:.4f}), best epoch {report.best_epoch}"
    )
    return 0


def cmd_eval(args):
    defaults = {"t_in": 10, "t_out": 10, "split": [48, 8, 8], "seed": 0}
    overrides = {
        "t_in": args.t_in,
        "t_out": args.t_out,
        "seed": args.seed,
        "split": None if args.split is None else [int(s) for s in args.split.split("/")],
    }
    cfg = resolve_config(defaults, args.config, overrides)
    _require(args, "checkpoint", "data", "out")
    model = _load_checkpoint_model(args.checkpoint)
    ds = _load_dataset(args.data)
    from .train import split_trajectories

    _, _, test_idx = split_trajectories(ds.n_traj, tuple(cfg["split"]), cfg["seed"])
    window, truth = ev.dataset_eval_arrays(ds.data, test_idx, cfg["t_in"], cfg["t_out"])
    pred = model.rollout(window.astype(np.float32), cfg["t_out"])
    per_traj = ev.joint_trajectory_l2(pred, truth)
    pers, pers_traj = ev.persistence_baseline(ds.data, test_idx, cfg["t_in"], cfg["t_out"])
    with staging_dir(args.out) as tmp:
        ev.write_per_traj_csv(tmp / "per_trajectory.csv", per_traj)
        with open(tmp / "summary.json", "w") as f:
            json.dump(
                {
                    "model_l2_mean": float(per_traj.mean()),
                    "model_l2_std": float(per_traj.std()),
                    "persistence_l2": pers,
                    "n_test": len(test_idx),
                },
                f,
                indent=2,
                sort_keys=True,
            )
            f.write("\n")
        write_manifest(tmp, "eval", cfg, cfg["seed"])
    print(f"model joint L2 {per_traj.mean():.4f} vs persistence {pers:.4f}")
    return 0


def cmd_longhorizon(args):
    defaults = {"t_in": 10, "horizon": 100, "threshold": 1e6, "split": [48, 8, 8], "seed": 0}
    overrides = {
        "t_in": args.t_in,
        "horizon": args.horizon,
        "threshold": args.threshold,
        "seed": args.seed,
        "split": None if args.split is None else [int(s) for s in args.split.split("/")],
    }
    cfg = resolve_config(defaults, args.config, overrides)
    _require(args, "checkpoint", "data", "out")
    model = _load_checkpoint_model(args.checkpoint)
    ds = _load_dataset(args.data)
    from .train import split_trajectories

    _, _, test_idx = split_trajectories(ds.n_traj, tuple(cfg["split"]), cfg["seed"])
    window, _ = ev.dataset_eval_arrays(ds.data, test_idx, cfg["t_in"], 0)
    report = ev.long_horizon_rollout(
        model, window.astype(np.float32), cfg["horizon"], cfg["threshold"]
    )
    with staging_dir(args.out) as tmp:
        report.write_energy_csv(tmp / "energy.csv")
        with open(tmp / "summary.json", "w") as f:
            f.write(report.to_json())
            f.write("\n")
        write_manifest(tmp, "longhorizon", cfg, cfg["seed"])
    print(
        f"horizon {cfg['horizon']}: blow-up fraction {report.blowup_fraction[-1]:.3f}, "
        f"final mean energy {report.mean_energy[-1]:.4g}"
    )
    return 0


def cmd_lipschitz(args):
    defaults = {
        "t_in": 10,
        "t_out": 10,
        "probes": 100,
        "scale": 1e-3,
        "inputs": 100,
        "seed": 0,
        "split": [48, 8, 8],
    }
    overrides = {
        "t_in": args.t_in,
        "t_out": args.t_out,
        "probes": args.probes,
        "scale": args.scale,
        "inputs": args.inputs,
        "seed": args.seed,
        "split": None if args.split is None else [int(s) for s in args.split.split("/")],
    }
    cfg = resolve_config(defaults, args.config, overrides)
    _require(args, "checkpoint", "data", "out")
    model = _load_checkpoint_model(args.checkpoint)
    ds = _load_dataset(args.data)
    from .train import split_trajectories

    _, _, test_idx = split_trajectories(ds.n_traj, tuple(cfg["split"]), cfg["seed"])
    window, _ = ev.dataset_eval_arrays(ds.data, test_idx, cfg["t_in"], 0)
    window = window[: cfg["inputs"]]
    report = ev.empirical_lipschitz(
        model,
        window,
        n_probes=cfg["probes"],
        scale=cfg["scale"],
        t_out=cfg["t_out"],
        seed=cfg["seed"],
    )
    delta = ev.residual_delta(model, window.astype(np.float32), t_out=cfg["t_out"])
    report.delta_mean = delta.mean
    report.delta_sup = delta.sup
    bound = ev.drift_bound_check(model, ds.data, test_idx, cfg["t_in"], cfg["t_out"])
    with staging_dir(args.out) as tmp:
        with open(tmp / "lipschitz.json", "w") as f:
            f.write(report.to_json())
            f.write("\n")
        with open(tmp / "drift_bound.json", "w") as f:
            json.dump(bound, f, indent=2, sort_keys=True)
            f.write("\n")
        write_manifest(tmp, "lipschitz", cfg, cfg["seed"])
    print(
        f"L1 mean {report.l1_mean:.3f} (p95 {report.l1_p95:.3f}); "
        f"LT mean {report.lt_mean:.3f}; delta mean {report.delta_mean:.4f} sup {report.delta_sup:.4f}; "
        f"drift bound holds on {bound['fraction_within_bound']:.0%} of trajectories"
    )
    return 0


def cmd_transfer(args):
    defaults = {"t_in": 10, "t_out": 10, "scheme": "spectral_zeropad", "factor": 2, "inputs": 8}
    overrides = {
        "t_in": args.t_in,
        "t_out": args.t_out,
        "scheme": args.scheme,
        "factor": args.factor,
        "inputs": args.inputs,
    }
    cfg = resolve_config(defaults, args.config, overrides)
    _require(args, "data_hi", "out")
    if args.checkpoint is None and not args.persistence:
        raise CliError("provide --checkpoint or --persistence")
    model = PersistenceModel(cfg["t_in"]) if args.persistence else _load_checkpoint_model(args.checkpoint)
    ds = _load_dataset(args.data_hi)
    data = ds.data[: cfg["inputs"]]
    report = ev.resolution_transfer(
        model, data, cfg["t_in"], cfg["t_out"], scheme=cfg["scheme"], factor=cfg["factor"]
    )
    with staging_dir(args.out) as tmp:
        with open(tmp / "transfer.json", "w") as f:
            f.write(report.to_json())
            f.write("\n")
        write_manifest(tmp, "transfer", cfg, 0)
    print(
        f"{cfg['scheme']}: native {report.native_l2:.4f} -> transfer {report.transfer_l2:.4f} "
        f"(ratio {report.ratio:.3f})"
    )
    return 0


def cmd_bench(args):
    defaults = {"batch_sizes": [1, 4, 32], "iters": 50, "warmup": 20, "t_out": 10}
    overrides = {
        "batch_sizes": None
        if args.batch_sizes is None
        else [int(b) for b in args.batch_sizes.split(",")],
        "iters": args.iters,
        "warmup": args.warmup,
        "t_out": args.t_out,
    }
    cfg = resolve_config(defaults, args.config, overrides)
    _require(args, "checkpoint", "out")
    model = _load_checkpoint_model(args.checkpoint)
    h, w = model.cfg.grid
    bcfg = bench_mod.BenchConfig(
        batch_sizes=tuple(cfg["batch_sizes"]),
        warmup_iters=cfg["warmup"],
        timed_iters=cfg["iters"],
        t_out=cfg["t_out"],
        grid=(h, w),
        t_in=model.cfg.t_in,
    )
    records = bench_mod.time_model(model, bcfg, model_name=model.cfg.arch)
    with staging_dir(args.out) as tmp:
        bench_mod.write_records_csv(tmp / "timing.csv", records)
        bench_mod.aggregate([tmp / "timing.csv"], tmp / "leaderboard_speed.csv")
        write_manifest(tmp, "bench", cfg, 0)
    for r in records:
        print(
            f"B={r.batch_size}: median {r.latency_ms_median:.1f} ms "
            f"({r.throughput_samples_per_sec:.1f} samples/s) [{r.status}]"
        )
    return 0


def cmd_oracles(args):
    from .oracles import run_oracle_suite

    results = run_oracle_suite(verbose=True)
    failed = [name for name, ok, _ in results if not ok]
    if args.out:
        with staging_dir(args.out) as tmp:
            with open(tmp / "oracles.json", "w") as f:
                json.dump(
                    [{"oracle": n, "passed": ok, "detail": d} for n, ok, d in results],
                    f,
                    indent=2,
                    sort_keys=True,
                )
                f.write("\n")
            write_manifest(tmp, "oracles", {}, 0)
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return 1
    print(f"all {len(results)} oracle suites green")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p):
    p.add_argument("--config", help="flat JSON config file (dotted keys); flags override")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="specunet",
        description="Spectral U-Net operator pipeline: data generation, training, "
        "evaluation, stability diagnostics, and timing.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("generate", help="integrate a vorticity trajectory dataset")
    _add_common(p)
    p.add_argument("--nu", type=float, help="viscosity (default 1e-3)")
    p.add_argument("--grid", type=int, help="grid size N (power of two, default 32)")
    p.add_argument("--ntraj", type=int, help="number of trajectories (default 64)")
    p.add_argument("--frames", type=int, help="stored frames per trajectory (default 20)")
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--dt", type=float, help="solver step (default 1e-3)")
    p.add_argument("--frame-interval", dest="frame_interval", type=int,
                   help="solver steps between stored frames (default 250)")
    p.add_argument("--forcing-amplitude", dest="forcing_amplitude", type=float,
                   help="steady forcing amplitude (default 0.1)")
    p.add_argument("--ic-alpha", dest="ic_alpha", type=float, help="IC envelope exponent (default 5.0)")
    p.add_argument("--ic-tau", dest="ic_tau", type=float, help="IC envelope knee (default 7.0)")
    p.add_argument("--ic-std", dest="ic_std", type=float, help="IC standard deviation (default 1.0)")
    p.add_argument("--burn-in", dest="burn_in_steps", type=int, help="burn-in steps (default 0)")
    p.add_argument("--out", help="output dataset directory")
    p.set_defaults(func=cmd_generate)

    p = subs.add_parser("train", help="train an operator on a dataset")
    _add_common(p)
    p.add_argument("--data", help="dataset file from `generate`")
    p.add_argument("--out", help="run directory to create")
    p.add_argument("--preset", choices=sorted(PRESETS), help="hyperparameter preset")
    p.add_argument("--arch", choices=["spectral_unet", "fno_baseline"],
                   help="operator family (default spectral_unet)")
    p.add_argument("--width", type=int, help="base channel width w (default 8)")
    p.add_argument("--modes", type=int, help="spectral truncation M (default 8)")
    p.add_argument("--levels", type=int, help="encoder levels (default 3)")
    p.add_argument("--t-in", dest="t_in", type=int, help="input window length (default 10)")
    p.add_argument("--t-out", dest="t_out", type=int, help="rollout horizon (default 10)")
    p.add_argument("--direct", action="store_const", const=True, default=None,
                   help="direct prediction instead of residual target")
    p.add_argument("--epochs", type=int, help="training epochs (default 50)")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="windows per step (default 16)")
    p.add_argument("--peak-lr", dest="peak_lr", type=float, help="one-cycle peak (default 1e-3)")
    p.add_argument("--weight-decay", dest="weight_decay", type=float,
                   help="decoupled weight decay (default 1e-5)")
    p.add_argument("--lambda-sg", dest="lambda_sg", type=float,
                   help="two-step consistency weight (default 0.1)")
    p.add_argument("--seed", type=int, help="seed (default 0)")
    p.add_argument("--split", help="train/val/test counts, e.g. 48/8/8")
    p.add_argument("--verbose", action="store_true", help="print per-epoch progress")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval", help="joint-L2 rollout evaluation vs persistence")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint.snck from `train`")
    p.add_argument("--data", help="dataset file")
    p.add_argument("--out", help="report directory")
    p.add_argument("--t-in", dest="t_in", type=int, help="input window length (default 10)")
    p.add_argument("--t-out", dest="t_out", type=int, help="rollout horizon (default 10)")
    p.add_argument("--seed", type=int, help="split seed (default 0)")
    p.add_argument("--split", help="train/val/test counts, e.g. 48/8/8")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("longhorizon", help="free rollout far past the training horizon")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint.snck")
    p.add_argument("--data", help="dataset file")
    p.add_argument("--out", help="report directory")
    p.add_argument("--horizon", type=int, help="rollout steps (default 100)")
    p.add_argument("--threshold", type=float, help="blow-up energy multiple (default 1e6)")
    p.add_argument("--t-in", dest="t_in", type=int, help="input window length (default 10)")
    p.add_argument("--seed", type=int, help="split seed (default 0)")
    p.add_argument("--split", help="train/val/test counts")
    p.set_defaults(func=cmd_longhorizon)

    p = subs.add_parser("lipschitz", help="perturbation-ratio and residual-size diagnostics")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint.snck")
    p.add_argument("--data", help="dataset file")
    p.add_argument("--out", help="report directory")
    p.add_argument("--probes", type=int, help="perturbations per input (default 100)")
    p.add_argument("--scale", type=float, help="perturbation norm (default 1e-3)")
    p.add_argument("--inputs", type=int, help="number of test inputs (default 100)")
    p.add_argument("--t-in", dest="t_in", type=int, help="input window length (default 10)")
    p.add_argument("--t-out", dest="t_out", type=int, help="rollout horizon (default 10)")
    p.add_argument("--seed", type=int, help="probe seed (default 0)")
    p.add_argument("--split", help="train/val/test counts")
    p.set_defaults(func=cmd_lipschitz)

    p = subs.add_parser("transfer", help="zero-shot resolution transfer")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint.snck")
    p.add_argument("--persistence", action="store_true",
                   help="use the persistence predictor instead of a checkpoint")
    p.add_argument("--data-hi", dest="data_hi", help="fine-grid dataset file")
    p.add_argument("--out", help="report directory")
    p.add_argument("--scheme", choices=["spectral_zeropad", "bilinear"],
                   help="input upsampling scheme (default spectral_zeropad)")
    p.add_argument("--factor", type=int, help="fine/coarse grid ratio (default 2)")
    p.add_argument("--inputs", type=int, help="trajectories to evaluate (default 8)")
    p.add_argument("--t-in", dest="t_in", type=int, help="input window length (default 10)")
    p.add_argument("--t-out", dest="t_out", type=int, help="rollout horizon (default 10)")
    p.set_defaults(func=cmd_transfer)

    p = subs.add_parser("bench", help="latency/throughput harness over batch sizes")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint.snck")
    p.add_argument("--batch-sizes", dest="batch_sizes", help="comma list (default 1,4,32)")
    p.add_argument("--iters", type=int, help="timed iterations (default 50)")
    p.add_argument("--warmup", type=int, help="warmup iterations (default 20)")
    p.add_argument("--t-out", dest="t_out", type=int, help="rollout steps per iteration (default 10)")
    p.add_argument("--out", help="output directory for timing CSVs")
    p.set_defaults(func=cmd_bench)

    p = subs.add_parser("oracles", help="run the analytic self-test suites")
    p.add_argument("--out", help="optional directory for a JSON result summary")
    p.set_defaults(func=cmd_oracles)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
