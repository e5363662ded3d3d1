"""Residual-target training: relative-L2 objectives, the two-step consistency
penalty, decoupled-weight-decay Adam, one-cycle schedule, and the epoch loop.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import count_parameters, save_checkpoint


class TrainingDiverged(RuntimeError):
    pass


def relative_l2(pred, target):
    """Per-sample ||pred - target|| / ||target||, averaged over the batch.

    ``pred`` may be a graph tensor; the result is a scalar graph tensor.
    Zero-norm targets are rejected as degenerate samples.
    """
    pred_t = ad.as_tensor(pred)
    target = np.asarray(target, dtype=pred_t.dtype)
    if pred_t.shape != target.shape:
        raise ValueError(f"relative_l2: shapes {pred_t.shape} vs {target.shape}")
    axes = tuple(range(1, target.ndim))
    tnorm = np.sqrt((target.astype(np.float64) ** 2).sum(axis=axes))
    if np.any(tnorm == 0.0):
        bad = np.nonzero(tnorm == 0.0)[0].tolist()
        raise ValueError(f"relative_l2: zero-norm target (degenerate samples {bad})")
    diff = ad.sub(pred_t, Tensor(target))
    sq = ad.sum_axes(ad.mul(diff, diff), axes)
    ratio = ad.mul(ad.sqrt(sq), Tensor((1.0 / tnorm).astype(pred_t.dtype)))
    return ad.scale(ad.sum_all(ratio), 1.0 / target.shape[0])


def relative_l2_value(pred, target):
    """Plain-number version of :func:`relative_l2` for evaluation paths."""
    with ad.no_grad():
        return float(relative_l2(np.asarray(pred), target).data)


def training_loss(model, window, y1, y2=None, lam=0.1, two_step_idx=None):
    """One-step loss plus the lambda-weighted two-step consistency term.

    Residual-target models compare the raw output against the frame
    increment; the two-step term advances the window with the integrated
    prediction, applies the model again, and compares the integrated
    two-step prediction against the two-step ground truth. The term is
    dropped when ``y2`` is absent or ``lam`` is zero. ``two_step_idx``
    selects the batch rows for which ``y2`` exists (default: all).
    Returns (scalar graph tensor, info dict).
    """
    window = np.asarray(window, dtype=model.dtype)
    y1 = np.asarray(y1, dtype=model.dtype)
    raw = model.forward(window)
    last = window[..., -1:]
    residual = model.cfg.residual_target
    target1 = y1 - last if residual else y1
    one_step = relative_l2(raw, target1)
    info = {"one_step": float(one_step.data), "two_step": None, "y_hat2": None}
    if lam == 0.0 or y2 is None or (two_step_idx is not None and len(two_step_idx) == 0):
        return one_step, info

    y2 = np.asarray(y2, dtype=model.dtype)
    y_hat = ad.add(raw, Tensor(last)) if residual else raw
    if two_step_idx is None:
        y_sub = y_hat
        tail = window[..., 1:]
    else:
        idx = np.asarray(two_step_idx, dtype=np.intp)
        y_sub = ad.index_select0(y_hat, idx)
        tail = window[idx][..., 1:]
    win2 = ad.concat(Tensor(tail), y_sub, axis=-1)
    raw2 = model.forward(win2, validate=False)
    y_hat2 = ad.add(raw2, y_sub) if residual else raw2
    two_step = relative_l2(y_hat2, y2)
    loss = ad.add(one_step, ad.scale(two_step, lam))
    info["two_step"] = float(two_step.data)
    info["y_hat2"] = y_hat2.data
    return loss, info


# ---------------------------------------------------------------------------
# optimizer and schedule


class AdamW:
    """Adam with decoupled weight decay (decay applied before the moment update)."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.tensor.data) for p in self.params]
        self._v = [np.zeros_like(p.tensor.data) for p in self.params]

    def zero_grad(self):
        ad.zero_grads(self.params)

    def step(self, lr=None):
        """Apply one update; skipped entirely (and reported) on non-finite grads."""
        lr = self.lr if lr is None else lr
        grads = []
        for p in self.params:
            g = p.tensor.grad
            if g is None:
                g = np.zeros_like(p.tensor.data)
            if not np.isfinite(g).all():
                return [p.name]
            grads.append(g)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self._m, self._v):
            data = p.tensor.data
            if self.weight_decay:
                data *= data.dtype.type(1.0 - lr * self.weight_decay)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            data -= data.dtype.type(lr) * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return []


def onecycle_lr(step, total_steps, peak):
    """Cosine warmup peak/25 -> peak over the first 30% of steps, then cosine
    anneal to peak/1e4 by the final step."""
    if not 0 <= step < total_steps:
        raise ValueError(f"onecycle_lr: step {step} outside [0, {total_steps})")
    if total_steps == 1:
        return peak
    warm = min(max(int(round(0.3 * total_steps)), 1), total_steps - 2)
    start, end = peak / 25.0, peak / 1e4
    if step <= warm:
        t = step / warm
        return start + (peak - start) * 0.5 * (1.0 - math.cos(math.pi * t))
    u = (step - warm) / (total_steps - 1 - warm)
    return end + (peak - end) * 0.5 * (1.0 + math.cos(math.pi * u))


# ---------------------------------------------------------------------------
# epoch loop


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    peak_lr: float = 1e-3
    weight_decay: float = 1e-5
    betas: tuple = (0.9, 0.999)
    lambda_sg: float = 0.1
    seed: int = 0
    t_in: int = 10
    t_out: int = 10
    split: tuple = (850, 150, 200)

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["split"] = list(self.split)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["betas"] = tuple(d.get("betas", (0.9, 0.999)))
        d["split"] = tuple(d["split"])
        return cls(**d)


@dataclass
class TrainingReport:
    metrics: list = field(default_factory=list)  # (epoch, train_loss, val_l2, lr)
    best_epoch: int = -1
    best_val_l2: float = math.inf
    test_l2_mean: float = math.nan
    test_l2_per_traj: list = field(default_factory=list)
    train_traj: list = field(default_factory=list)
    val_traj: list = field(default_factory=list)
    test_traj: list = field(default_factory=list)
    wall_seconds: float = 0.0


def split_trajectories(n_traj, split, seed):
    """Deterministic shuffle-split into train/val/test index lists."""
    n_tr, n_val, n_te = split
    if n_tr + n_val + n_te > n_traj:
        raise ValueError(f"split {split} exceeds {n_traj} trajectories")
    perm = np.random.default_rng(seed).permutation(n_traj)
    return (
        perm[:n_tr].tolist(),
        perm[n_tr:n_tr + n_val].tolist(),
        perm[n_tr + n_val:n_tr + n_val + n_te].tolist(),
    )


def rollout_eval_l2(model, data, traj_idx, t_in, t_out):
    """Joint trajectory relative L2 of a free rollout over held-out trajectories."""
    from .evaluate import joint_trajectory_l2

    if len(traj_idx) == 0:
        return math.nan, []
    frames = data[traj_idx]
    window = np.ascontiguousarray(frames[:, :t_in].transpose(0, 2, 3, 1), dtype=model.dtype)
    truth = np.ascontiguousarray(frames[:, t_in:t_in + t_out].transpose(0, 2, 3, 1))
    pred = model.rollout(window, t_out)
    per_traj = joint_trajectory_l2(pred, truth)
    return float(np.mean(per_traj)), per_traj.tolist()


def _format_float(v):
    return repr(float(v))


def train_epochs(model, dataset, cfg: TrainConfig, run_dir=None, log=None):
    """Teacher-forced window training with per-epoch validation rollouts.

    Tracks the best-validation model, restores it at the end, and (when
    ``run_dir`` is given) writes config.json, metrics.csv, checkpoint.snck
    and test_results.csv into the directory.
    """
    t_start = time.perf_counter()
    data = dataset.data
    n_traj, t_frames, h, w = data.shape
    t_in, t_out = cfg.t_in, cfg.t_out
    if t_frames < t_in + 1:
        raise ValueError(f"need at least t_in+1={t_in + 1} frames, dataset has {t_frames}")
    train_idx, val_idx, test_idx = split_trajectories(n_traj, cfg.split, cfg.seed)

    windows = [(ti, t) for ti in train_idx for t in range(t_in - 1, t_frames - 1)]
    rng = np.random.default_rng(cfg.seed + 1)
    steps_per_epoch = math.ceil(len(windows) / cfg.batch_size) if windows else 0
    total_steps = max(cfg.epochs * steps_per_epoch, 1)

    opt = AdamW(
        model.parameters(),
        lr=cfg.peak_lr,
        betas=cfg.betas,
        weight_decay=cfg.weight_decay,
    )
    report = TrainingReport(train_traj=train_idx, val_traj=val_idx, test_traj=test_idx)
    best_params = {p.name: p.tensor.data.copy() for p in model.parameters()}
    global_step = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(windows))
        loss_sum = 0.0
        sample_count = 0
        lr = cfg.peak_lr
        for s in range(steps_per_epoch):
            batch = [windows[i] for i in order[s * cfg.batch_size:(s + 1) * cfg.batch_size]]
            win = np.stack(
                [data[ti, t - t_in + 1:t + 1] for ti, t in batch]
            ).transpose(0, 2, 3, 1)
            win = np.ascontiguousarray(win, dtype=model.dtype)
            y1 = np.stack([data[ti, t + 1] for ti, t in batch])[..., None]
            idx2 = [i for i, (ti, t) in enumerate(batch) if t + 2 <= t_frames - 1]
            y2 = None
            if idx2 and cfg.lambda_sg != 0.0:
                y2 = np.stack([data[batch[i][0], batch[i][1] + 2] for i in idx2])[..., None]
            loss, _ = training_loss(
                model, win, y1, y2, lam=cfg.lambda_sg, two_step_idx=idx2 if y2 is not None else None
            )
            loss_val = float(loss.data)
            if not math.isfinite(loss_val):
                raise TrainingDiverged(
                    f"non-finite loss {loss_val} at epoch {epoch} step {s}"
                )
            lr = onecycle_lr(global_step, total_steps, cfg.peak_lr)
            ad.backward(loss)
            skipped = opt.step(lr=lr)
            opt.zero_grad()
            if skipped and log:
                log(f"epoch {epoch} step {s}: skipped update, non-finite grad in {skipped[0]}")
            loss_sum += loss_val * len(batch)
            sample_count += len(batch)
            global_step += 1

        train_loss = loss_sum / sample_count if sample_count else math.nan
        val_l2, _ = rollout_eval_l2(model, data, val_idx, t_in, t_out)
        report.metrics.append((epoch, train_loss, val_l2, lr))
        if log:
            log(f"epoch {epoch}: train_loss={train_loss:.6f} val_l2={val_l2:.6f} lr={lr:.3e}")
        if math.isfinite(val_l2) and val_l2 < report.best_val_l2:
            report.best_val_l2 = val_l2
            report.best_epoch = epoch
            best_params = {p.name: p.tensor.data.copy() for p in model.parameters()}

    model.load_param_arrays(best_params)
    test_mean, per_traj = rollout_eval_l2(model, data, test_idx, t_in, t_out)
    report.test_l2_mean = test_mean
    report.test_l2_per_traj = per_traj
    report.wall_seconds = time.perf_counter() - t_start

    if run_dir is not None:
        write_run_dir(Path(run_dir), model, cfg, report, dataset_meta=getattr(dataset, "meta", None))
    return report


def write_run_dir(run_dir, model, cfg, report, dataset_meta=None):
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    real, centries = count_parameters(model)
    with open(run_dir / "config.json", "w") as f:
        json.dump(
            {
                "train": cfg.to_dict(),
                "model": model.cfg.to_dict(),
                "dataset_meta": dataset_meta,
                "param_count_real": real,
                "param_count_complex_entries": centries,
            },
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")
    with open(run_dir / "metrics.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["epoch", "train_loss", "val_l2", "lr"])
        for epoch, train_loss, val_l2, lr in report.metrics:
            wr.writerow([epoch, _format_float(train_loss), _format_float(val_l2), _format_float(lr)])
    with open(run_dir / "test_results.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["trajectory", "joint_l2"])
        for ti, l2 in zip(report.test_traj, report.test_l2_per_traj):
            wr.writerow([ti, _format_float(l2)])
    save_checkpoint(
        run_dir / "checkpoint.snck",
        model,
        {
            "seed": cfg.seed,
            "epochs": cfg.epochs,
            "best_epoch": report.best_epoch,
            "best_val_l2": report.best_val_l2,
            "test_l2_mean": report.test_l2_mean,
        },
    )
