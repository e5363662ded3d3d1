"""Rollout metrics, blow-up accounting, perturbation diagnostics, drift-bound
oracles, and resolution transfer.

Models are duck-typed: anything with ``step(window) -> [B,H,W,1]`` (and
``rollout`` for convenience) works, which keeps the synthetic oracle maps and
the persistence predictor on the same footing as trained operators.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import upsample_bilinear2_array
from .spectral import spectral_zeropad_resample


def _flat_norms(x):
    x = np.asarray(x, dtype=np.float64)
    return np.linalg.norm(x.reshape(x.shape[0], -1), axis=1)


def joint_trajectory_l2(pred, truth):
    """Per-trajectory ||pred - truth|| / ||truth|| over the stacked (H,W,T) block."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"joint_trajectory_l2: shapes {pred.shape} vs {truth.shape}")
    den = _flat_norms(truth)
    if np.any(den == 0.0):
        raise ValueError("joint_trajectory_l2: zero-norm truth trajectory")
    return _flat_norms(pred - truth) / den


def dataset_eval_arrays(data, traj_idx, t_in, t_out):
    """(windows [n,H,W,t_in], truth [n,H,W,t_out]) for the given trajectories."""
    frames = np.asarray(data)[traj_idx]
    window = np.ascontiguousarray(frames[:, :t_in].transpose(0, 2, 3, 1))
    truth = np.ascontiguousarray(frames[:, t_in:t_in + t_out].transpose(0, 2, 3, 1))
    return window, truth


def persistence_baseline(data, traj_idx, t_in, t_out):
    """Joint L2 of the trivial predictor (repeat the last input frame)."""
    window, truth = dataset_eval_arrays(data, traj_idx, t_in, t_out)
    pred = np.repeat(window[..., -1:], t_out, axis=-1)
    per_traj = joint_trajectory_l2(pred, truth)
    return float(per_traj.mean()), per_traj


# ---------------------------------------------------------------------------
# long-horizon rollout and blow-up accounting


@dataclass
class RolloutReport:
    horizon: int
    blowup_threshold: float
    mean_energy: list = field(default_factory=list)      # per step, diverged held at last finite
    blowup_fraction: list = field(default_factory=list)  # per step, non-decreasing
    diverged_at: list = field(default_factory=list)      # first bad step per trajectory, -1 if none
    per_traj_l2: list = field(default_factory=list)
    mean_l2: float = math.nan
    std_l2: float = math.nan
    persistence_l2: float = math.nan

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write_energy_csv(self, path):
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["step", "mean_energy", "blowup_fraction"])
            for s, (e, bf) in enumerate(zip(self.mean_energy, self.blowup_fraction), start=1):
                wr.writerow([s, repr(e), repr(bf)])


def long_horizon_rollout(model, windows, horizon, blowup_threshold=1e6):
    """Free rollout with per-step mean vorticity energy and blow-up fractions.

    A trajectory diverges at the first step with a non-finite value or with
    energy above threshold x its initial energy; its window is frozen from
    then on so the recorded energy series stays finite (log-safe).
    """
    cur = np.array(windows, dtype=np.float64)
    n = cur.shape[0]
    energy0 = (cur[..., -1] ** 2).reshape(n, -1).mean(axis=1)
    diverged_at = np.full(n, -1, dtype=int)
    last_energy = energy0.copy()
    report = RolloutReport(horizon=horizon, blowup_threshold=blowup_threshold)
    for step in range(1, horizon + 1):
        active = diverged_at < 0
        if active.any():
            y = model.step(cur[active], validate=False)
            nxt = np.concatenate([cur[active][..., 1:], y], axis=-1)
            cur[active] = nxt
            e = (y[..., 0] ** 2).reshape(y.shape[0], -1).mean(axis=1)
            finite = np.isfinite(e) & np.isfinite(y).all(axis=(1, 2, 3))
            bad = ~finite | (e > blowup_threshold * energy0[active])
            ids = np.nonzero(active)[0]
            last_energy[ids[finite]] = e[finite]
            diverged_at[ids[bad]] = step
        report.mean_energy.append(float(last_energy.mean()))
        report.blowup_fraction.append(float((diverged_at >= 0).mean()))
    report.diverged_at = diverged_at.tolist()
    return report


# ---------------------------------------------------------------------------
# empirical Lipschitz and residual-size diagnostics


@dataclass
class LipschitzReport:
    n_inputs: int
    n_probes: int
    scale: float
    t_out: int
    l1_mean: float = math.nan
    l1_p95: float = math.nan
    lt_mean: float = math.nan
    lt_p95: float = math.nan
    per_input_sup_t1: list = field(default_factory=list)
    per_input_sup_tout: list = field(default_factory=list)
    delta_mean: float = math.nan
    delta_sup: float = math.nan

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def nearest_rank(values, q):
    """Nearest-rank quantile of a sequence (q in (0, 1])."""
    s = sorted(values)
    if not s:
        return math.nan
    rank = max(1, math.ceil(q * len(s)))
    return s[rank - 1]


def empirical_lipschitz(model, inputs, n_probes=100, scale=1e-3, t_out=10, seed=0):
    """sup-ratio estimate under Gaussian perturbations of the current state.

    Perturbations of norm ``scale`` are applied to the last window frame;
    ratios use the realized perturbation (u+eps)-u so exact linear maps
    measure exactly. Reports mean and nearest-rank p95 of per-input suprema
    at one step and after the full ``t_out`` rollout composition.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    inputs = np.asarray(inputs, dtype=np.float64)
    rng = np.random.default_rng(seed)
    sup1, supt = [], []
    for u in inputs:
        base = u[None]
        base1 = model.step(base, validate=False)
        baset = model.rollout(base, t_out, validate=False)[..., -1] if t_out > 1 else base1[..., 0]
        probes = rng.standard_normal((n_probes,) + u[..., -1].shape)
        probes *= scale / np.linalg.norm(probes.reshape(n_probes, -1), axis=1)[:, None, None]
        pw = np.repeat(base, n_probes, axis=0)
        pw[..., -1] += probes
        eps_eff = np.linalg.norm((pw[..., -1] - u[None, ..., -1]).reshape(n_probes, -1), axis=1)
        p1 = model.step(pw, validate=False)
        d1 = np.linalg.norm((p1 - base1).reshape(n_probes, -1), axis=1)
        sup1.append(float((d1 / eps_eff).max()))
        if t_out > 1:
            pt = model.rollout(pw, t_out, validate=False)[..., -1]
            dt_ = np.linalg.norm((pt - baset).reshape(n_probes, -1), axis=1)
            supt.append(float((dt_ / eps_eff).max()))
        else:
            supt.append(sup1[-1])
    return LipschitzReport(
        n_inputs=len(inputs),
        n_probes=n_probes,
        scale=scale,
        t_out=t_out,
        l1_mean=float(np.mean(sup1)),
        l1_p95=float(nearest_rank(sup1, 0.95)),
        lt_mean=float(np.mean(supt)),
        lt_p95=float(nearest_rank(supt, 0.95)),
        per_input_sup_t1=sup1,
        per_input_sup_tout=supt,
    )


@dataclass
class DeltaStats:
    mean: float
    sup: float
    per_step_mean: list = field(default_factory=list)


def residual_delta(model, windows, t_out=10):
    """Mean and sup of ||predicted increment|| / ||current state|| along free rollouts."""
    cur = np.array(windows, dtype=np.float64)
    ratios = []
    per_step = []
    for _ in range(t_out):
        y = model.step(cur, validate=False)
        delta = y - cur[..., -1:]
        num = _flat_norms(delta[..., 0])
        den = _flat_norms(cur[..., -1])
        r = num / den
        ratios.append(r)
        per_step.append(float(r.mean()))
        cur = np.concatenate([cur[..., 1:], y], axis=-1)
    allr = np.concatenate(ratios)
    return DeltaStats(mean=float(allr.mean()), sup=float(allr.max()), per_step_mean=per_step)


# ---------------------------------------------------------------------------
# drift-bound oracles


def lemma_drift_oracles(seed=0, n_trials=1000, horizon=1000, delta=0.01, dim=16):
    """Executable forms of the two rollout-drift bounds.

    (a) With truth u -> L u and predictor u -> L u + eps0 e, the T-step error
        equals eps0 (L^T - 1)/(L - 1) exactly (geometric series).
    (b) With u -> u + clip(Delta(u)) where ||Delta|| <= delta, the drift from
        the start obeys ||f^T(u0) - u0|| <= T delta for every T.
    """
    rng = np.random.default_rng(seed)
    results = {"linear_max_rel_err": 0.0, "linear_cases": [], "clipped_violations": 0}

    for lip in (0.5, 1.5):
        eps0 = 1e-3
        e = rng.standard_normal(dim)
        e /= np.linalg.norm(e)
        u = rng.standard_normal(dim)
        f = u.copy()
        phi = u.copy()
        for t in range(1, 41):
            f = lip * f + eps0 * e
            phi = lip * phi
            measured = np.linalg.norm(f - phi)
            exact = eps0 * (lip ** t - 1.0) / (lip - 1.0)
            rel = abs(measured - exact) / exact
            results["linear_max_rel_err"] = max(results["linear_max_rel_err"], rel)
            if lip == 1.5 and t == 10:
                results["linear_cases"].append({"L": lip, "T": t, "error": measured, "exact": exact})

    # clipped-residual rollouts, vectorized across trials
    a = rng.standard_normal((dim, dim)) / np.sqrt(dim)
    b = rng.standard_normal(dim)
    u = rng.standard_normal((n_trials, dim))
    u0 = u.copy()
    max_drift_excess = -math.inf
    for t in range(1, horizon + 1):
        step = np.tanh(u @ a.T + b)
        norms = np.linalg.norm(step, axis=1, keepdims=True)
        factor = np.minimum(1.0, delta / np.maximum(norms, 1e-300))
        u = u + step * factor
        drift = np.linalg.norm(u - u0, axis=1)
        bound = t * delta
        excess = float((drift - bound).max())
        max_drift_excess = max(max_drift_excess, excess)
        results["clipped_violations"] += int((drift > bound * (1 + 1e-12)).sum())
    results["clipped_max_excess"] = max_drift_excess
    results["clipped_trials"] = n_trials
    results["clipped_horizon"] = horizon
    results["clipped_delta"] = delta
    return results


def drift_bound_check(model, data, traj_idx, t_in, t_out):
    """Running error-vs-bound diagnostic for a trained residual-target model.

    Per trajectory: rollout error ||pred_T - truth_T|| at each step is compared
    against (mean one-step error over the set) + T * (per-trajectory sup of the
    predicted-increment norm). The bound is conditional, so violations are
    reported rather than raised.
    """
    window, truth = dataset_eval_arrays(data, traj_idx, t_in, t_out)
    n = window.shape[0]
    pred = model.rollout(np.asarray(window, dtype=model.dtype), t_out)
    err = np.stack(
        [_flat_norms(pred[..., k] - truth[..., k]) for k in range(t_out)], axis=1
    )  # [n, T]
    with np.errstate(over="ignore"):
        cur = np.array(window, dtype=np.float64)
        sup_delta = np.zeros(n)
        for k in range(t_out):
            y = model.step(cur, validate=False)
            d = _flat_norms((y - cur[..., -1:])[..., 0])
            sup_delta = np.maximum(sup_delta, d)
            cur = np.concatenate([cur[..., 1:], y], axis=-1)
    floor = float(err[:, 0].mean())
    steps = np.arange(1, t_out + 1)
    bound = floor + steps[None, :] * sup_delta[:, None]
    ok = (err <= bound).all(axis=1)
    return {
        "one_step_floor": floor,
        "sup_delta_mean": float(sup_delta.mean()),
        "fraction_within_bound": float(ok.mean()),
        "violating_trajectories": np.nonzero(~ok)[0].tolist(),
    }


# ---------------------------------------------------------------------------
# resolution transfer


@dataclass
class TransferReport:
    scheme: str
    native_l2: float
    transfer_l2: float
    ratio: float

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _upsample_windows(windows, target, scheme):
    moved = np.moveaxis(np.asarray(windows, dtype=np.float64), -1, 1)  # [n, T, H, W]
    if scheme == "spectral_zeropad":
        up = spectral_zeropad_resample(moved, target)
    elif scheme == "bilinear":
        h, w = moved.shape[-2:]
        if target != (2 * h, 2 * w):
            raise ValueError("bilinear scheme supports exact 2x upsampling only")
        up = upsample_bilinear2_array(moved)
    else:
        raise ValueError(f"unknown upsampling scheme {scheme!r}")
    return np.moveaxis(up, 1, -1)


def resolution_transfer(model, data_hi, t_in, t_out, scheme="spectral_zeropad", factor=2):
    """Zero-shot transfer: run a coarse-trained model on upsampled fine inputs.

    The fine dataset is stride-subsampled to build the coarse inputs and the
    native reference; inputs are upsampled with the chosen scheme, the model
    re-derives its level shapes at the fine grid, and the joint L2 against
    the fine truth is compared with the native coarse L2.
    """
    data_hi = np.asarray(data_hi)
    hi = data_hi.shape[-1]
    if hi % factor:
        raise ValueError(f"fine grid {hi} not divisible by factor {factor}")
    data_lo = data_hi[..., ::factor, ::factor]
    idx = list(range(data_hi.shape[0]))
    win_lo, truth_lo = dataset_eval_arrays(data_lo, idx, t_in, t_out)
    win_hi_true, truth_hi = dataset_eval_arrays(data_hi, idx, t_in, t_out)

    pred_lo = model.rollout(win_lo, t_out, validate=False)
    native = float(joint_trajectory_l2(pred_lo, truth_lo).mean())

    win_up = _upsample_windows(win_lo, (hi, hi), scheme)
    pred_hi = model.rollout(win_up, t_out, validate=False)
    transfer = float(joint_trajectory_l2(pred_hi, truth_hi).mean())
    return TransferReport(scheme=scheme, native_l2=native, transfer_l2=transfer,
                          ratio=transfer / native if native else math.inf)


def write_per_traj_csv(path, per_traj, header=("trajectory", "joint_l2")):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(list(header))
        for i, v in enumerate(np.asarray(per_traj).tolist()):
            wr.writerow([i, repr(float(v))])
