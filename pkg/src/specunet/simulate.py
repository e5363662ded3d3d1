"""Vorticity-form pseudo-spectral 2-D Navier-Stokes on the 2*pi-periodic torus.

Time stepping is Crank-Nicolson on the viscous term and explicit Euler on the
advection term, with 2/3-rule dealiasing applied to the nonlinear product.
State lives in the rfft2 half-spectrum; grids are powers of two.
"""
from __future__ import annotations

import functools
import json
import struct
from dataclasses import dataclass, asdict

import numpy as np
import scipy.fft as _fft

DATASET_MAGIC = b"SNDS1"
DATASET_VERSION = 1
SOLVER_VERSION = "1"


@dataclass
class SolverConfig:
    grid_n: int = 32
    nu: float = 1e-3
    dt: float = 1e-3
    frame_interval: int = 250
    t_frames: int = 20
    forcing_amplitude: float = 0.1
    ic_alpha: float = 5.0      # spectral envelope exponent: amplitude ~ (|k|^2 + tau^2)^(-alpha/2)
    ic_tau: float = 7.0
    ic_std: float = 1.0        # fields are rescaled to this standard deviation
    burn_in_steps: int = 0
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrajectoryDataset:
    data: np.ndarray  # [n_traj, T, H, W] float32
    meta: dict

    @property
    def n_traj(self):
        return self.data.shape[0]


@functools.lru_cache(maxsize=16)
def _spectral_grid(n):
    k1 = np.fft.fftfreq(n, d=1.0 / n)[:, None]          # rows, full axis
    k2 = np.arange(n // 2 + 1, dtype=np.float64)[None, :]  # cols, half axis
    ksq = k1 ** 2 + k2 ** 2
    inv_ksq = np.zeros_like(ksq)
    nonzero = ksq > 0
    inv_ksq[nonzero] = 1.0 / ksq[nonzero]
    cutoff = n / 3.0
    dealias = (np.abs(k1) <= cutoff) & (k2 <= cutoff)
    for a in (k1, k2, ksq, inv_ksq, dealias):
        a.setflags(write=False)
    return k1, k2, ksq, inv_ksq, dealias


def velocity_from_vorticity(w_hat):
    """Streamfunction inversion: psi_hat = w_hat/|k|^2 (zero mean mode),
    u_hat = i k2 psi_hat, v_hat = -i k1 psi_hat."""
    n = w_hat.shape[-2]
    k1, k2, _, inv_ksq, _ = _spectral_grid(n)
    psi_hat = w_hat * inv_ksq
    return 1j * k2 * psi_hat, -1j * k1 * psi_hat


def rhs_nonlinear(w_hat):
    """-F[u . grad(omega)], pseudo-spectral with 2/3 dealiasing on the product."""
    n = w_hat.shape[-2]
    k1, k2, _, _, dealias = _spectral_grid(n)
    u_hat, v_hat = velocity_from_vorticity(w_hat)
    u = _fft.irfft2(u_hat, s=(n, n))
    v = _fft.irfft2(v_hat, s=(n, n))
    wx = _fft.irfft2(1j * k1 * w_hat, s=(n, n))
    wy = _fft.irfft2(1j * k2 * w_hat, s=(n, n))
    adv_hat = _fft.rfft2(u * wx + v * wy)
    return dealias * -adv_hat


def step_cn_euler(w_hat, dt, nu, forcing_hat=None):
    """One step: Crank-Nicolson on the viscous term, explicit Euler on advection."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = w_hat.shape[-2]
    _, _, ksq, _, _ = _spectral_grid(n)
    half = 0.5 * dt * nu * ksq
    rhs = rhs_nonlinear(w_hat)
    if forcing_hat is not None:
        rhs = rhs + forcing_hat
    return ((1.0 - half) * w_hat + dt * rhs) / (1.0 + half)


def forcing_field(n, amplitude):
    """Steady forcing amp*(sin(x+y) + cos(x+y)) with unit-normalized coordinates."""
    x = 2.0 * np.pi * np.arange(n) / n
    phase = x[:, None] + x[None, :]
    return amplitude * (np.sin(phase) + np.cos(phase))


def gaussian_random_field(rng, n, alpha, tau, std):
    """Zero-mean field with power-law spectral envelope, rescaled to ``std``."""
    _, _, ksq, _, dealias = _spectral_grid(n)
    envelope = (ksq + tau ** 2) ** (-alpha / 2.0)
    noise_hat = _fft.rfft2(rng.standard_normal((n, n)))
    w_hat = noise_hat * envelope * dealias
    w_hat[0, 0] = 0.0
    w = _fft.irfft2(w_hat, s=(n, n))
    scale = std / max(w.std(), np.finfo(np.float64).tiny)
    return w * scale


def enstrophy(field):
    """Area-averaged enstrophy 0.5 <omega^2> over the last two axes."""
    field = np.asarray(field, dtype=np.float64)
    return 0.5 * float((field ** 2).mean())


def _simulate_one(cfg, traj_rng):
    n = cfg.grid_n
    f_hat = _fft.rfft2(forcing_field(n, cfg.forcing_amplitude)) if cfg.forcing_amplitude else None
    w0 = gaussian_random_field(traj_rng, n, cfg.ic_alpha, cfg.ic_tau, cfg.ic_std)
    _, _, _, _, dealias = _spectral_grid(n)
    w_hat = _fft.rfft2(w0) * dealias
    for _ in range(cfg.burn_in_steps):
        w_hat = step_cn_euler(w_hat, cfg.dt, cfg.nu, f_hat)
    frames = np.empty((cfg.t_frames, n, n), dtype=np.float32)
    frames[0] = _fft.irfft2(w_hat, s=(n, n))
    for fi in range(1, cfg.t_frames):
        for _ in range(cfg.frame_interval):
            w_hat = step_cn_euler(w_hat, cfg.dt, cfg.nu, f_hat)
        frame = _fft.irfft2(w_hat, s=(n, n))
        if not np.isfinite(frame).all():
            return None
        frames[fi] = frame
    return frames


def generate_dataset(cfg: SolverConfig, n_traj, log=None, max_attempts=8):
    """Integrate ``n_traj`` independent trajectories.

    Trajectory i at attempt a draws from the (seed, i, a) stream, so output
    is order-independent and bitwise reproducible; a trajectory that blows
    up is flagged, logged, and regenerated from its next stream.
    """
    if cfg.grid_n <= 0 or cfg.grid_n & (cfg.grid_n - 1):
        raise ValueError(f"grid_n must be a power of two, got {cfg.grid_n}")
    data = np.zeros((n_traj, cfg.t_frames, cfg.grid_n, cfg.grid_n), dtype=np.float32)
    regenerated = []
    for i in range(n_traj):
        frames = None
        for attempt in range(max_attempts):
            rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, i, attempt)))
            frames = _simulate_one(cfg, rng)
            if frames is not None:
                if attempt:
                    regenerated.append({"trajectory": i, "attempts": attempt + 1})
                    if log:
                        log(f"trajectory {i}: regenerated after {attempt} blow-up(s)")
                break
        if frames is None:
            raise RuntimeError(f"trajectory {i} blew up in all {max_attempts} attempts")
        data[i] = frames
    meta = {
        "solver_version": SOLVER_VERSION,
        "config": cfg.to_dict(),
        "nu": cfg.nu,
        "dt": cfg.dt,
        "seed": cfg.seed,
        "n_traj": n_traj,
        "regenerated": regenerated,
    }
    return TrajectoryDataset(data=data, meta=meta)


# ---------------------------------------------------------------------------
# dataset container: "SNDS1", u32 LE (version, n_traj, T, H, W), f32 LE data,
# JSON sidecar at <path>.json


def save_dataset(path, dataset):
    n_traj, t, h, w = dataset.data.shape
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<5I", DATASET_VERSION, n_traj, t, h, w))
        f.write(np.ascontiguousarray(dataset.data, dtype="<f4").tobytes())
    with open(str(path) + ".json", "w") as f:
        json.dump(dataset.meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_dataset(path):
    with open(path, "rb") as f:
        magic = f.read(5)
        if magic != DATASET_MAGIC:
            raise ValueError(f"{path}: bad dataset magic {magic!r}")
        version, n_traj, t, h, w = struct.unpack("<5I", f.read(20))
        if version != DATASET_VERSION:
            raise ValueError(f"{path}: unsupported dataset version {version}")
        data = np.frombuffer(f.read(4 * n_traj * t * h * w), dtype="<f4")
        data = data.reshape(n_traj, t, h, w).copy()
    try:
        with open(str(path) + ".json") as f:
            meta = json.load(f)
    except FileNotFoundError:
        meta = {}
    return TrajectoryDataset(data=data, meta=meta)
