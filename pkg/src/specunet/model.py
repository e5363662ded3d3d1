"""Autoregressive spectral U-Net operator and the direct-prediction spectral baseline.

Layout is channel-first [B, C, H, W] internally; the public window format is
[B, H, W, T]. Level shapes and mode caps are re-derived from the input grid at
every forward, so a trained model can be evaluated at a finer grid.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .spectral import (
    SpectralWeights,
    init_spectral_weights,
    spectral_conv,
    spectral_weight_parameters,
)

CHECKPOINT_MAGIC = b"SNCK1"
CHECKPOINT_FORMAT = 1


@dataclass
class ModelConfig:
    width: int = 32
    modes: int = 12
    levels: int = 3
    t_in: int = 10
    grid: tuple = (64, 64)
    residual_target: bool = True
    head_hidden_mult: int = 4
    arch: str = "spectral_unet"  # or "fno_baseline"

    def to_dict(self):
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["grid"] = tuple(d["grid"])
        return cls(**d)


def level_channels(width, levels):
    """Per-level channel counts {w, 2w, 4w, ...} capped at 4w; index ``levels`` is the bottleneck."""
    return [min(width * 2 ** l, 4 * width) for l in range(levels + 1)]


def level_modes(modes, levels, h):
    """Per-level truncation: halves each level, capped at the level Nyquist."""
    out = []
    for l in range(levels + 1):
        nominal = modes // 2 ** l
        cap = (h >> l) // 2
        out.append(min(nominal, cap))
    return out


class PointwiseLinear:
    """1x1 channel map with bias; init uniform +-1/sqrt(fan_in)."""

    def __init__(self, rng, c_in, c_out, name, dtype):
        bound = 1.0 / np.sqrt(c_in)
        self.w = Tensor(rng.uniform(-bound, bound, (c_out, c_in)).astype(dtype), requires_grad=True)
        self.b = Tensor(rng.uniform(-bound, bound, c_out).astype(dtype), requires_grad=True)
        self.name = name

    def __call__(self, x):
        return ad.matmul_channels(x, self.w, self.b)

    def params(self):
        return [Parameter(f"{self.name}.w", self.w), Parameter(f"{self.name}.b", self.b)]


class SpectralBlock:
    """Parallel spectral + two-layer pointwise MLP + residual 1x1 paths, summed, GeLU.

    The MLP hidden width equals the input channel count.
    """

    def __init__(self, rng, channels, modes, name, dtype):
        self.spec = init_spectral_weights(rng, channels, channels, modes, dtype)
        self.mlp0 = PointwiseLinear(rng, channels, channels, f"{name}.mlp.0", dtype)
        self.mlp1 = PointwiseLinear(rng, channels, channels, f"{name}.mlp.1", dtype)
        self.conv = PointwiseLinear(rng, channels, channels, f"{name}.conv", dtype)
        self.name = name

    def __call__(self, x):
        s = spectral_conv(x, self.spec)
        m = self.mlp1(ad.gelu(self.mlp0(x)))
        return ad.gelu(ad.add(ad.add(s, m), self.conv(x)))

    def params(self):
        out = spectral_weight_parameters(f"{self.name}.spec", self.spec)
        out += self.mlp0.params() + self.mlp1.params() + self.conv.params()
        return out


def _coordinate_channels(h, w, dtype):
    gx = (np.arange(h, dtype=dtype) / h)[:, None] * np.ones((1, w), dtype=dtype)
    gy = np.ones((h, 1), dtype=dtype) * (np.arange(w, dtype=dtype) / w)[None, :]
    return np.stack([gx, gy])


class _OperatorBase:
    dtype: np.dtype

    def parameters(self):
        raise NotImplementedError

    def param_dict(self):
        d = {}
        for p in self.parameters():
            if p.name in d:
                raise ValueError(f"duplicate parameter name {p.name}")
            d[p.name] = p
        return d

    def load_param_arrays(self, arrays):
        params = self.param_dict()
        missing = set(params) - set(arrays)
        extra = set(arrays) - set(params)
        if missing or extra:
            raise ValueError(f"parameter mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in params.items():
            arr = np.asarray(arrays[name], dtype=self.dtype)
            if arr.shape != p.tensor.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} != expected {p.tensor.data.shape}")
            p.tensor.data = arr

    def _window_tensor(self, window, validate):
        arr = window.data if isinstance(window, Tensor) else np.asarray(window, dtype=self.dtype)
        if arr.ndim != 4:
            raise ValueError(f"expected window [B,H,W,T], got shape {arr.shape}")
        if arr.shape[-1] != self.cfg.t_in:
            raise ValueError(f"window length {arr.shape[-1]} != t_in {self.cfg.t_in}")
        if validate and not np.isfinite(arr).all():
            raise ValueError("non-finite values in input window")
        if isinstance(window, Tensor):
            return window
        return Tensor(arr)

    def _lift_input(self, window):
        b, h, w, _ = window.shape
        x = ad.transpose(window, (0, 3, 1, 2))
        grid = np.broadcast_to(_coordinate_channels(h, w, self.dtype), (b, 2, h, w))
        return ad.concat(x, Tensor(grid), axis=1)

    def step(self, window, validate=True):
        """One integrated prediction [B,H,W,1] from a window array."""
        window = np.asarray(window, dtype=self.dtype)
        with ad.no_grad():
            raw = self.forward(window, validate=validate).data
        if self.cfg.residual_target:
            return window[..., -1:] + raw
        return raw

    def rollout(self, window, t_out, validate=True):
        """Free rollout: sliding window of integrated predictions, no teacher forcing."""
        if t_out < 1:
            raise ValueError("t_out must be >= 1")
        cur = np.asarray(window, dtype=self.dtype)
        frames = []
        for k in range(t_out):
            y = self.step(cur, validate=validate and k == 0)
            frames.append(y[..., 0])
            cur = np.concatenate([cur[..., 1:], y], axis=-1)
        return np.stack(frames, axis=-1)


class SpectralUNet(_OperatorBase):
    """Encoder--bottleneck--decoder operator with truncated spectral mixing.

    Channels follow {w, 2w, 4w, 4w}; spectral truncation halves per level with
    a Nyquist cap; skips merge additively; the head is a two-layer pointwise
    MLP with hidden width ``head_hidden_mult * w``.
    """

    def __init__(self, cfg: ModelConfig, seed=0, dtype=np.float32):
        if cfg.arch != "spectral_unet":
            raise ValueError(f"SpectralUNet got arch={cfg.arch!r}")
        if cfg.modes < 2 ** cfg.levels:
            raise ValueError(f"modes {cfg.modes} vanish at level {cfg.levels}")
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        w = cfg.width
        chans = level_channels(w, cfg.levels)
        mds = level_modes(cfg.modes, cfg.levels, cfg.grid[0])

        self.lift = PointwiseLinear(rng, cfg.t_in + 2, w, "lift", dtype)
        self.enc = [
            SpectralBlock(rng, chans[l], mds[l], f"enc.{l}", dtype) for l in range(cfg.levels)
        ]
        self.down = [
            PointwiseLinear(rng, chans[l], chans[l + 1], f"down.{l}", dtype)
            for l in range(cfg.levels)
        ]
        self.bottleneck = SpectralBlock(rng, chans[-1], mds[-1], "bottleneck", dtype)
        self.up = [
            PointwiseLinear(rng, chans[l + 1], chans[l], f"up.{l}", dtype)
            for l in range(cfg.levels)
        ]
        self.dec = [
            SpectralBlock(rng, chans[l], mds[l], f"dec.{l}", dtype) for l in range(cfg.levels)
        ]
        hidden = cfg.head_hidden_mult * w
        self.head0 = PointwiseLinear(rng, w, hidden, "head.0", dtype)
        self.head1 = PointwiseLinear(rng, hidden, 1, "head.1", dtype)

    def parameters(self):
        out = self.lift.params()
        for blk in self.enc:
            out += blk.params()
        for proj in self.down:
            out += proj.params()
        out += self.bottleneck.params()
        for proj in self.up:
            out += proj.params()
        for blk in self.dec:
            out += blk.params()
        out += self.head0.params() + self.head1.params()
        return out

    def forward(self, window, validate=True):
        """Raw network output [B,H,W,1]: the per-step residual in residual mode."""
        window = self._window_tensor(window, validate)
        _, h, w_, _ = window.shape
        if h < 4 * 2 ** self.cfg.levels or w_ < 4 * 2 ** self.cfg.levels:
            raise ValueError(f"grid {(h, w_)} too small for {self.cfg.levels} levels")
        z = self.lift(self._lift_input(window))
        skips = []
        for l in range(self.cfg.levels):
            z = self.enc[l](z)
            skips.append(z)
            z = self.down[l](ad.avgpool2(z))
        z = self.bottleneck(z)
        for l in reversed(range(self.cfg.levels)):
            z = self.up[l](ad.upsample_bilinear2(z))
            z = ad.add(z, skips[l])
            z = self.dec[l](z)
        out = self.head1(ad.gelu(self.head0(z)))
        return ad.transpose(out, (0, 2, 3, 1))


class FNOBaseline(_OperatorBase):
    """Direct-prediction foil: four spectral + pointwise blocks at one resolution.

    No hierarchy, no residual target; parameter count depends on (w, M) only.
    """

    depth = 4

    def __init__(self, cfg: ModelConfig, seed=0, dtype=np.float32):
        if cfg.arch != "fno_baseline":
            raise ValueError(f"FNOBaseline got arch={cfg.arch!r}")
        if cfg.residual_target:
            raise ValueError("the baseline is direct-prediction; residual_target must be off")
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        w = cfg.width
        self.lift = PointwiseLinear(rng, cfg.t_in + 2, w, "lift", dtype)
        self.specs = [
            init_spectral_weights(rng, w, w, cfg.modes, dtype) for _ in range(self.depth)
        ]
        self.convs = [
            PointwiseLinear(rng, w, w, f"blocks.{i}.conv", dtype) for i in range(self.depth)
        ]
        hidden = cfg.head_hidden_mult * w
        self.head0 = PointwiseLinear(rng, w, hidden, "head.0", dtype)
        self.head1 = PointwiseLinear(rng, hidden, 1, "head.1", dtype)

    def parameters(self):
        out = self.lift.params()
        for i in range(self.depth):
            out += spectral_weight_parameters(f"blocks.{i}.spec", self.specs[i])
            out += self.convs[i].params()
        out += self.head0.params() + self.head1.params()
        return out

    def forward(self, window, validate=True):
        window = self._window_tensor(window, validate)
        z = self.lift(self._lift_input(window))
        for spec, conv in zip(self.specs, self.convs):
            z = ad.gelu(ad.add(spectral_conv(z, spec), conv(z)))
        out = self.head1(ad.gelu(self.head0(z)))
        return ad.transpose(out, (0, 2, 3, 1))


class PersistenceModel:
    """Trivial predictor: every future frame equals the last input frame."""

    cfg = None

    def __init__(self, t_in=10):
        self.t_in = t_in

    def step(self, window, validate=True):
        return np.asarray(window)[..., -1:].copy()

    def rollout(self, window, t_out, validate=True):
        last = np.asarray(window)[..., -1]
        return np.repeat(last[..., None], t_out, axis=-1)


def build_model(config, seed=0, dtype=np.float32):
    cfg = config if isinstance(config, ModelConfig) else ModelConfig.from_dict(config)
    if cfg.arch == "spectral_unet":
        return SpectralUNet(cfg, seed=seed, dtype=dtype)
    if cfg.arch == "fno_baseline":
        return FNOBaseline(cfg, seed=seed, dtype=dtype)
    raise ValueError(f"unknown arch {cfg.arch!r}")


def count_parameters(model):
    """(real scalar count, complex-entry count) over all named parameters.

    The complex-entry convention counts a complex weight as one element;
    everything real counts identically in both.
    """
    real = 0
    complex_entries = 0
    for p in model.parameters():
        real += p.numel
        complex_entries += p.complex_entries
    return real, complex_entries


def head_parameter_count(width, head_hidden_mult=4):
    hidden = head_hidden_mult * width
    return width * hidden + hidden + hidden * 1 + 1


# ---------------------------------------------------------------------------
# checkpoint container


def save_checkpoint(path, model, manifest_extra=None):
    """Versioned binary container + JSON manifest sidecar at ``<path>.json``."""
    params = model.parameters()
    cfg_blob = json.dumps(model.cfg.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_FORMAT))
        f.write(struct.pack("<I", len(cfg_blob)))
        f.write(cfg_blob)
        f.write(struct.pack("<I", len(params)))
        for p in params:
            name = p.name.encode()
            f.write(struct.pack("<I", len(name)))
            f.write(name)
            f.write(struct.pack("<I", p.tensor.data.ndim))
            f.write(struct.pack(f"<{p.tensor.data.ndim}I", *p.tensor.data.shape))
            f.write(np.ascontiguousarray(p.tensor.data, dtype="<f4").tobytes())
    manifest = {"config": model.cfg.to_dict()}
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(str(path) + ".json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(path):
    """Return (config dict, {name: f32 array})."""
    with open(path, "rb") as f:
        magic = f.read(5)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
        (fmt,) = struct.unpack("<I", f.read(4))
        if fmt != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format {fmt}")
        (cfg_len,) = struct.unpack("<I", f.read(4))
        config = json.loads(f.read(cfg_len).decode())
        (n_params,) = struct.unpack("<I", f.read(4))
        arrays = {}
        for _ in range(n_params):
            (name_len,) = struct.unpack("<I", f.read(4))
            name = f.read(name_len).decode()
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            count = int(np.prod(shape)) if shape else 1
            arrays[name] = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape).copy()
    return config, arrays


def load_model(path, dtype=np.float32):
    config, arrays = load_checkpoint(path)
    mdl = build_model(config, dtype=dtype)
    mdl.load_param_arrays(arrays)
    return mdl
