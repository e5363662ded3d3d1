"""Real 2-D FFT contracts, truncated spectral convolution, spectral resampling.

Convention (pinned): forward transform unnormalized, inverse carries 1/(HW).
Grids are powers of two. The spectral convolution keeps two M x M corner
blocks of the half-spectrum (positive and negative rows along the first
spatial axis) and mixes channels per retained mode with learned complex
weights; everything outside the blocks is zeroed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from .autodiff import Parameter, Tensor, _accum, _make, as_tensor


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def _check_pow2(h, w, who):
    if not (_is_pow2(h) and _is_pow2(w)):
        raise ValueError(f"{who}: spatial extents must be powers of two, got {(h, w)}")


def rfft2(x):
    """Half-spectrum DFT of a real field over the last two axes (unnormalized)."""
    x = np.asarray(x)
    _check_pow2(x.shape[-2], x.shape[-1], "rfft2")
    return _fft.rfft2(x, axes=(-2, -1))


def irfft2(spec, out_shape):
    """Inverse of :func:`rfft2`; carries the 1/(HW) normalization."""
    h, w = out_shape
    _check_pow2(h, w, "irfft2")
    spec = np.asarray(spec)
    if spec.shape[-2] != h or spec.shape[-1] != w // 2 + 1:
        raise ValueError(
            f"irfft2: spectrum shape {spec.shape[-2:]} incompatible with output {(h, w)}"
        )
    return _fft.irfft2(spec, s=(h, w), axes=(-2, -1))


@dataclass
class SpectralWeights:
    """Paired complex weight blocks (positive / negative rows) of one layer.

    Stored as real arrays [C_in, C_out, M, M, 2] with a trailing (re, im)
    axis so the optimizer and checkpoints stay uniformly real.
    """

    w_pos: Tensor
    w_neg: Tensor
    modes: int

    @property
    def c_in(self):
        return self.w_pos.shape[0]

    @property
    def c_out(self):
        return self.w_pos.shape[1]

    @property
    def real_param_count(self):
        return 2 * 2 * self.c_in * self.c_out * self.modes ** 2

    @property
    def complex_entry_count(self):
        return 2 * self.c_in * self.c_out * self.modes ** 2


def init_spectral_weights(rng, c_in, c_out, modes, dtype=np.float32):
    """Uniform [0, 1) per (re, im) component, scaled by 1/(C_in*C_out)."""
    gain = 1.0 / (c_in * c_out)
    shape = (c_in, c_out, modes, modes, 2)
    w_pos = Tensor((rng.uniform(size=shape) * gain).astype(dtype), requires_grad=True)
    w_neg = Tensor((rng.uniform(size=shape) * gain).astype(dtype), requires_grad=True)
    return SpectralWeights(w_pos=w_pos, w_neg=w_neg, modes=modes)


def _as_complex(pairs):
    return pairs[..., 0] + 1j * pairs[..., 1]


def _as_pairs(z, dtype):
    return np.stack([z.real, z.imag], axis=-1).astype(dtype, copy=False)


def _column_weights(m, w, dtype):
    # irfft2 double-counts interior half-spectrum columns; DC (and Nyquist,
    # if ever retained) count once
    c = np.full(m, 2.0, dtype=dtype)
    c[0] = 1.0
    if m - 1 == w // 2:
        c[-1] = 1.0
    return c


def _mode_mix(spec_block, w_block):
    """Per-mode channel mix: out[b,o,k] = sum_i spec[b,i,k] w[i,o,k] via batched matmul."""
    xt = spec_block.transpose(2, 3, 0, 1)
    wt = w_block.transpose(2, 3, 0, 1)
    return np.matmul(xt, wt).transpose(2, 3, 0, 1)


def _mode_outer(g_block, x_block):
    """Weight gradient: out[i,o,k] = sum_b g[b,o,k] conj(x[b,i,k])."""
    gt = g_block.transpose(2, 3, 0, 1)
    xt = np.conj(x_block).transpose(2, 3, 1, 0)
    return np.matmul(xt, gt).transpose(2, 3, 0, 1)


def spectral_conv(x, weights):
    """Truncated spectral convolution as one composite graph op.

    Forward: rfft2 -> take blocks [:M,:M] and [-M:,:M] -> per-mode complex
    channel mix -> zero-fill -> irfft2. Backward applies the adjoint:
    conjugate-transposed weights for the input gradient, truncated
    spectrum outer products for the weight gradients.
    """
    x = as_tensor(x)
    wp, wn = weights.w_pos, weights.w_neg
    m = weights.modes
    b, c_in, h, w = x.shape
    if c_in != weights.c_in:
        raise ValueError(f"spectral_conv: input channels {c_in} != weight C_in {weights.c_in}")
    if m > h // 2 or m > w // 2 + 1:
        raise ValueError(f"spectral_conv: modes {m} exceed Nyquist of grid {(h, w)}")
    c_out = weights.c_out
    rdtype = x.data.dtype
    cdtype = np.complex64 if rdtype == np.float32 else np.complex128

    spec = _fft.rfft2(x.data, axes=(-2, -1))
    x_pos = spec[:, :, :m, :m]
    x_neg = spec[:, :, h - m:, :m]
    w_pos_c = _as_complex(wp.data).astype(cdtype, copy=False)
    w_neg_c = _as_complex(wn.data).astype(cdtype, copy=False)

    y_spec = np.zeros((b, c_out, h, w // 2 + 1), dtype=cdtype)
    y_spec[:, :, :m, :m] = _mode_mix(x_pos, w_pos_c)
    y_spec[:, :, h - m:, :m] = _mode_mix(x_neg, w_neg_c)
    data = _fft.irfft2(y_spec, s=(h, w), axes=(-2, -1))

    def backward(g):
        g_spec = _fft.rfft2(g, axes=(-2, -1))
        g_pos = g_spec[:, :, :m, :m]
        g_neg = g_spec[:, :, h - m:, :m]
        if x.requires_grad:
            dx_spec = np.zeros((b, c_in, h, w // 2 + 1), dtype=cdtype)
            dx_spec[:, :, :m, :m] = _mode_mix(g_pos, np.conj(w_pos_c).transpose(1, 0, 2, 3))
            dx_spec[:, :, h - m:, :m] = _mode_mix(g_neg, np.conj(w_neg_c).transpose(1, 0, 2, 3))
            _accum(x, _fft.irfft2(dx_spec, s=(h, w), axes=(-2, -1)))
        col = _column_weights(m, w, np.float64) / (h * w)
        if wp.requires_grad:
            dwp = _mode_outer(g_pos, x_pos) * col
            _accum(wp, _as_pairs(dwp, rdtype))
        if wn.requires_grad:
            dwn = _mode_outer(g_neg, x_neg) * col
            _accum(wn, _as_pairs(dwn, rdtype))

    return _make(data, (x, wp, wn), backward)


def spectral_conv_adjoint(y, weights):
    """Adjoint of :func:`spectral_conv` in x (used by the adjoint-identity test)."""
    h, w = np.asarray(y).shape[-2:]
    m = weights.modes
    cdtype = np.complex128 if np.asarray(y).dtype == np.float64 else np.complex64
    g_spec = _fft.rfft2(np.asarray(y), axes=(-2, -1))
    out = np.zeros(y.shape[:-3] + (weights.c_in, h, w // 2 + 1), dtype=cdtype)
    w_pos_c = _as_complex(weights.w_pos.data).astype(cdtype, copy=False)
    w_neg_c = _as_complex(weights.w_neg.data).astype(cdtype, copy=False)
    out[..., :m, :m] = _mode_mix(g_spec[..., :m, :m], np.conj(w_pos_c).transpose(1, 0, 2, 3))
    out[..., h - m:, :m] = _mode_mix(g_spec[..., h - m:, :m], np.conj(w_neg_c).transpose(1, 0, 2, 3))
    return _fft.irfft2(out, s=(h, w), axes=(-2, -1))


def spectral_zeropad_resample(x, target):
    """Upsample the last two axes by embedding the half-spectrum in a larger grid.

    Exact for fields band-limited strictly below the source Nyquist; the
    source Nyquist row/column is dropped. Upsampling only.
    """
    x = np.asarray(x)
    h1, w1 = x.shape[-2:]
    h2, w2 = target
    _check_pow2(h1, w1, "spectral_zeropad_resample")
    _check_pow2(h2, w2, "spectral_zeropad_resample")
    if h2 < h1 or w2 < w1:
        raise ValueError(
            f"spectral_zeropad_resample: downsampling {(h1, w1)} -> {(h2, w2)} not supported"
        )
    if (h2, w2) == (h1, w1):
        return x.copy()

    spec = _fft.rfft2(x, axes=(-2, -1))
    out = np.zeros(x.shape[:-2] + (h2, w2 // 2 + 1), dtype=spec.dtype)
    rp = h1 // 2           # positive rows [0, h1/2)
    rn = h1 // 2 - 1       # negative rows, Nyquist row dropped
    cols = w1 // 2         # positive columns, Nyquist column dropped
    out[..., :rp, :cols] = spec[..., :rp, :cols]
    if rn > 0:
        out[..., h2 - rn:, :cols] = spec[..., h1 - rn:, :cols]
    out *= (h2 * w2) / (h1 * w1)
    return _fft.irfft2(out, s=(h2, w2), axes=(-2, -1)).astype(x.dtype, copy=False)


def spectral_weight_parameters(prefix, weights):
    """Expose a layer's weight blocks as named parameters."""
    return [
        Parameter(name=f"{prefix}.w_pos", tensor=weights.w_pos, complex_pairs=True),
        Parameter(name=f"{prefix}.w_neg", tensor=weights.w_neg, complex_pairs=True),
    ]
