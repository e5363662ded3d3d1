"""Central-difference gradient checking against the reverse-mode engine."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad


def central_difference(f, x, h=1e-6):
    """Elementwise central-difference gradient of scalar-valued ``f`` at ``x``.

    ``x`` is perturbed in place and restored; ``f`` takes no arguments.
    """
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f())
        flat[i] = orig - h
        fm = float(f())
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_err(analytic, numeric):
    """max_i |analytic - numeric| / (|analytic| + 1e-12)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return float((np.abs(analytic - numeric) / (np.abs(analytic) + 1e-12)).max())


def check_scalar_fn(build, leaves, h=1e-6):
    """Compare backward grads of ``build()`` (a scalar graph tensor) to central
    differences for every tensor in ``leaves``; returns the worst relative error.
    """
    loss = build()
    ad.backward(loss)
    grads = [t.grad.copy() for t in leaves]
    for t in leaves:
        t.grad = None
    worst = 0.0
    for t, g in zip(leaves, grads):
        numeric = central_difference(lambda: build().data, t.data, h=h)
        worst = max(worst, max_rel_err(g, numeric))
    return worst
