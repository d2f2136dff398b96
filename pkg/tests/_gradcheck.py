"""Central finite-difference oracle shared by the gradient tests."""

import numpy as np

from mavenrec import tensor as T


def numeric_grad(f, x: T.Tensor, h: float = 1e-5) -> np.ndarray:
    """d f() / d x by central differences, perturbing ``x.data`` in place."""
    g = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f().data)
        flat[i] = orig - h
        lo = float(f().data)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * h)
    return g


# Central differences of an O(1) loss carry roundoff of about eps * |f| / h,
# ~2e-11 at h=1e-5. Exact zeros (dead ReLU units) would otherwise report that
# noise as a large relative error, so the denominator never drops below 1e-6.
FLOOR = 1e-6


def rel_error(analytic, numeric) -> float:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), FLOOR)))


def max_rel_error(f, inputs, h: float = 1e-5) -> dict:
    """Worst |analytic - numeric| / max(|numeric|, FLOOR) for each tensor in ``inputs``."""
    items = dict(inputs) if isinstance(inputs, dict) else dict(enumerate(inputs))
    for x in items.values():
        x.zero_grad()
    T.backward(f())
    out = {}
    for name, x in items.items():
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        out[name] = rel_error(analytic, numeric_grad(f, x, h))
    return out
