"""Numpy implementations of the per-pixel kernels.

These are the reference semantics; the compiled ``_kernels`` module must
produce byte-identical output for every function here.
"""

import numpy as np

NAME = "python"


def rescale_clip(values, lo, hi):
    """Clip ``values`` to ``[lo, hi]`` and rescale linearly to ``[0, 1]`` in float32.

    A degenerate window (``hi <= lo``) yields all zeros.
    """
    values = np.ascontiguousarray(values, dtype=np.float32)
    lo = np.float32(lo)
    hi = np.float32(hi)
    if not hi > lo:
        return np.zeros_like(values)
    span = np.float32(hi - lo)
    out = np.clip(values, lo, hi)
    out -= lo
    out /= span
    return out


def to_byte(values):
    """Map unit-range float32 values to uint8 by ``round(v * 255)``, ties away from zero.

    The caller is responsible for range validation.
    """
    scaled = np.asarray(values, dtype=np.float32).astype(np.float64) * 255.0
    out = np.floor(scaled + 0.5)
    np.clip(out, 0.0, 255.0, out=out)
    return out.astype(np.uint8)


def normalized_difference(plus, minus):
    p = np.asarray(plus, dtype=np.float32).astype(np.float64)
    m = np.asarray(minus, dtype=np.float32).astype(np.float64)
    num = p - m
    den = p + m
    zero = den == 0.0
    out = np.divide(num, np.where(zero, 1.0, den))
    out[zero] = 0.0
    return out.astype(np.float32)


def colormap(values, points, lo, hi):
    """Piecewise-linear colormap over evenly spaced ``points`` on ``[lo, hi]``.

    Returns an ``(H, W, 3)`` uint8 array. Channel values are rounded to
    float32 before byte scaling.
    """
    v = np.asarray(values, dtype=np.float32).astype(np.float64)
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    lo = float(lo)
    hi = float(hi)

    pos = ((v - lo) / (hi - lo)) * (n - 1)
    pos = np.where(v <= lo, 0.0, pos)
    pos = np.where(v >= hi, float(n - 1), pos)
    k = np.floor(pos).astype(np.intp)
    np.clip(k, 0, n - 2, out=k)
    frac = pos - k

    out = np.empty(v.shape + (3,), dtype=np.uint8)
    for c in range(3):
        base = pts[k, c]
        step = pts[k + 1, c] - base
        channel = (base + step * frac).astype(np.float32)
        out[..., c] = to_byte(channel)
    return out
