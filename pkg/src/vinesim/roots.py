"""Vectorized bracketed scalar root finding.

Illinois-modified false position (a secant step that always stays inside
the bracket) with a bisection safeguard whenever the bracket fails to halve.
Lanes freeze individually once converged, so a lane's result does not depend
on what else is in the batch.
"""
from __future__ import annotations

import numpy as np


class NoConvergenceError(RuntimeError):
    """A bracketed solve did not produce a valid root."""


def bisect(func, lo, hi, xtol=1e-13, max_iter=200):
    """Find a root of ``func`` in ``[lo, hi]`` for every lane.

    ``func`` maps an array of abscissae (one per lane) to residuals; each
    bracket must contain a sign change, otherwise
    :class:`NoConvergenceError` is raised. Converges when the bracket is
    narrower than ``xtol`` or the residual is exactly zero.
    """
    a, b = np.broadcast_arrays(np.array(lo, dtype=float), np.array(hi, dtype=float))
    a, b = a.copy(), b.copy()
    shape = a.shape
    a, b = a.ravel(), b.ravel()
    fa = np.asarray(func(a.reshape(shape)), dtype=float).ravel().copy()
    fb = np.asarray(func(b.reshape(shape)), dtype=float).ravel().copy()
    bad = (np.sign(fa) * np.sign(fb) > 0) | ~np.isfinite(fa) | ~np.isfinite(fb)
    if np.any(bad):
        raise NoConvergenceError(
            f"{int(np.count_nonzero(bad))} bracket(s) without a sign change")
    done = (fa == 0) | (fb == 0) | (np.abs(b - a) <= xtol)
    root = np.where(fa == 0, a, np.where(fb == 0, b, 0.5 * (a + b)))
    side = np.zeros(a.shape, dtype=int)  # which end was retained last time
    width_prev = np.abs(b - a)
    stall = np.zeros(a.shape, dtype=int)
    for _ in range(max_iter):
        if np.all(done):
            break
        denom = fb - fa
        with np.errstate(invalid="ignore", divide="ignore"):
            x = np.where(denom != 0, (a * fb - b * fa) / denom, 0.5 * (a + b))
        lo_, hi_ = np.minimum(a, b), np.maximum(a, b)
        safe = (stall >= 2) | ~np.isfinite(x) | (x <= lo_) | (x >= hi_)
        x = np.where(safe, 0.5 * (a + b), x)
        x = np.where(done, root, x)
        fx = np.asarray(func(x.reshape(shape)), dtype=float).ravel()
        if not np.all(np.isfinite(fx[~done])):
            raise NoConvergenceError("non-finite residual inside bracket")
        live = ~done
        same_as_b = np.sign(fx) == np.sign(fb)
        # replace b by x, keep a; Illinois halves fa when a is kept twice
        rep_b = live & same_as_b
        rep_a = live & ~same_as_b
        halve_a = rep_b & (side == 1) & ~safe
        halve_b = rep_a & (side == -1) & ~safe
        fa = np.where(halve_a, 0.5 * fa, fa)
        fb = np.where(halve_b, 0.5 * fb, fb)
        b = np.where(rep_b, x, b)
        fb = np.where(rep_b, fx, fb)
        a = np.where(rep_a, x, a)
        fa = np.where(rep_a, fx, fa)
        side = np.where(rep_b, 1, np.where(rep_a, -1, side))
        width = np.abs(b - a)
        stall = np.where(live & (width > 0.5 * width_prev), stall + 1, 0)
        stall = np.where(safe, 0, stall)
        width_prev = np.where(live & (stall == 0), width, width_prev)
        newly = live & ((fx == 0) | (width <= xtol))
        root = np.where(newly, np.where(fx == 0, x, np.where(np.abs(fa) < np.abs(fb), a, b)), root)
        done = done | newly
    if not np.all(done):
        raise NoConvergenceError("bracketed solve hit the iteration cap")
    return root.reshape(shape)
