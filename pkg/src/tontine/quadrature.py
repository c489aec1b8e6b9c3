"""Quadrature rules used by the annuity pricer.

Two schemes with nothing in common beyond the integrand:

* :func:`adaptive_simpson` - recursive interval halving with Richardson
  correction, run level by level over many intervals at once;
* :func:`gauss_legendre` - fixed composite Gauss-Legendre panels.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when a rule cannot meet its tolerance."""


def adaptive_simpson(f, a, b, abs_tol=1e-12, rel_tol=1e-10, max_level=40):
    """Integrate ``f`` over each interval ``[a[i], b[i]]``.

    Parameters
    ----------
    f : callable
        Vectorized integrand. It receives ``(x, owner)`` where ``owner`` holds
        the index of the interval each abscissa belongs to, so one call can
        serve integrands that differ per interval.
    a, b : array_like
        Interval endpoints, same shape.
    abs_tol, rel_tol : float
        Per-interval target: ``max(abs_tol, rel_tol * |coarse estimate|)``.

    Returns
    -------
    ndarray
        Integral over each interval.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n = a.size
    owner = np.arange(n)
    m = 0.5 * (a + b)
    fa, fm, fb = f(a, owner), f(m, owner), f(b, owner)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    tol = np.maximum(abs_tol, rel_tol * np.abs(whole))
    result = np.zeros(n)

    lo, hi = a, b
    for _ in range(max_level):
        if lo.size == 0:
            return result
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm, frm = f(lm, owner), f(rm, owner)
        h = (hi - lo) / 12.0
        left = h * (fa + 4.0 * flm + fm)
        right = h * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        done = np.abs(delta) <= 15.0 * tol
        np.add.at(result, owner[done], (left + right + delta / 15.0)[done])

        keep = ~done
        # children: [lo, mid] and [mid, hi], each with half the tolerance
        lo = np.concatenate([lo[keep], mid[keep]])
        hi = np.concatenate([mid[keep], hi[keep]])
        fa_new = np.concatenate([fa[keep], fm[keep]])
        fm_new = np.concatenate([flm[keep], frm[keep]])
        fb_new = np.concatenate([fm[keep], fb[keep]])
        whole = np.concatenate([left[keep], right[keep]])
        tol = np.concatenate([tol[keep], tol[keep]]) * 0.5
        owner = np.concatenate([owner[keep], owner[keep]])
        fa, fm, fb = fa_new, fm_new, fb_new

    if lo.size:
        raise QuadratureError(f"adaptive Simpson did not converge on {lo.size} subintervals")
    return result


@lru_cache(maxsize=None)
def _legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def gauss_legendre(f, a: float, b: float, panel_width: float = 0.5, order: int = 20) -> float:
    """Composite Gauss-Legendre rule on ``[a, b]`` with equal panels."""
    if b <= a:
        return 0.0
    n_panels = max(1, int(np.ceil((b - a) / panel_width)))
    edges = np.linspace(a, b, n_panels + 1)
    nodes, weights = _legendre(order)
    half = 0.5 * np.diff(edges)
    centre = 0.5 * (edges[:-1] + edges[1:])
    x = centre[:, None] + half[:, None] * nodes[None, :]
    vals = f(x) * weights[None, :] * half[:, None]
    return math.fsum(vals.ravel())


def gauss_legendre_segments(f, a, b, order: int = 16):
    """Single-panel Gauss-Legendre on many short segments ``[a[i], b[i]]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    nodes, weights = _legendre(order)
    half = 0.5 * (b - a)
    centre = 0.5 * (a + b)
    x = centre[..., None] + half[..., None] * nodes
    return np.sum(f(x) * weights, axis=-1) * half
