"""Actuarially fair life-annuity prices.

``A(t, beta)`` is the price at age ``t`` of a unit-rate life annuity when
cash flows are discounted at ``beta``:

    A(t, beta) = int_t^inf exp(-int_t^u [lambda(y) + beta] dy) du

The outer integral is truncated at ``QuadratureSettings.max_age``; the inner
one is the analytic cumulative hazard. Prices on a whole age grid share the
work: the range is cut into pieces at every grid age (and at least every
year), each piece is integrated once with adaptive Simpson, and the pieces
are chained backwards with their survival-discount factors.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .mortality import HazardDomainError
from .quadrature import adaptive_simpson, gauss_legendre, gauss_legendre_segments


class TruncationError(ArithmeticError):
    """Raised when the integrand is not negligible at the truncation age."""


@dataclass(frozen=True)
class QuadratureSettings:
    max_age: float = 130.0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if not math.isfinite(self.max_age):
            raise ValueError("max_age must be finite")

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_SETTINGS = QuadratureSettings()


def _constant_exponent(hazard, beta):
    def exponent(a, u):
        return hazard.cumulative_hazard(a, u) + beta * (u - a)

    return exponent


def _curve_exponent(hazard, beta_curve):
    # the beta integral over a piece of at most one year is exact to rounding
    # for smooth curves with a 16-point rule
    def exponent(a, u):
        return hazard.cumulative_hazard(a, u) + gauss_legendre_segments(beta_curve, a, u)

    return exponent


def _check_inputs(hazard, ages, settings):
    if np.any(ages >= settings.max_age):
        raise ValueError(f"evaluation ages must be below max_age={settings.max_age}")
    start = float(ages.min())
    if hazard.zero_hazard_age() > start:
        raise HazardDomainError(
            f"hazard is negative at age {start:g}; it is nonnegative only from "
            f"{hazard.zero_hazard_age():.4f}"
        )


def _discounted_integral(hazard, t, exponent, tail_rate, weight, settings):
    """``int_t^max weight(u) exp(-exponent(t, u)) du`` for scalar or array ``t``."""
    scalar = np.ndim(t) == 0
    ages = np.atleast_1d(np.asarray(t, dtype=float))
    _check_inputs(hazard, ages, settings)
    top = settings.max_age

    grid = np.unique(ages)
    yearly = np.arange(grid[0], top, 1.0)
    breaks = np.unique(np.concatenate([grid, yearly, [top]]))
    lo, hi = breaks[:-1], breaks[1:]

    def integrand(u, owner):
        val = np.exp(-exponent(lo[owner], u))
        if weight is not None:
            val = val * weight(u)
        return val

    pieces = adaptive_simpson(integrand, lo, hi, settings.abs_tol, settings.rel_tol)
    step_exponent = exponent(lo, hi)

    # backward chaining: S_j = I_j + exp(-phi_j) * S_{j+1}, S at max_age = 0
    n = lo.size
    acc = np.empty(n + 1)
    mass = np.empty(n + 1)
    acc[n] = 0.0
    mass[n] = 0.0
    for j in range(n - 1, -1, -1):
        acc[j] = pieces[j] + math.exp(-step_exponent[j]) * acc[j + 1]
        mass[j] = step_exponent[j] + mass[j + 1]

    idx = np.searchsorted(breaks, ages)
    values = acc[idx]

    # integrand decays at least at rate lambda + beta beyond max_age
    rate = tail_rate(top)
    w_top = 1.0 if weight is None else abs(float(weight(np.array(top))))
    tail = np.exp(-mass[idx]) * w_top
    bound = tail / rate if rate > 0 else np.where(tail > 0, np.inf, 0.0)
    bad = bound > settings.abs_tol
    if np.any(bad):
        worst = int(np.argmax(bound))
        raise TruncationError(
            f"tail beyond age {top:g} is not negligible for t={ages[worst]:g} "
            f"(bound {bound[worst]:.3e} > abs_tol {settings.abs_tol:.1e}); raise max_age"
        )
    return float(values[0]) if scalar else values


def annuity_factor(hazard, t, beta: float, settings: QuadratureSettings = DEFAULT_SETTINGS):
    """Fair price at age ``t`` of a unit-rate life annuity discounted at ``beta``.

    Accepts a scalar age or an array of ages. ``beta`` may be negative.

    Raises
    ------
    HazardDomainError
        If the hazard is negative at the youngest age.
    TruncationError
        If the tail beyond ``settings.max_age`` exceeds ``abs_tol``.
    """
    beta = float(beta)
    return _discounted_integral(
        hazard,
        t,
        _constant_exponent(hazard, beta),
        lambda age: float(hazard.hazard(age)) + beta,
        None,
        settings,
    )


def annuity_factor_gauss(hazard, t: float, beta: float, settings: QuadratureSettings = DEFAULT_SETTINGS,
                         panel_width: float = 0.5, order: int = 20) -> float:
    """Same price by composite Gauss-Legendre panels, with no piece chaining.

    Used only as an independent check on :func:`annuity_factor`.
    """
    t = float(t)
    _check_inputs(hazard, np.array([t]), settings)

    def f(u):
        return np.exp(-(hazard.cumulative_hazard(t, u) + beta * (u - t)))

    return gauss_legendre(f, t, settings.max_age, panel_width, order)


def bequest_multiple_of(b: float, gamma: float) -> float:
    # gamma = 0 is the log-utility branch, where the multiple is b itself
    return b ** (1.0 / (1.0 - gamma)) if b > 0 else 0.0


def m_price(hazard, t, beta: float, b: float, gamma: float,
            settings: QuadratureSettings = DEFAULT_SETTINGS):
    """Price ``k + (1 - beta k) A(t, beta)`` of an annuity plus a terminal lump sum.

    ``k = b ** (1 / (1 - gamma))``; ``gamma = 0`` gives the log-utility value ``k = b``.
    The reciprocal is the optimal fractional consumption rate.
    """
    k = bequest_multiple_of(b, gamma)
    a = annuity_factor(hazard, t, beta, settings)
    return k + (1.0 - beta * k) * a


def annuity_factor_tv(hazard, t, beta_curve, settings: QuadratureSettings = DEFAULT_SETTINGS,
                      weight=None):
    """Annuity price with an age-dependent discount rate ``beta_curve(age)``.

    ``beta_curve`` must be vectorized over numpy arrays. An optional
    ``weight(u)`` multiplies the integrand, which gives the consumption-price
    integral with a varying discount rate.
    """
    return _discounted_integral(
        hazard,
        t,
        _curve_exponent(hazard, beta_curve),
        lambda age: float(hazard.hazard(age)) + float(beta_curve(np.array(age))),
        weight,
        settings,
    )
