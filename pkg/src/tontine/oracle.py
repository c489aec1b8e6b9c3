"""Independent numerical checks of the closed-form strategy.

The closed form says ``c*(t) = 1 / m(t)``. The checks here reach the same
numbers by other routes:

* fixed-step Runge-Kutta integration of the Bernoulli equation
  ``dc/dt = c [c (1 + k lambda) - lambda - beta]`` forward from ``c*(s)``;
* backward integration of the linear equation for ``m = 1/c``;
* the residual of the Hamilton-Jacobi-Bellman equation under the trial
  value function ``V = c*^(gamma-1) x^gamma / gamma``;
* the pure-decumulation special cases (log utility, no bequest).

The integrators use a fixed step on purpose: they share nothing with the
adaptive quadrature behind the closed form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .annuity import DEFAULT_SETTINGS, annuity_factor, annuity_factor_gauss
from .strategy import (
    InfeasibleScenarioError,
    PreferenceParams,
    Regime,
    _require_feasible,
    bequest_multiple,
    consumption_rate,
    merton_weight,
    regime,
)
from .strategy import beta as beta_of


class OdeBlowUpError(ArithmeticError):
    def __init__(self, message: str, age: float):
        super().__init__(message)
        self.age = age


@dataclass(frozen=True)
class OdeSettings:
    step: float = 1.0 / 256.0
    order: str = "rk4"
    start_age: float | None = None
    end_age: float | None = None

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.order not in _STEPPERS:
            raise ValueError(f"unknown integrator {self.order!r}; choose from {sorted(_STEPPERS)}")
        if self.start_age is not None and self.end_age is not None and not self.end_age > self.start_age:
            raise ValueError("end_age must exceed start_age")


def _rk4(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _euler(f, t, y, h):
    return y + h * f(t, y)


_STEPPERS = {"rk4": _rk4, "euler": _euler}


def _grid(start, end, step):
    n = max(1, int(math.ceil((end - start) / step - 1e-9)))
    return np.linspace(start, end, n + 1)


def consumption_rhs(hazard, k: float, beta: float):
    """Right side of the Bernoulli equation for ``c(t)``."""

    def f(t, c):
        lam = hazard.hazard(t)
        return c * (c * (1.0 + k * lam) - lam - beta)

    return f


@dataclass(frozen=True)
class OdeResult:
    ages: np.ndarray
    c: np.ndarray
    c_closed: np.ndarray

    @property
    def rel_error(self) -> np.ndarray:
        return np.abs(self.c / self.c_closed - 1.0)

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_error.max())


def _integrate_forward(f, ages, c0, stepper, stop=None):
    c = np.empty_like(ages)
    c[0] = c0
    for i in range(ages.size - 1):
        c[i + 1] = stepper(f, ages[i], c[i], ages[i + 1] - ages[i])
        if stop is not None:
            verdict = stop(ages[i + 1], c[i + 1])
            if verdict is not None:
                return c[: i + 2], verdict
        elif not (c[i + 1] > 0 and math.isfinite(c[i + 1])):
            raise OdeBlowUpError(f"consumption ODE blew up at age {ages[i + 1]:.4f}", float(ages[i + 1]))
    return c, None


def integrate_consumption_ode(scenario, ode_settings: OdeSettings = OdeSettings()) -> OdeResult:
    """Integrate the consumption ODE forward from the closed-form ``c*(s)``.

    The result carries the closed form on the same grid for comparison.
    """
    start = scenario.entry_age if ode_settings.start_age is None else ode_settings.start_age
    end = scenario.end_age if ode_settings.end_age is None else ode_settings.end_age
    hz, prefs = scenario.mortality, scenario.prefs
    b_ = _require_feasible(hz, scenario.entry_age, prefs, scenario.market, scenario.quadrature)
    k = bequest_multiple(prefs)
    ages = _grid(start, end, ode_settings.step)
    closed = consumption_rate(hz, ages, prefs, scenario.market, scenario.quadrature,
                              entry_age=scenario.entry_age)
    c, _ = _integrate_forward(consumption_rhs(hz, k, b_), ages, closed[0], _STEPPERS[ode_settings.order])
    return OdeResult(ages, c, closed)


def integrate_price_backward(hazard, k: float, beta: float, start: float, top: float,
                             step: float = 1.0 / 256.0) -> tuple[np.ndarray, np.ndarray]:
    """RK4 for ``m' = (lambda + beta) m - (1 + k lambda)`` from ``m(top) = k``.

    ``m = 1/c*``. Backward in age the homogeneous part decays, so the crude
    terminal value is forgotten long before ``start``. Returns ``(ages, m)``.
    """
    ages = _grid(start, top, step)

    def f(t, m):
        lam = hazard.hazard(t)
        return (lam + beta) * m - (1.0 + k * lam)

    m = np.empty_like(ages)
    m[-1] = k
    for i in range(ages.size - 1, 0, -1):
        m[i - 1] = _rk4(f, ages[i], m[i], ages[i - 1] - ages[i])
    return ages, m


class Divergence(str, enum.Enum):
    NEGATIVE_DENOMINATOR = "NegativeDenominator"
    BEQUEST_LIMIT_VIOLATED = "BequestLimitViolated"
    NONE = "None"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class DivergenceResult:
    classification: Divergence
    age: float | None
    ages: np.ndarray
    c: np.ndarray


def boundary_divergence_demo(scenario, epsilon: float, end_age: float | None = None,
                             step: float = 1.0 / 256.0) -> DivergenceResult:
    """Start the consumption ODE off the closed form and see how it fails.

    The initial value is ``1 / (m(s) + epsilon)``. A negative shift drives the
    general solution's denominator through zero (consumption explodes); a
    positive one drives consumption, and with it the bequest proportion, to
    zero. ``epsilon = 0`` just integrates over the scenario horizon and reports
    ``Divergence.NONE``.
    """
    hz, prefs = scenario.mortality, scenario.prefs
    b_ = _require_feasible(hz, scenario.entry_age, prefs, scenario.market, scenario.quadrature)
    k = bequest_multiple(prefs)
    m_s = k + (1.0 - b_ * k) * annuity_factor(hz, scenario.entry_age, b_, scenario.quadrature)
    if epsilon == 0:
        res = integrate_consumption_ode(scenario, OdeSettings(step=step))
        return DivergenceResult(Divergence.NONE, None, res.ages, res.c)

    top = scenario.quadrature.max_age if end_age is None else end_age
    ages = _grid(scenario.entry_age, top, step)
    c0 = 1.0 / (m_s + epsilon)
    if not c0 > 0:
        return DivergenceResult(Divergence.NEGATIVE_DENOMINATOR, scenario.entry_age, ages[:1], np.array([c0]))

    def stop(age, c):
        if not math.isfinite(c) or c <= 0 or c > 1e6 * c0:
            return Divergence.NEGATIVE_DENOMINATOR
        if c < 1e-3 * c0:
            return Divergence.BEQUEST_LIMIT_VIOLATED
        return None

    c, verdict = _integrate_forward(consumption_rhs(hz, k, b_), ages, c0, _rk4, stop)
    if verdict is None:
        return DivergenceResult(Divergence.INCONCLUSIVE, None, ages, c)
    return DivergenceResult(verdict, float(ages[c.size - 1]), ages[: c.size], c)


# -- Hamilton-Jacobi-Bellman residual ---------------------------------------

@dataclass(frozen=True)
class _HJBPoint:
    t: float
    x: float
    lam: float
    c: float
    dcdt: float
    V: float
    V_t: float
    V_x: float
    V_xx: float


def _hjb_point(scenario, t, x, beta_value=None, mode="analytic", fd_step=1e-3):
    prefs, market, hz = scenario.prefs, scenario.market, scenario.mortality
    if prefs.log_utility:
        raise ValueError("the HJB residual is implemented for power utility only")
    g = prefs.gamma
    k = bequest_multiple(prefs)
    b_ = beta_of(market, prefs) if beta_value is None else beta_value
    settings = scenario.quadrature

    def c_at(age):
        a = annuity_factor(hz, age, b_, settings)
        return 1.0 / (k + (1.0 - b_ * k) * a)

    c = c_at(t)
    lam = float(hz.hazard(t))
    if mode == "analytic":
        dcdt = c * (c * (1.0 + k * lam) - lam - b_)
    elif mode == "fd":
        dcdt = (c_at(t + fd_step) - c_at(t - fd_step)) / (2 * fd_step)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    V = c ** (g - 1.0) * x ** g / g
    return _HJBPoint(
        t=t, x=x, lam=lam, c=c, dcdt=dcdt, V=V,
        V_t=(g - 1.0) * V * dcdt / c,
        V_x=g * V / x,
        V_xx=g * (g - 1.0) * V / x ** 2,
    )


def _bracket(scenario, p: _HJBPoint, c, alpha, w):
    prefs, m = scenario.prefs, scenario.market
    g, b = prefs.gamma, prefs.b
    consumption = (c * p.x) ** g / g
    bequest = b * p.lam * ((1.0 - alpha) * p.x) ** g / g if b > 0 else 0.0
    drift = p.x * p.V_x * (m.r + w * (m.mu - m.r) + alpha * p.lam - c)
    diffusion = 0.5 * p.x ** 2 * m.sigma ** 2 * w ** 2 * p.V_xx
    return consumption + bequest + p.V_t + drift + diffusion


def hjb_bracket(scenario, t: float, x: float, c_scale: float = 1.0, alpha_shift: float = 0.0,
                w_shift: float = 0.0, beta_value: float | None = None) -> float:
    """Maximand of the HJB equation at (perturbed) controls, value function held at optimum."""
    p = _hjb_point(scenario, t, x, beta_value)
    k = bequest_multiple(scenario.prefs)
    alpha = 1.0 - k * p.c
    w = merton_weight(scenario.market, scenario.prefs)
    if alpha + alpha_shift > 1.0 or c_scale <= 0.0:
        return -math.inf  # negative bequest or consumption: inadmissible
    return _bracket(scenario, p, p.c * c_scale, alpha + alpha_shift, w + w_shift)


def hjb_residual(scenario, t: float, x: float, mode: str = "analytic",
                 beta_value: float | None = None, relative: bool = False) -> float:
    """``(lambda + rho) V - max[...]`` at the closed-form controls.

    ``mode="analytic"`` differentiates ``c*`` through its ODE, which isolates
    algebraic slips; ``mode="fd"`` uses central differences of the closed form
    instead. ``beta_value`` overrides the discount rate (fault injection).
    ``relative=True`` divides by ``|rho V|``.
    """
    p = _hjb_point(scenario, t, x, beta_value, mode)
    k = bequest_multiple(scenario.prefs)
    w = merton_weight(scenario.market, scenario.prefs)
    lhs = (p.lam + scenario.market.rho) * p.V
    res = lhs - _bracket(scenario, p, p.c, 1.0 - k * p.c, w)
    return abs(res) / abs(scenario.market.rho * p.V) if relative else res


def hjb_value(scenario, t: float, x: float) -> float:
    return _hjb_point(scenario, t, x).V


# -- pure decumulation --------------------------------------------------------

@dataclass(frozen=True)
class ScaledHazard:
    """``factor * lambda(t)``; the no-bequest decumulation problem discounts with it."""

    base: object
    factor: float

    def hazard(self, t):
        return self.factor * self.base.hazard(t)

    def cumulative_hazard(self, s, t):
        return self.factor * self.base.cumulative_hazard(s, t)

    def zero_hazard_age(self) -> float:
        return self.base.zero_hazard_age()


def decumulation_log(hazard, t, b: float, rho: float, settings=DEFAULT_SETTINGS):
    """Consumption rate of a log-utility decumulator with bequest weight ``b``.

    Coincides exactly with the tontine member's rate.
    """
    a = annuity_factor(hazard, t, rho, settings)
    a_min = np.min(a)
    if b > 0 and not rho < 1.0 / b + 1.0 / a_min:
        raise InfeasibleScenarioError(
            f"decumulation infeasible: rho={rho} is not below 1/b + 1/A = {1.0 / b + 1.0 / a_min:.6g}",
            1.0 / b + 1.0 / a_min - rho,
        )
    return 1.0 / (b + (1.0 - rho * b) * a)


def decumulation_no_bequest(hazard, t, gamma: float, beta: float, settings=DEFAULT_SETTINGS):
    """Consumption rate of a CRRA decumulator without bequest motive.

    The annuity price with the hazard inflated by ``1/(1 - gamma)``.
    """
    if not gamma < 1 or gamma == 0:
        raise ValueError("gamma must be below 1 and nonzero")
    return 1.0 / annuity_factor(ScaledHazard(hazard, 1.0 / (1.0 - gamma)), t, beta, settings)


def decumulation_rhs(hazard, gamma: float, beta: float, b: float):
    """Log-derivative ``c'/c`` of the decumulation consumption ODE."""

    def f(t, c):
        lam = hazard.hazard(t)
        psi = lam + beta + gamma * lam / (1.0 - gamma)
        return c + b * lam * c ** (1.0 - gamma) / (1.0 - gamma) - psi

    return f


def integrate_decumulation_backward(hazard, gamma: float, beta: float, start: float, top: float,
                                    step: float = 1.0 / 256.0) -> tuple[np.ndarray, np.ndarray]:
    """RK4 on the reciprocal form ``y' = psi y - 1`` (``y = 1/c``, ``b = 0``) from ``y(top) = 0``.

    Returns ``(ages, c)``; ``c`` at ``top`` is infinite and dropped.
    """
    ages = _grid(start, top, step)

    def f(t, y):
        lam = hazard.hazard(t)
        return (lam / (1.0 - gamma) + beta) * y - 1.0

    y = np.empty_like(ages)
    y[-1] = 0.0
    for i in range(ages.size - 1, 0, -1):
        y[i - 1] = _rk4(f, ages[i], y[i], ages[i - 1] - ages[i])
    return ages[:-1], 1.0 / y[:-1]


# -- verification suite -------------------------------------------------------

@dataclass
class Check:
    name: str
    max_error: float
    tolerance: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "max_error": self.max_error, "tolerance": self.tolerance,
                "passed": self.passed, "detail": self.detail}


def _check(name, err, tol, detail=""):
    err = float(err)
    return Check(name, err, tol, bool(err <= tol), detail)


def ode_fd_residual(scenario, ages, h: float = 1e-4) -> float:
    """Max relative mismatch between d ln c*/dt (central differences) and the ODE right side."""
    hz, prefs, market, settings = scenario.mortality, scenario.prefs, scenario.market, scenario.quadrature
    b_ = beta_of(market, prefs)
    k = bequest_multiple(prefs)
    ages = np.asarray(ages, dtype=float)
    c_plus = consumption_rate(hz, ages + h, prefs, market, settings, entry_age=scenario.entry_age)
    c_minus = consumption_rate(hz, ages - h, prefs, market, settings, entry_age=scenario.entry_age)
    c = consumption_rate(hz, ages, prefs, market, settings, entry_age=scenario.entry_age)
    lam = hz.hazard(ages)
    fd = (np.log(c_plus) - np.log(c_minus)) / (2 * h)
    rhs = c * (1.0 + k * lam) - lam - b_
    scale = c * (1.0 + k * lam) + lam + abs(b_)
    return float(np.max(np.abs(fd - rhs) / scale))


def fault_beta(market, prefs) -> float:
    """Discount rate with the sign of the risk-premium term flipped (test fault)."""
    g = prefs.gamma
    inv = 1.0 / (1.0 - g)
    return market.r + (market.rho - market.r) * inv + 0.5 * g * market.sharpe ** 2 * inv ** 2


def run_verification(scenario, inject: str | None = None, seed: int = 20240611) -> list[Check]:
    """Run every oracle against ``scenario``; returns one :class:`Check` per test.

    ``inject="beta-sign"`` corrupts the discount rate inside the HJB check so
    that the suite can be seen to fail.
    """
    checks: list[Check] = []
    hz, prefs, market, settings = scenario.mortality, scenario.prefs, scenario.market, scenario.quadrature
    s, end = scenario.entry_age, scenario.end_age
    b_ = beta_of(market, prefs)
    k = bequest_multiple(prefs)
    rng = np.random.default_rng(seed)

    worst = 0.0
    for _ in range(50):
        t = rng.uniform(max(s - 10, hz.zero_hazard_age() + 1), 110.0)
        bt = rng.uniform(-0.25, 0.1)
        a1, a2 = annuity_factor(hz, t, bt, settings), annuity_factor_gauss(hz, t, bt, settings)
        worst = max(worst, abs(a1 - a2) / abs(a2))
    checks.append(_check("annuity_two_schemes", worst, 1e-8, "adaptive Simpson vs Gauss-Legendre, 50 (t, beta)"))

    ode = integrate_consumption_ode(scenario)
    checks.append(_check("consumption_ode_forward", ode.max_rel_error, 1e-8, "RK4 step 1/256 vs closed form"))

    ages, m_num = integrate_price_backward(hz, k, b_, s, settings.max_age)
    sel = ages <= end
    c_closed = consumption_rate(hz, ages[sel], prefs, market, settings, entry_age=s)
    checks.append(_check("price_ode_backward", np.max(np.abs(m_num[sel] * c_closed - 1.0)), 1e-8,
                         "RK4 on 1/c from the truncation age"))

    grid = np.linspace(s, end, 41)
    checks.append(_check("consumption_ode_fd_residual", ode_fd_residual(scenario, grid), 1e-6,
                         "central differences of ln c*, h = 1e-4"))

    if not prefs.log_utility:
        bad_beta = fault_beta(market, prefs) if inject == "beta-sign" else None
        worst = 0.0
        for t in np.linspace(s, end, 20):
            for x in np.geomspace(0.05, 20.0, 20):
                res = hjb_residual(scenario, t, x, beta_value=bad_beta)
                V = hjb_value(scenario, t, x)
                worst = max(worst, abs(res) / abs(market.rho * V))
        checks.append(_check("hjb_residual", worst, 1e-8, "20x20 (t, x) grid, relative to |rho V|"))

        gaps_c, gaps_a = [], []
        for t in np.linspace(s, end, 5):
            opt = hjb_bracket(scenario, t, 1.0)
            gaps_c.append(opt - hjb_bracket(scenario, t, 1.0, c_scale=1.1))
            if k > 0:
                c_t = float(consumption_rate(hz, t, prefs, market, settings, entry_age=s))
                if k * c_t > 0.1:
                    gaps_a.append(opt - hjb_bracket(scenario, t, 1.0, alpha_shift=0.1))
                gaps_a.append(opt - hjb_bracket(scenario, t, 1.0, alpha_shift=-0.1))
        checks.append(_check("hjb_perturbed_consumption", -min(gaps_c), 0.0,
                             "bracket at 1.1 c* minus optimum (must be negative)"))
        if gaps_a:
            checks.append(_check("hjb_perturbed_alpha", -min(gaps_a), 0.0,
                                 "bracket at alpha* +/- 0.1 minus optimum (must be negative)"))

    neg = boundary_divergence_demo(scenario, -1e-3)
    checks.append(Check("boundary_negative_shift", 0.0, 0.0, neg.classification == Divergence.NEGATIVE_DENOMINATOR,
                        f"classified {neg.classification.value} at age {neg.age}"))
    if k > 0:
        pos = boundary_divergence_demo(scenario, 1e-3)
        checks.append(Check("boundary_positive_shift", 0.0, 0.0,
                            pos.classification == Divergence.BEQUEST_LIMIT_VIOLATED,
                            f"classified {pos.classification.value} at age {pos.age}"))

    worst = 0.0
    ages = np.arange(s, end + 0.5, 1.0)
    for b in (0.0, 1.0, 10.0):
        lp = PreferenceParams.log(b)
        tont = consumption_rate(hz, ages, lp, market, settings, entry_age=s)
        dec = decumulation_log(hz, ages, b, market.rho, settings)
        worst = max(worst, float(np.max(np.abs(tont - dec) / tont)))
    checks.append(_check("decumulation_log_equality", worst, 1e-14, "b in {0, 1, 10}"))

    g = prefs.gamma if not prefs.log_utility else 0.25
    bg = beta_of(market, PreferenceParams(gamma=g))
    d_ages, d_c = integrate_decumulation_backward(hz, g, bg, s, settings.max_age)
    sel = d_ages <= end
    closed = decumulation_no_bequest(hz, d_ages[sel], g, bg, settings)
    checks.append(_check("decumulation_no_bequest_ode", np.max(np.abs(d_c[sel] / closed - 1.0)), 1e-8,
                         f"gamma = {g}"))

    tiny = 1e-8
    bb = prefs.b if prefs.b > 0 else 3.0
    tp = PreferenceParams(gamma=tiny, b=bb)
    f50 = decumulation_rhs(hz, tiny, beta_of(market, tp), bb)
    f22 = consumption_rhs(hz, bequest_multiple(tp), beta_of(market, tp))
    worst = 0.0
    for t in np.linspace(s, end, 9):
        for c in (0.02, 0.05, 0.1):
            worst = max(worst, abs(f50(t, c) - f22(t, c) / c) / (c + hz.hazard(t) + abs(market.rho)))
    checks.append(_check("decumulation_reduces_to_tontine", worst, 1e-6, "gamma = 1e-8"))
    return checks


def regime_of(scenario) -> Regime:
    return regime(scenario.prefs, beta_of(scenario.market, scenario.prefs))
