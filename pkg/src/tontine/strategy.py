"""Closed-form optimal controls for a tontine member with a bequest motive.

Notation follows the usual CRRA life-cycle setup: utility ``x**gamma / gamma``
(relative risk aversion ``1 - gamma``), bequest weight ``b``, risk-free rate
``r``, risky drift ``mu`` and volatility ``sigma``, time preference ``rho``.

With the effective discount rate ``beta`` and bequest multiple
``k = b ** (1 / (1 - gamma))`` the optimal strategy is

    c*(t)       = 1 / (k + (1 - beta k) A(t, beta))
    1 - alpha*  = k c*(t)
    w*          = (mu - r) / ((1 - gamma) sigma**2)

and everything here is a thin layer over those three lines.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .annuity import DEFAULT_SETTINGS, QuadratureSettings, annuity_factor, annuity_factor_tv
from .mortality import check_hazard_domain

NEUTRAL_TOL = 1e-12


class InfeasibleScenarioError(ValueError):
    """The entry-age feasibility condition fails, so ``m(s) <= 0``."""

    def __init__(self, message: str, margin: float, age: float | None = None):
        super().__init__(message)
        self.margin = margin
        self.age = age


@dataclass(frozen=True)
class MarketParams:
    r: float = 0.02
    mu: float = 0.05
    sigma: float = 0.2
    rho: float = 0.02

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.mu < self.r:
            raise ValueError(f"mu must be at least r (mu={self.mu}, r={self.r})")

    @property
    def sharpe(self) -> float:
        return (self.mu - self.r) / self.sigma


@dataclass(frozen=True)
class PreferenceParams:
    """Risk exponent and bequest strength.

    ``gamma = 0`` is only reachable through ``log_utility=True``; the power
    utility ``x**gamma / gamma`` is undefined there.
    """

    gamma: float = 0.25
    b: float = 0.0
    log_utility: bool = False

    def __post_init__(self):
        if self.log_utility:
            if self.gamma != 0:
                raise ValueError("log_utility requires gamma == 0")
        else:
            if not self.gamma < 1:
                raise ValueError(f"gamma must be below 1, got {self.gamma}")
            if self.gamma == 0:
                raise ValueError("gamma == 0 needs log_utility=True")
        if not (self.b >= 0 and math.isfinite(self.b)):
            raise ValueError(f"b must be a finite nonnegative number, got {self.b}")

    @classmethod
    def log(cls, b: float) -> "PreferenceParams":
        return cls(gamma=0.0, b=b, log_utility=True)

    @property
    def risk_aversion(self) -> float:
        return 1.0 - self.gamma


class Regime(str, enum.Enum):
    ANNUITANT = "Annuitant"
    NEUTRAL = "Neutral"
    INSUREE = "Insuree"


def beta(market: MarketParams, prefs: PreferenceParams) -> float:
    """Effective discount rate of the consumption problem (``rho`` for log utility)."""
    if prefs.log_utility:
        return market.rho
    g = prefs.gamma
    inv = 1.0 / (1.0 - g)
    return market.r + (market.rho - market.r) * inv - 0.5 * g * market.sharpe ** 2 * inv ** 2


def merton_weight(market: MarketParams, prefs: PreferenceParams) -> float:
    """Constant proportion of wealth held in the risky asset."""
    return (market.mu - market.r) / ((1.0 - prefs.gamma) * market.sigma ** 2)


def bequest_multiple(prefs: PreferenceParams) -> float:
    """Desired bequest as a multiple of the yearly monetary consumption rate."""
    if prefs.b == 0:
        return 0.0
    if prefs.log_utility:
        return prefs.b
    return prefs.b ** (1.0 / (1.0 - prefs.gamma))


def mcbr(prefs: PreferenceParams) -> float:
    """Monetary consumption-bequest ratio, the reciprocal of the bequest multiple."""
    if prefs.b == 0:
        raise ValueError("MCBR is undefined without a bequest motive (b = 0)")
    return 1.0 / bequest_multiple(prefs)


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    margin: float

    def __bool__(self):
        return self.feasible


def feasibility(prefs: PreferenceParams, beta_value: float, annuity_at_entry: float) -> Feasibility:
    """Entry-age condition ``k beta < 1 + k / A(s, beta)``.

    ``margin = 1 + k / A_s - k beta``; positive margin means feasible.
    """
    if not annuity_at_entry > 0:
        raise ValueError("annuity factor at entry must be positive")
    k = bequest_multiple(prefs)
    margin = 1.0 + k / annuity_at_entry - k * beta_value
    return Feasibility(margin > 0, margin)


def regime(prefs: PreferenceParams, beta_value: float) -> Regime:
    """Sign of the tontine proportion: Annuitant (>0), Neutral (0), Insuree (<0)."""
    k = bequest_multiple(prefs)
    x = beta_value * k
    if abs(x - 1.0) <= NEUTRAL_TOL:
        return Regime.NEUTRAL
    return Regime.ANNUITANT if x < 1.0 else Regime.INSUREE


def _require_feasible(hazard, entry_age, prefs, market, settings):
    b_ = beta(market, prefs)
    a_s = annuity_factor(hazard, entry_age, b_, settings)
    feas = feasibility(prefs, b_, a_s)
    if not feas:
        k = bequest_multiple(prefs)
        raise InfeasibleScenarioError(
            f"infeasible at entry age {entry_age:g}: k*beta = {k * b_:.6g} is not below "
            f"1 + k/A(s,beta) = {1 + k / a_s:.6g} (margin {feas.margin:.6g})",
            feas.margin,
            entry_age,
        )
    return b_


def consumption_rate(hazard, t, prefs: PreferenceParams, market: MarketParams,
                     settings: QuadratureSettings = DEFAULT_SETTINGS, entry_age: float | None = None):
    """Optimal fractional consumption rate ``c*(t)`` (scalar or array of ages).

    Feasibility is checked at ``entry_age`` (defaults to the youngest ``t``).
    """
    ages = np.asarray(t, dtype=float)
    s = float(ages.min()) if entry_age is None else float(entry_age)
    b_ = _require_feasible(hazard, s, prefs, market, settings)
    k = bequest_multiple(prefs)
    a = annuity_factor(hazard, t, b_, settings)
    return 1.0 / (k + (1.0 - b_ * k) * a)


def bequest_proportion(hazard, t, prefs: PreferenceParams, market: MarketParams,
                       settings: QuadratureSettings = DEFAULT_SETTINGS, entry_age: float | None = None):
    """Share of wealth held in the bequest account, ``1 - alpha*(t) = k c*(t)``."""
    return bequest_multiple(prefs) * consumption_rate(hazard, t, prefs, market, settings, entry_age)


def level_residual(market: MarketParams, gamma: float) -> float:
    """``beta(gamma) - (mu - r) w*(gamma)``; continuous through ``gamma = 0``."""
    inv = 1.0 / (1.0 - gamma)
    s2 = market.sharpe ** 2
    b_ = market.r + (market.rho - market.r) * inv - 0.5 * gamma * s2 * inv ** 2
    return b_ - s2 * inv


def level_gamma(market: MarketParams, lo: float = -50.0, hi: float = 1.0 - 1e-9) -> float:
    """Risk exponent at which expected discounted consumption and bequest are level.

    Solves ``beta(gamma) = (mu - r) w*(gamma)`` by bisection on ``(lo, hi)``,
    halving until the bracket cannot shrink further in floating point.
    """
    if not market.mu > market.r:
        raise ValueError("level condition needs mu > r")
    f_lo, f_hi = level_residual(market, lo), level_residual(market, hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise ArithmeticError(f"no level root in ({lo}, {hi})")
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        f_mid = level_residual(market, mid)
        if f_mid == 0:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return lo if abs(f_lo) <= abs(f_hi) else hi


SCHEDULE_COLUMNS = (
    "age", "lambda", "annuity_A", "m_price", "c_star",
    "alpha_star", "bequest_prop", "w_star", "regime",
)


@dataclass(frozen=True, eq=False)
class StrategySchedule:
    """Deterministic age-indexed optimal strategy.

    ``beta`` and ``w_star`` are per-age arrays so that age-varying markets fit
    the same table; for constant markets they are flat.
    """

    entry_age: float
    ages: np.ndarray
    hazard: np.ndarray
    annuity: np.ndarray
    m: np.ndarray
    c_star: np.ndarray
    beta: np.ndarray
    w_star: np.ndarray
    k: float
    regimes: tuple
    metadata: dict = field(default_factory=dict)

    @property
    def bequest_prop(self) -> np.ndarray:
        return self.k * self.c_star

    @property
    def alpha_star(self) -> np.ndarray:
        return 1.0 - self.bequest_prop

    @property
    def mcbr(self) -> float:
        return math.inf if self.k == 0 else 1.0 / self.k

    def rows(self):
        for i, age in enumerate(self.ages):
            yield (
                float(age), float(self.hazard[i]), float(self.annuity[i]), float(self.m[i]),
                float(self.c_star[i]), float(self.alpha_star[i]), float(self.bequest_prop[i]),
                float(self.w_star[i]), self.regimes[i].value,
            )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SCHEDULE_COLUMNS)
        for row in self.rows():
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
        return buf.getvalue()


def _age_grid(scenario, ages):
    if ages is None:
        ages = np.arange(scenario.entry_age, scenario.end_age + 0.5, 1.0)
    ages = np.asarray(ages, dtype=float)
    if ages.ndim != 1 or ages.size == 0:
        raise ValueError("age grid must be a nonempty 1-d array")
    if ages.min() < scenario.entry_age:
        raise ValueError("schedule ages must not precede the entry age")
    return ages


def schedule(scenario, ages=None) -> StrategySchedule:
    """Optimal strategy for ``scenario`` on ``ages`` (default: yearly, entry to end age)."""
    ages = _age_grid(scenario, ages)
    hz = scenario.mortality
    check_hazard_domain(hz, scenario.entry_age)
    prefs, market, settings = scenario.prefs, scenario.market, scenario.quadrature
    b_ = _require_feasible(hz, scenario.entry_age, prefs, market, settings)
    k = bequest_multiple(prefs)
    a = annuity_factor(hz, ages, b_, settings)
    m = k + (1.0 - b_ * k) * a
    reg = regime(prefs, b_)
    n = ages.size
    return StrategySchedule(
        entry_age=scenario.entry_age,
        ages=ages,
        hazard=np.asarray(hz.hazard(ages), dtype=float),
        annuity=a,
        m=m,
        c_star=1.0 / m,
        beta=np.full(n, b_),
        w_star=np.full(n, merton_weight(market, prefs)),
        k=k,
        regimes=(reg,) * n,
    )


@dataclass(frozen=True)
class TimeVaryingMarket:
    """Deterministic age curves ``r(t), mu(t), sigma(t), rho(t)`` (vectorized callables)."""

    r: object
    mu: object
    sigma: object
    rho: object

    @classmethod
    def constant(cls, market: MarketParams) -> "TimeVaryingMarket":
        def flat(value):
            return lambda t: np.full(np.shape(t), value, dtype=float)

        return cls(flat(market.r), flat(market.mu), flat(market.sigma), flat(market.rho))


def beta_curve(curves: TimeVaryingMarket, prefs: PreferenceParams):
    """Age-dependent effective discount rate as a vectorized callable."""
    g = prefs.gamma
    inv = 1.0 / (1.0 - g)

    def curve(t):
        r, mu, sigma, rho = curves.r(t), curves.mu(t), curves.sigma(t), curves.rho(t)
        if prefs.log_utility:
            return np.asarray(rho, dtype=float)
        return r + (rho - r) * inv - 0.5 * g * ((mu - r) / sigma) ** 2 * inv ** 2

    return curve


def _regime_from_alpha(alpha):
    if abs(alpha) <= NEUTRAL_TOL:
        return Regime.NEUTRAL
    return Regime.ANNUITANT if alpha > 0 else Regime.INSUREE


def schedule_tv(scenario, curves: TimeVaryingMarket, ages=None) -> StrategySchedule:
    """Optimal strategy when market parameters vary deterministically with age.

    These formulas are a conjectured extension of the constant-parameter
    result; the returned metadata carries ``conjectural=True``.
    """
    ages = _age_grid(scenario, ages)
    hz = scenario.mortality
    check_hazard_domain(hz, scenario.entry_age)
    prefs, settings = scenario.prefs, scenario.quadrature
    k = bequest_multiple(prefs)
    bc = beta_curve(curves, prefs)

    a = annuity_factor_tv(hz, ages, bc, settings)
    if k:
        m = k + annuity_factor_tv(hz, ages, bc, settings, weight=lambda u: 1.0 - k * bc(u))
    else:
        m = a
    # positivity of the price is required at every age, not only at entry
    if np.any(m <= 0):
        i = int(np.argmax(m <= 0))
        raise InfeasibleScenarioError(
            f"age-varying strategy infeasible at age {ages[i]:g} (m = {m[i]:.6g})", float(m[i]), float(ages[i])
        )
    c = 1.0 / m
    w = (curves.mu(ages) - curves.r(ages)) / ((1.0 - prefs.gamma) * curves.sigma(ages) ** 2)
    return StrategySchedule(
        entry_age=scenario.entry_age,
        ages=ages,
        hazard=np.asarray(hz.hazard(ages), dtype=float),
        annuity=a,
        m=m,
        c_star=c,
        beta=np.asarray(bc(ages), dtype=float),
        w_star=np.asarray(w, dtype=float),
        k=k,
        regimes=tuple(_regime_from_alpha(x) for x in 1.0 - k * c),
        metadata={"conjectural": True},
    )
