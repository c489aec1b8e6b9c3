"""Wealth under the optimal strategy: closed forms, expectations, simulation.

Under the optimal controls

    d ln X = (r + (mu - r) w* + lambda - c*(1 + k lambda) - sigma^2 w*^2 / 2) dt + sigma w* dW

and because ``c*(1 + k lambda) = d ln c*/dt + beta + lambda`` this integrates to

    X(t) = x_s c*(s)/c*(t) exp[(r - beta + (mu - r) w* - sigma^2 w*^2 / 2)(t - s) + sigma w* W]

with ``W = W(t) - W(s)``. Present values are discounted at ``r`` and
expressed per unit of initial wealth.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .annuity import annuity_factor
from .strategy import _require_feasible, bequest_multiple, merton_weight

_NORMAL = NormalDist()


@dataclass(frozen=True)
class _Strategy:
    """Scalars of the optimal strategy plus a consumption-rate evaluator."""

    scenario: object
    beta: float
    k: float
    w: float

    @classmethod
    def of(cls, scenario) -> "_Strategy":
        b_ = _require_feasible(scenario.mortality, scenario.entry_age, scenario.prefs,
                               scenario.market, scenario.quadrature)
        return cls(scenario, b_, bequest_multiple(scenario.prefs),
                   merton_weight(scenario.market, scenario.prefs))

    def c(self, t):
        a = annuity_factor(self.scenario.mortality, t, self.beta, self.scenario.quadrature)
        return 1.0 / (self.k + (1.0 - self.beta * self.k) * a)

    @property
    def growth(self) -> float:
        """Exponent rate of the expected present values."""
        m = self.scenario.market
        return -self.beta + (m.mu - m.r) * self.w

    @property
    def log_var_rate(self) -> float:
        return (self.scenario.market.sigma * self.w) ** 2


def _elapsed(scenario, t):
    el = np.asarray(t, dtype=float) - scenario.entry_age
    if np.any(el < 0):
        raise ValueError("ages must not precede the entry age")
    return el


def _out(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def wealth_closed_form(scenario, t, wiener):
    """Wealth at age ``t`` given the Brownian displacement ``W(t) - W(s)``."""
    st = _Strategy.of(scenario)
    el = _elapsed(scenario, t)
    m = scenario.market
    drift = m.r - st.beta + (m.mu - m.r) * st.w - 0.5 * st.log_var_rate
    ratio = st.c(scenario.entry_age) / st.c(t)
    return _out(scenario.initial_wealth * ratio * np.exp(drift * el + m.sigma * st.w * np.asarray(wiener)))


def expected_wealth(scenario, t):
    st = _Strategy.of(scenario)
    el = _elapsed(scenario, t)
    m = scenario.market
    ratio = st.c(scenario.entry_age) / st.c(t)
    return _out(scenario.initial_wealth * ratio * np.exp((m.r - st.beta + (m.mu - m.r) * st.w) * el))


def expected_consumption_pv(scenario, t):
    """Expected present value of the monetary consumption rate, per unit initial wealth."""
    st = _Strategy.of(scenario)
    return _out(st.c(scenario.entry_age) * np.exp(st.growth * _elapsed(scenario, t)))


def expected_bequest_pv(scenario, t):
    """Expected present value of the bequest amount: ``k`` times consumption.

    Equivalent to dividing by the MCBR, and well defined (zero) when ``b = 0``.
    """
    return _out(bequest_multiple(scenario.prefs) * np.asarray(expected_consumption_pv(scenario, t)))


def expected_income_pv(scenario, t):
    """Expected present value of the mortality-credit rate; negative for insurees."""
    st = _Strategy.of(scenario)
    t = np.asarray(t, dtype=float)
    el = _elapsed(scenario, t)
    c_t = st.c(t)
    alpha = 1.0 - st.k * c_t
    lam = scenario.mortality.hazard(t)
    return _out(alpha * lam * np.exp(st.growth * el) * st.c(scenario.entry_age) / c_t)


@dataclass(frozen=True)
class LognormalSummary:
    mean: float
    median: float
    mode: float
    quantiles: dict
    log_mean: float
    log_sd: float

    @property
    def degenerate(self) -> bool:
        return self.log_sd == 0

    def quantile(self, p: float) -> float:
        if self.degenerate:
            return self.mean
        return math.exp(self.log_mean + self.log_sd * _NORMAL.inv_cdf(p))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.degenerate:
            raise ValueError("point mass has no density")
        z = (np.log(x) - self.log_mean) / self.log_sd
        return np.exp(-0.5 * z * z) / (x * self.log_sd * math.sqrt(2 * math.pi))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "median": self.median, "mode": self.mode,
                "quantiles": {repr(p): q for p, q in self.quantiles.items()},
                "log_mean": self.log_mean, "log_sd": self.log_sd}


def bequest_distribution(scenario, t: float, quantiles=(0.05, 0.5, 0.95)) -> LognormalSummary:
    """Distribution of the present-valued bequest amount at age ``t``.

    The bequest is lognormal with log-variance ``(sigma w*)^2 (t - s)``. With no
    risky exposure or no bequest motive it collapses to a point mass.
    """
    st = _Strategy.of(scenario)
    el = float(_elapsed(scenario, t))
    mean = st.k * float(st.c(scenario.entry_age)) * math.exp(st.growth * el)
    var = st.log_var_rate * el
    if var == 0 or mean == 0:
        return LognormalSummary(mean, mean, mean, {p: mean for p in quantiles},
                                math.log(mean) if mean > 0 else -math.inf, 0.0)
    log_mean = math.log(mean) - 0.5 * var
    sd = math.sqrt(var)
    summary = LognormalSummary(
        mean=mean,
        median=math.exp(log_mean),
        mode=math.exp(log_mean - var),
        quantiles={},
        log_mean=log_mean,
        log_sd=sd,
    )
    summary.quantiles.update({p: summary.quantile(p) for p in quantiles})
    return summary


@dataclass(frozen=True)
class WealthPath:
    """One simulated path on the recorded age grid."""

    ages: np.ndarray
    wiener: np.ndarray
    wealth: np.ndarray
    alpha: np.ndarray
    c_star: np.ndarray
    hazard: np.ndarray

    @property
    def bequest_account(self):
        return (1.0 - self.alpha) * self.wealth

    @property
    def tontine_account(self):
        return self.alpha * self.wealth

    @property
    def consumption(self):
        return self.c_star * self.wealth

    @property
    def mortality_credit(self):
        return self.alpha * self.hazard * self.wealth


@dataclass
class SimulationResult:
    """Simulated wealth on a recorded age grid for every path.

    ``wealth`` is the log-scheme simulation, ``wealth_closed`` the closed form
    driven by the same Brownian increments. ``max_rel_deviation`` is taken over
    every time step, not only the recorded ones.
    """

    scenario: object
    ages: np.ndarray
    wiener: np.ndarray
    wealth: np.ndarray
    wealth_closed: np.ndarray
    c_star: np.ndarray
    hazard: np.ndarray
    k: float
    dt: float
    max_rel_deviation: float

    @property
    def n_paths(self) -> int:
        return self.wealth.shape[0]

    @property
    def alpha(self):
        return 1.0 - self.k * self.c_star

    def path(self, i: int) -> WealthPath:
        return WealthPath(self.ages, self.wiener[i], self.wealth[i], self.alpha, self.c_star, self.hazard)

    def discounted(self, closed: bool = False):
        """Present-valued consumption, bequest and income per unit initial wealth.

        Returns three ``(paths, ages)`` arrays ``C, B, I``.
        """
        x = self.wealth_closed if closed else self.wealth
        sc = self.scenario
        disc = np.exp(-sc.market.r * (self.ages - sc.entry_age)) / sc.initial_wealth
        scaled = x * disc
        c = scaled * self.c_star
        b = scaled * (1.0 - self.alpha)
        i = scaled * self.alpha * self.hazard
        return c, b, i

    def summary(self, quantiles=(0.05, 0.5, 0.95)) -> list[dict]:
        c, b, inc = self.discounted()
        n = self.n_paths
        rows = []
        for j, age in enumerate(self.ages):
            row = {"age": float(age), "mean_X": float(self.wealth[:, j].mean())}
            for name, arr in (("C", c), ("B", b), ("I", inc)):
                col = arr[:, j]
                row[f"mean_{name}_pv"] = float(col.mean())
                row[f"se_{name}_pv"] = float(col.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
            qs = np.quantile(b[:, j], quantiles)
            for p, q in zip(quantiles, qs):
                row[f"q{round(p * 100):02d}_B"] = float(q)
            rows.append(row)
        return rows


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Independent stream per path, so adding paths never reshuffles earlier ones."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, path_index])))


def _step_grid(scenario, dt):
    n_steps = int(round((scenario.end_age - scenario.entry_age) / dt))
    if n_steps < 1:
        raise ValueError("dt is longer than the horizon")
    if not math.isclose(n_steps * dt, scenario.end_age - scenario.entry_age, rel_tol=1e-9):
        raise ValueError("dt must divide the horizon into whole steps")
    return scenario.entry_age + dt * np.arange(n_steps + 1)


def simulate_paths(scenario, paths: int | None = None, dt: float | None = None, seed: int | None = None,
                   record_ages=None, chunk: int = 512) -> SimulationResult:
    """Log-Euler simulation of optimally controlled wealth.

    Controls are deterministic and frozen at the start of each step. The
    closed form is evaluated on the same increments for a pathwise check.

    Parameters
    ----------
    record_ages : array_like, optional
        Ages kept in the result; snapped to the step grid. Defaults to whole
        years from entry to end age.
    """
    paths = scenario.paths if paths is None else paths
    dt = scenario.dt if dt is None else dt
    seed = scenario.seed if seed is None else seed
    st = _Strategy.of(scenario)
    m = scenario.market
    grid = _step_grid(scenario, dt)
    n_steps = grid.size - 1

    if record_ages is None:
        record_ages = np.arange(scenario.entry_age, scenario.end_age + 0.5, 1.0)
    rec = np.unique(np.clip(np.rint((np.asarray(record_ages, float) - scenario.entry_age) / dt), 0, n_steps)
                    .astype(int))

    lam = np.asarray(scenario.mortality.hazard(grid), dtype=float)
    c = st.c(grid)
    # drift of ln X with controls frozen at the left end of each step
    drift = m.r + (m.mu - m.r) * st.w + lam[:-1] - c[:-1] * (1.0 + st.k * lam[:-1]) - 0.5 * st.log_var_rate
    log_em = np.concatenate([[0.0], np.cumsum(drift * dt)])
    closed_drift = m.r - st.beta + (m.mu - m.r) * st.w - 0.5 * st.log_var_rate
    log_cf = np.log(c[0] / c) + closed_drift * (grid - scenario.entry_age)
    vol = m.sigma * st.w

    wiener = np.empty((paths, rec.size))
    wealth = np.empty((paths, rec.size))
    wealth_cf = np.empty((paths, rec.size))
    max_dev = 0.0
    sqdt = math.sqrt(dt)
    x0 = scenario.initial_wealth
    for start in range(0, paths, chunk):
        idx = range(start, min(paths, start + chunk))
        dw = np.stack([path_generator(seed, i).standard_normal(n_steps) for i in idx]) * sqdt
        w = np.concatenate([np.zeros((dw.shape[0], 1)), np.cumsum(dw, axis=1)], axis=1)
        em = x0 * np.exp(log_em + vol * w)
        cf = x0 * np.exp(log_cf + vol * w)
        max_dev = max(max_dev, float(np.max(np.abs(em / cf - 1.0))))
        wiener[idx.start:idx.stop] = w[:, rec]
        wealth[idx.start:idx.stop] = em[:, rec]
        wealth_cf[idx.start:idx.stop] = cf[:, rec]

    return SimulationResult(
        scenario=scenario,
        ages=grid[rec],
        wiener=wiener,
        wealth=wealth,
        wealth_closed=wealth_cf,
        c_star=c[rec],
        hazard=lam[rec],
        k=st.k,
        dt=dt,
        max_rel_deviation=max_dev,
    )


SIM_COLUMNS = ("age", "mean_X", "mean_C_pv", "mean_B_pv", "mean_I_pv", "q05_B", "q50_B", "q95_B")
ANALYTIC_COLUMNS = ("age", "expected_X", "expected_C_pv", "expected_B_pv", "expected_I_pv")


def _fmt(x) -> str:
    return repr(float(x))


def simulation_csv(result: SimulationResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SIM_COLUMNS)
    for row in result.summary():
        writer.writerow([_fmt(row[col]) for col in SIM_COLUMNS])
    return buf.getvalue()


def analytic_csv(scenario, ages) -> str:
    ages = np.asarray(ages, dtype=float)
    cols = (
        expected_wealth(scenario, ages),
        expected_consumption_pv(scenario, ages),
        expected_bequest_pv(scenario, ages),
        expected_income_pv(scenario, ages),
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ANALYTIC_COLUMNS)
    for j, age in enumerate(ages):
        writer.writerow([_fmt(age)] + [_fmt(np.atleast_1d(col)[j]) for col in cols])
    return buf.getvalue()
