"""Acceptance criteria 1-13. Each test records one PASS/FAIL line for the summary."""

import math
import time

import numpy as np
import pytest

from tontine.annuity import annuity_factor, annuity_factor_gauss
from tontine.mortality import GompertzMakehamParams
from tontine.oracle import (
    decumulation_log,
    hjb_bracket,
    hjb_residual,
    integrate_consumption_ode,
    ode_fd_residual,
)
from tontine.paths import (
    bequest_distribution,
    expected_bequest_pv,
    expected_consumption_pv,
    expected_income_pv,
    simulate_paths,
)
from tontine.pool import Member, PoolState, fairness_report, replicate
from tontine.scenario import ScenarioConfig
from tontine.strategy import (
    MarketParams,
    PreferenceParams,
    Regime,
    TimeVaryingMarket,
    bequest_multiple,
    beta,
    consumption_rate,
    level_gamma,
    level_residual,
    merton_weight,
    regime,
    schedule,
    schedule_tv,
)

UK = GompertzMakehamParams()
MARKET = MarketParams()


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def _report(acceptance, label, ok, detail, clock=None, budget=None):
    if clock is not None:
        detail = f"{detail} [{clock.elapsed:.2f}s, budget {budget:g}s]"
        ok = ok and clock.elapsed < budget
    acceptance(label, bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
    assert ok, detail


def test_01_merton_weights(acceptance):
    w8 = merton_weight(MARKET, PreferenceParams(gamma=0.8))
    w25 = merton_weight(MARKET, PreferenceParams(gamma=0.25))
    ok = abs(w8 - 3.75) <= 1e-12 and abs(w25 - 1.0) <= 1e-12
    _report(acceptance, "1 Merton weights", ok, f"w*(0.8)={w8!r}, w*(0.25)={w25!r}")


def test_02_level_gamma(acceptance):
    g = level_gamma(MARKET)
    res = level_residual(MARKET, g)
    ok = -0.0830 <= g <= -0.0820 and abs(res) < 1e-12
    _report(acceptance, "2 level-gamma root", ok, f"gamma={g!r}, residual={res:.1e}")


def test_03_bequest_multiple(acceptance):
    k = bequest_multiple(PreferenceParams(gamma=-0.0825, b=10.0))
    _report(acceptance, "3 bequest multiple", abs(k - 8.4) <= 0.05, f"k={k!r}")


def test_04_level_profile(acceptance):
    with Clock() as clk:
        sc = ScenarioConfig.baseline(gamma=level_gamma(MARKET), b=10.0)
        ages = np.arange(65.0, 106.0)
        c = expected_consumption_pv(sc, ages)
        b = expected_bequest_pv(sc, ages)
    spread = float(np.max(np.abs(c - c[0])))
    ok = spread < 1e-12 and abs(c[0] - 0.05) <= 0.005 and np.all(np.abs(b - 0.42) <= 0.04)
    _report(acceptance, "4 level profile", ok, f"E[C]={c[0]:.5f} (spread {spread:.1e}), E[B]={b[0]:.4f}",
            clk, 1.0)


def test_05_fig6_statistics(acceptance):
    with Clock() as clk:
        hi = bequest_distribution(ScenarioConfig.baseline(gamma=0.8, b=3.0), 95.0, quantiles=(0.95,))
        lo = bequest_distribution(ScenarioConfig.baseline(gamma=-0.08225, b=3.0), 95.0)
    ok = (0.015 <= hi.median <= 0.025 and 14 <= hi.quantiles[0.95] <= 17 and 75 <= hi.mean <= 105
          and abs(lo.mean - 0.17) <= 0.02 and abs(lo.median - 0.13) <= 0.015 and abs(lo.mode - 0.07) <= 0.01)
    detail = (f"gamma=0.8: median={hi.median:.4f} P95={hi.quantiles[0.95]:.2f} mean={hi.mean:.1f}; "
              f"gamma=-0.08225: mean={lo.mean:.3f} median={lo.median:.3f} mode={lo.mode:.3f}")
    _report(acceptance, "5 bequest distribution at 95", ok, detail, clk, 1.0)


def _random_scenarios(seed=606, per_regime=10):
    rng = np.random.default_rng(seed)
    found = {Regime.ANNUITANT: [], Regime.NEUTRAL: [], Regime.INSUREE: []}
    while any(len(v) < per_regime for v in found.values()):
        r = rng.uniform(0.01, 0.04)
        m = MarketParams(r=r, mu=r + rng.uniform(0.0, 0.05), sigma=rng.uniform(0.1, 0.3),
                         rho=rng.uniform(0.01, 0.05))
        g = rng.uniform(-10.0, 0.9)
        if abs(g) < 0.01:
            continue
        b_ = beta(m, PreferenceParams(gamma=g))
        want = min(found, key=lambda k: len(found[k]))
        if want is Regime.ANNUITANT:
            b = rng.uniform(0.0, 60.0)
        elif b_ <= 0.005:
            continue
        elif want is Regime.NEUTRAL:
            b = (1.0 / b_) ** (1.0 - g)
        else:
            b = (rng.uniform(1.2, 5.0) / b_) ** (1.0 - g)
        p = PreferenceParams(gamma=g, b=b)
        reg = regime(p, b_)
        if len(found[reg]) < per_regime:
            found[reg].append(ScenarioConfig(market=m, prefs=p))
    return [sc for v in found.values() for sc in v]


def test_06_ode_oracle(acceptance):
    with Clock() as clk:
        scenarios = _random_scenarios()
        fd = [ode_fd_residual(sc, np.linspace(65.0, 105.0, 81)) for sc in scenarios]
        rk = [integrate_consumption_ode(sc).max_rel_error for sc in scenarios]
    regimes = {regime(sc.prefs, beta(sc.market, sc.prefs)) for sc in scenarios}
    ok = len(scenarios) >= 30 and len(regimes) == 3 and max(fd) < 1e-6 and max(rk) < 1e-8
    _report(acceptance, "6 consumption ODE", ok,
            f"{len(scenarios)} scenarios, max FD residual {max(fd):.1e}, max RK4 error {max(rk):.1e}", clk, 30.0)


HJB_SCENARIOS = [
    (0.25, 3.0), (0.8, 3.0), (0.25, 0.0), (0.25, 60.0), (-0.08225, 10.0),
    (-10.0, 10.0), (0.5, 1.0), (-2.0, 30.0), (0.1, 5.0), (0.25, (1 / 0.015) ** 0.75),
]


def test_07_hjb_residual(acceptance):
    worst, reduced = 0.0, True
    with Clock() as clk:
        for g, b in HJB_SCENARIOS:
            sc = ScenarioConfig.baseline(gamma=g, b=b)
            for t in np.linspace(65.0, 105.0, 20):
                for x in np.geomspace(0.05, 20.0, 20):
                    worst = max(worst, hjb_residual(sc, t, x, relative=True))
            for t in (65.0, 85.0, 105.0):
                opt = hjb_bracket(sc, t, 1.0)
                for kw in ({"c_scale": 1.05}, {"c_scale": 0.95}, {"alpha_shift": 0.05},
                           {"alpha_shift": -0.05}, {"w_shift": 0.1}, {"w_shift": -0.1}):
                    reduced &= hjb_bracket(sc, t, 1.0, **kw) < opt
    _report(acceptance, "7 HJB residual", worst < 1e-8 and reduced,
            f"max |res|/|rho V| = {worst:.1e} over 10 scenarios x 400 points; perturbations reduce: {reduced}",
            clk, 10.0)


def test_08_pathwise_sde(acceptance):
    sc = ScenarioConfig.baseline(gamma=0.25, b=3.0, end_age=95.0)
    with Clock() as clk:
        d1 = simulate_paths(sc, paths=1000, dt=1 / 252, seed=8).max_rel_deviation
        d2 = simulate_paths(sc, paths=1000, dt=1 / 504, seed=8).max_rel_deviation
    ratio = d1 / d2
    ok = d1 < 5e-3 and abs(ratio - 2.0) <= 0.6
    _report(acceptance, "8 log-scheme vs closed form", ok,
            f"max dev {d1:.2e} at dt=1/252, {d2:.2e} at 1/504, ratio {ratio:.3f}", clk, 60.0)


@pytest.mark.slow
def test_09_monte_carlo_vs_analytic(acceptance):
    sc = ScenarioConfig.baseline(gamma=0.25, b=3.0, end_age=95.0)
    with Clock() as clk:
        res = simulate_paths(sc, paths=100_000, seed=2024, record_ages=[75.0, 85.0, 95.0])
        zs = []
        for arr, fn in zip(res.discounted(), (expected_consumption_pv, expected_bequest_pv, expected_income_pv)):
            se = arr.std(axis=0, ddof=1) / math.sqrt(arr.shape[0])
            zs.extend(np.abs(arr.mean(axis=0) - fn(sc, res.ages)) / se)
    _report(acceptance, "9 Monte Carlo vs analytic", max(zs) < 3.0,
            f"max |z| = {max(zs):.2f} over C, B, I at ages 75/85/95 (1e5 paths)", clk, 300.0)


def test_10_pool_fairness(acceptance):
    with Clock() as clk:
        homo = PoolState([Member(f"m{i}", 65.0, 1.0, 0.8, UK) for i in range(100)])
        rep = fairness_report(replicate(homo, 10_000, steps=1, dt=1.0, seed=0))
        hetero = PoolState([Member("a", 70.0, 1.0, 0.9, UK), Member("b", 80.0, 25.0, 0.3, UK)])
        rep2 = fairness_report(replicate(hetero, 10_000, steps=1, dt=1.0, seed=0))
    fair = sum(m.fair for m in rep)
    rate = sum(m.credit_rate_ok for m in rep)
    ok2 = all(m.fair and m.credit_rate_ok for m in rep2)
    ok = fair == 100 and rate == 100 and ok2
    _report(acceptance, "10 pool fairness", ok,
            f"homogeneous: {fair}/100 fair, {rate}/100 credit rate ok; heterogeneous pair ok: {ok2}", clk, 120.0)


def test_11_log_utility_equality(acceptance):
    ages = np.arange(65.0, 106.0)
    worst = 0.0
    for b in (0.0, 1.0, 10.0):
        tont = consumption_rate(UK, ages, PreferenceParams.log(b), MARKET)
        dec = decumulation_log(UK, ages, b, MARKET.rho)
        worst = max(worst, float(np.max(np.abs(tont - dec))))
    _report(acceptance, "11 log-utility equality", worst <= 1e-14, f"max |diff| = {worst:.1e}")


def test_12_time_varying_reduction(acceptance):
    worst = 0.0
    same_regime = True
    with Clock() as clk:
        for g, b in ((0.25, 3.0), (0.8, 3.0), (0.25, 60.0), (0.25, 0.0)):
            sc = ScenarioConfig.baseline(gamma=g, b=b)
            a = schedule(sc)
            t = schedule_tv(sc, TimeVaryingMarket.constant(sc.market))
            for x, y in zip(a.rows(), t.rows()):
                same_regime &= x[-1] == y[-1]
                num = np.abs(np.array(x[:-1]) - np.array(y[:-1]))
                worst = max(worst, float(np.max(num / np.maximum(1.0, np.abs(x[:-1])))))
    _report(acceptance, "12 constant curves reduce", worst <= 1e-10 and same_regime,
            f"max column difference {worst:.1e}", clk, 1.0)


def test_13_annuity_quadrature(acceptance):
    with Clock() as clk:
        rng = np.random.default_rng(13)
        worst = 0.0
        for _ in range(50):
            t, b = rng.uniform(55.0, 115.0), rng.uniform(-0.25, 0.1)
            a1, a2 = annuity_factor(UK, t, b), annuity_factor_gauss(UK, t, b)
            worst = max(worst, abs(a1 - a2) / a2)
        ages = np.arange(60.0, 116.0)
        mono, deriv = True, 0.0
        for b in (-0.25, -0.1, 0.0, 0.02, 0.1):
            vals = annuity_factor(UK, ages, b)
            mono &= bool(np.all(np.diff(vals) < 0))
            h = 1e-3
            d = (annuity_factor(UK, ages + h, b) - annuity_factor(UK, ages - h, b)) / (2 * h)
            rhs = (UK.hazard(ages) + b) * vals - 1.0
            deriv = max(deriv, float(np.max(np.abs(d - rhs) / np.maximum(1.0, np.abs(rhs)))))
        betas = np.linspace(-0.25, 0.1, 36)
        mono &= bool(np.all(np.diff([annuity_factor(UK, 70.0, b) for b in betas]) < 0))
    ok = worst <= 1e-8 and mono and deriv < 1e-6
    _report(acceptance, "13 annuity quadrature", ok,
            f"max scheme gap {worst:.1e}, monotone {mono}, derivative identity error {deriv:.1e}", clk, 10.0)
