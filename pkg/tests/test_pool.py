import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tontine.mortality import ConstantHazard, GompertzMakehamParams
from tontine.pool import (
    EmptySubsetError,
    Member,
    PayerSolvencyError,
    PoolState,
    S2Rule,
    alpha_from_schedule,
    apply_death,
    credit_shares_on_death,
    fairness_report,
    footnote1_feasibility,
    pool_from_spec,
    replicate,
    step,
)
from tontine.scenario import ConfigError, ScenarioConfig

UK = GompertzMakehamParams()


def pool(*specs, **kw):
    return PoolState([Member(f"m{i}", age, x, a, UK) for i, (age, x, a) in enumerate(specs)], **kw)


def test_two_identical_members_split_in_half():
    st_ = pool((70.0, 100.0, 1.0), (70.0, 100.0, 1.0))
    ev = credit_shares_on_death(st_, "m0")
    assert ev.shares == {"m0": pytest.approx(50.0), "m1": pytest.approx(50.0)}
    apply_death(st_, ev)
    assert st_["m1"].wealth == pytest.approx(150.0)
    assert st_.estates["m0"] == pytest.approx(50.0)


def test_s1_conservation_and_no_cross_subset():
    st_ = pool((70.0, 3.0, 0.9), (80.0, 1.0, 0.4), (75.0, 2.0, -0.3), (90.0, 5.0, 0.1))
    ev = credit_shares_on_death(st_, "m1")
    assert ev.subset == "S1"
    assert math.fsum(ev.shares.values()) == pytest.approx(0.4 * 1.0, abs=1e-12)
    assert "m2" not in ev.shares
    before = sum(m.wealth for m in st_.members)
    apply_death(st_, ev)
    assert sum(m.wealth for m in st_.members) == pytest.approx(before, rel=1e-15)


def test_s2_death_leaves_exact_estate():
    st_ = pool((70.0, 2.0, -0.5), (80.0, 1.0, -0.3), (75.0, 3.0, -1.0), (72.0, 1.0, 0.5))
    x = st_["m1"].wealth
    total = sum(m.wealth for m in st_.members)
    ev = credit_shares_on_death(st_, "m1")
    assert set(ev.shares) == {"m0", "m2"}
    apply_death(st_, ev)
    assert st_.estates["m1"] == pytest.approx((1 + 0.3) * x, rel=1e-15)
    assert st_.received["m1"] == pytest.approx(0.3 * x, rel=1e-15)
    assert sum(st_.donated[j] for j in ("m0", "m2")) == pytest.approx(0.3 * x, rel=1e-15)
    assert sum(m.wealth for m in st_.members) == pytest.approx(total, rel=1e-15)
    assert st_["m3"].wealth == 1.0


def test_s2_self_share_rule():
    st_ = pool((70.0, 2.0, -0.5), (80.0, 1.0, -0.3), (75.0, 3.0, -1.0), s2_rule=S2Rule.SELF_SHARE)
    w = {m.id: m.weight for m in st_.s2}
    p1 = w["m1"] / sum(w.values())
    ev = credit_shares_on_death(st_, "m1")
    assert set(ev.shares) == {"m0", "m1", "m2"}
    apply_death(st_, ev)
    assert st_.estates["m1"] == pytest.approx((1 + 0.3) - 0.3 * p1, rel=1e-14)


def test_singleton_subset_is_degenerate():
    st_ = pool((70.0, 2.0, 0.6))
    ev = credit_shares_on_death(st_, "m0")
    assert ev.degenerate and ev.shares == {"m0": pytest.approx(1.2)}
    apply_death(st_, ev)
    assert st_.estates["m0"] == pytest.approx(2.0)


def test_payer_solvency_violation():
    st_ = PoolState([Member("a", 70.0, 100.0, -5.0, UK), Member("b", 90.0, 1.0, -0.5, UK)])
    f = footnote1_feasibility(st_)
    w = np.array([m.weight for m in st_.s2])
    p = w / w.sum()
    x = np.array([100.0, 1.0])
    slack = x[None, :] / np.array([500.0, 0.5])[:, None] - p[None, :]
    i, j = np.unravel_index(np.argmin(slack), slack.shape)
    assert not f.feasible
    assert f.pair == ("ab"[i], "ab"[j]) and f.margin == pytest.approx(slack[i, j], rel=1e-12)
    with pytest.raises(PayerSolvencyError) as info:
        credit_shares_on_death(st_, "a")
    assert info.value.pair == ("a", "b")


def test_solvency_margin_grows_with_pool_size():
    margins = [footnote1_feasibility(pool(*[(75.0, 1.0, -0.5)] * n)).margin for n in (2, 10, 100)]
    assert margins[0] < margins[1] < margins[2]
    single = footnote1_feasibility(pool((75.0, 1.0, -0.5)))
    assert single.degenerate


def test_solvency_check_needs_s2():
    with pytest.raises(ValueError):
        footnote1_feasibility(pool((75.0, 1.0, 0.5)))


def test_zero_weight_subset():
    st_ = PoolState([Member("a", 70.0, 1.0, 0.5, ConstantHazard(0.0))])
    with pytest.raises(EmptySubsetError):
        credit_shares_on_death(st_, "a")


def test_member_validation():
    with pytest.raises(ValueError):
        Member("x", 70.0, 0.0, 0.5, UK)
    with pytest.raises(ValueError):
        Member("x", 70.0, 1.0, 1.5, UK)
    with pytest.raises(ValueError):
        Member("x", 40.0, 1.0, 0.5, UK)
    with pytest.raises(ValueError):
        PoolState([Member("x", 70.0, 1.0, 0.5, UK)] * 2)


def test_zero_hazard_no_deaths():
    st_ = PoolState([Member(f"m{i}", 70.0, 1.0, 0.5, ConstantHazard(0.0)) for i in range(5)])
    rng = np.random.default_rng(0)
    for _ in range(100):
        assert step(st_, 1.0, rng) == []
    assert len(st_.alive) == 5 and st_["m0"].age == pytest.approx(170.0)


def test_seeded_steps_reproducible():
    def run(seed):
        st_ = pool(*[(85.0, 1.0, 0.7)] * 30)
        rng = np.random.default_rng(seed)
        return [row for _ in range(20) for row in step(st_, 0.05, rng)]

    assert run(3) == run(3) and run(3)


def test_coarse_step_warns():
    st_ = pool((100.0, 1.0, 0.5))
    with pytest.warns(UserWarning):
        step(st_, 1.0, np.random.default_rng(0))


def test_event_log_never_crosses_subsets():
    st_ = pool(*[(90.0, 1.0, 0.6)] * 10, *[(90.0, 1.0, -0.2)] * 10)
    s1 = {m.id for m in st_.s1}
    rng = np.random.default_rng(1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        log = [row for _ in range(10) for row in step(st_, 0.5, rng)]
    assert log
    for row in log:
        assert (row["payer"] in s1) == (row["payee"] in s1) == (row["subset"] == "S1")


def test_schedule_alpha_drives_members():
    sc = ScenarioConfig.baseline(gamma=0.25, b=3.0)
    fn = alpha_from_schedule(sc)
    from tontine.strategy import schedule

    ref = schedule(sc, [70.0]).alpha_star[0]
    assert fn(70.0) == pytest.approx(ref, abs=1e-6)


def test_pool_spec_parsing(tmp_path):
    sc_path = tmp_path / "sc.json"
    sc_path.write_text(__import__("json").dumps(ScenarioConfig.baseline(gamma=0.25, b=60.0).to_dict()))
    state, opts = pool_from_spec({"dt": 0.5, "members": [
        {"id": "a", "age": 70, "wealth": 1, "alpha": 0.5},
        {"age": 66, "wealth": 2, "scenario": "sc.json"},
    ]}, base_dir=str(tmp_path))
    assert opts == {"dt": 0.5}
    assert state["1"].alpha < 0 and state["1"].alpha_fn is not None
    with pytest.raises(ConfigError):
        pool_from_spec([])
    with pytest.raises(ConfigError, match="wealth"):
        pool_from_spec([{"age": 70, "alpha": 0.5}])
    with pytest.raises(ConfigError):
        pool_from_spec([{"age": 70, "wealth": 1}])


def test_fairness_report_needs_replications():
    with pytest.raises(ValueError):
        fairness_report(replicate(pool((70.0, 1.0, 0.5), (70.0, 1.0, 0.5)), 1, dt=1.0))


def test_heterogeneous_s2_pool_fair_under_self_share():
    st_ = PoolState([Member("a", 75.0, 1.0, -0.4, UK), Member("b", 80.0, 3.0, -0.1, UK),
                     Member("c", 80.0, 2.0, -0.3, UK)], s2_rule=S2Rule.SELF_SHARE)
    rep = fairness_report(replicate(st_, 8000, dt=1.0, seed=4))
    assert all(m.fair for m in rep)


@pytest.mark.parametrize("n,reps", [(10, 20_000), (100, 2000), (1000, 200)])
def test_credit_rate_converges(n, reps):
    st_ = pool(*[(75.0, 1.0, 0.8)] * n)
    runs = replicate(st_, reps, dt=0.1, seed=n)
    per_rep = runs.received.mean(axis=1) / runs.horizon
    mean, se = per_rep.mean(), per_rep.std(ddof=1) / math.sqrt(reps)
    expected = UK.hazard(75.0) * 0.8
    assert abs(mean - expected) < 3.5 * se
    # error scale ~ 1/sqrt(n reps): rescaled SE is of order one
    assert 0.5 < se * math.sqrt(n * reps * 0.1) / math.sqrt(expected * 0.8) < 2.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(60.0, 100.0), st.floats(0.1, 10.0), st.floats(0.0, 1.0)),
                min_size=1, max_size=8), st.data())
def test_s1_shares_sum_exactly(members, data):
    st_ = pool(*members)
    i = data.draw(st.integers(0, len(members) - 1))
    m = st_[f"m{i}"]
    if m.alpha == 0:
        return
    ev = credit_shares_on_death(st_, m.id)
    assert ev.total == pytest.approx(m.alpha * m.wealth, rel=1e-10, abs=1e-15)
