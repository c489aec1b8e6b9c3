"""Finite tontine pool with heterogeneous members.

Members with a nonnegative tontine proportion (``S1``) share the tontine
account of a deceased ``S1`` member in proportion to their weights
``lambda_j alpha_j X_j``, the deceased included. Members with a negative
proportion (``S2``) are pseudo life-insurees: when one dies, the other
``S2`` members pay it ``-alpha_i X_i`` in proportion to the same weights, so
its estate is exactly ``(1 - alpha_i) X_i``. ``S2Rule.SELF_SHARE`` instead
charges the deceased its own weight share too, which mirrors the ``S1`` rule
and makes heterogeneous ``S2`` pools exactly fair in expectation. Credits
never cross between the subsets.

Deaths are Bernoulli per step with probability ``lambda dt``. Several deaths
in one step are handled one at a time in random order, each against the
state left by the previous one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .mortality import HazardDomainError


class PayerSolvencyError(ValueError):
    """An insuree death would push some payer's wealth to zero or below."""

    def __init__(self, message: str, pair: tuple, margin: float):
        super().__init__(message)
        self.pair = pair
        self.margin = margin


class EmptySubsetError(ZeroDivisionError):
    pass


class S2Rule(str, Enum):
    EXACT_ESTATE = "exact_estate"
    SELF_SHARE = "self_share"


@dataclass
class Member:
    id: str
    age: float
    wealth: float
    alpha: float
    mortality: object
    alpha_fn: object = None
    alive: bool = True

    def __post_init__(self):
        if self.alive and not self.wealth > 0:
            raise ValueError(f"member {self.id}: wealth must be positive")
        if self.alpha > 1:
            raise ValueError(f"member {self.id}: alpha must not exceed 1")
        if self.mortality.zero_hazard_age() > self.age:
            raise HazardDomainError(f"member {self.id}: hazard is negative at age {self.age:g}")

    @property
    def hazard(self) -> float:
        return float(self.mortality.hazard(self.age))

    @property
    def weight(self) -> float:
        return self.hazard * self.alpha * self.wealth


@dataclass
class PoolState:
    members: list
    clock: float = 0.0
    received: dict = field(default_factory=dict)
    donated: dict = field(default_factory=dict)
    estates: dict = field(default_factory=dict)
    s2_rule: S2Rule = S2Rule.EXACT_ESTATE

    def __post_init__(self):
        self.s2_rule = S2Rule(self.s2_rule)
        ids = [m.id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError("member ids must be unique")
        self._index = {m.id: m for m in self.members}
        for i in ids:
            self.received.setdefault(i, 0.0)
            self.donated.setdefault(i, 0.0)

    def __getitem__(self, member_id) -> Member:
        return self._index[member_id]

    @property
    def alive(self) -> list:
        return [m for m in self.members if m.alive]

    @property
    def s1(self) -> list:
        return [m for m in self.members if m.alive and m.alpha >= 0]

    @property
    def s2(self) -> list:
        return [m for m in self.members if m.alive and m.alpha < 0]

    def clone(self) -> "PoolState":
        return PoolState([replace(m) for m in self.members], self.clock,
                         dict(self.received), dict(self.donated), dict(self.estates), self.s2_rule)


@dataclass(frozen=True)
class CreditEvent:
    """Transfers caused by one death.

    ``shares`` maps member id to a positive amount. In ``S1`` the deceased
    pays every share; in ``S2`` every listed member pays its share to the
    deceased. Either way the shares sum to ``|alpha_i X_i|``.
    """

    time: float
    deceased: str
    subset: str
    shares: dict
    degenerate: bool

    @property
    def total(self) -> float:
        return math.fsum(self.shares.values())


def _subset_of(state, member):
    return state.s1 if member.alpha >= 0 else state.s2


def credit_shares_on_death(state: PoolState, deceased) -> CreditEvent:
    """Mortality-credit shares generated by the death of ``deceased``.

    Raises
    ------
    PayerSolvencyError
        For an insuree death that some payer in ``S2`` cannot afford.
    EmptySubsetError
        If the subset's total weight is zero while there is something to share.
    """
    i = state[deceased]
    if not i.alive:
        raise ValueError(f"member {deceased} is not alive")
    subset = _subset_of(state, i)
    name = "S1" if i.alpha >= 0 else "S2"
    amount = abs(i.alpha * i.wealth)
    if amount == 0:
        return CreditEvent(state.clock, i.id, name, {}, len(subset) == 1)
    weights = np.array([m.weight for m in subset])
    total = math.fsum(weights)
    if total == 0:
        raise EmptySubsetError(f"subset {name} has zero total weight")
    p = weights / total
    degenerate = len(subset) == 1
    if name == "S2" and state.s2_rule is S2Rule.EXACT_ESTATE and not degenerate:
        own = p[[m.id for m in subset].index(i.id)]
        if not own < 1.0:
            raise EmptySubsetError("no other S2 member carries weight")
        payers = [(m, pj / (1.0 - own)) for m, pj in zip(subset, p) if m.id != i.id]
    else:
        payers = list(zip(subset, p))
    shares = {m.id: amount * pj for m, pj in payers}
    if name == "S2":
        for m, _ in payers:
            if not m.wealth - shares[m.id] > 0:
                raise PayerSolvencyError(
                    f"death of {i.id} would leave {m.id} with wealth {m.wealth - shares[m.id]:.6g}",
                    (i.id, m.id), m.wealth / amount - shares[m.id] / amount,
                )
    return CreditEvent(state.clock, i.id, name, shares, degenerate)


def apply_death(state: PoolState, event: CreditEvent) -> None:
    """Move the credits of ``event`` and close the deceased's account."""
    i = state[event.deceased]
    if event.subset == "S1":
        state.donated[i.id] += abs(i.alpha * i.wealth)
        i.wealth -= i.alpha * i.wealth
        for j, amt in event.shares.items():
            state[j].wealth += amt
            state.received[j] += amt
    else:
        gross = event.total
        i.wealth += gross
        state.received[i.id] += gross
        for j, amt in event.shares.items():
            state[j].wealth -= amt
            state.donated[j] += amt
    state.estates[i.id] = i.wealth
    i.alive = False


def _refresh_alpha(state):
    for m in state.alive:
        if m.alpha_fn is not None:
            m.alpha = float(m.alpha_fn(m.age))


def step(state: PoolState, dt: float, rng: np.random.Generator) -> list:
    """Advance the pool by ``dt``: sample deaths, settle credits, age survivors.

    Returns the event log of this step as a list of dict rows.
    """
    _refresh_alpha(state)
    alive = state.alive
    lam = np.array([max(m.hazard, 0.0) for m in alive])
    if lam.size and lam.max() * dt >= 0.1:
        warnings.warn(f"max lambda*dt = {lam.max() * dt:.3f}; step too coarse for Bernoulli deaths",
                      stacklevel=2)
    dies = rng.random(len(alive)) < lam * dt
    dead = [alive[k] for k in np.flatnonzero(dies)]
    log = []
    for k in rng.permutation(len(dead)):
        event = credit_shares_on_death(state, dead[k].id)
        apply_death(state, event)
        for j, amt in event.shares.items():
            payer, payee = (event.deceased, j) if event.subset == "S1" else (j, event.deceased)
            log.append({"time": state.clock, "deceased": event.deceased, "subset": event.subset,
                        "payer": payer, "payee": payee, "amount": amt, "degenerate": event.degenerate})
    for m in state.alive:
        m.age += dt
    state.clock += dt
    return log


@dataclass(frozen=True)
class Footnote1Result:
    feasible: bool
    margin: float
    pair: tuple | None
    degenerate: bool


def footnote1_feasibility(state: PoolState) -> Footnote1Result:
    """Check that any insuree death leaves every ``S2`` payer with positive wealth.

    Needs ``p_j < X_j / (-alpha_i X_i)`` for all ``i, j`` in ``S2`` where ``p_j``
    is ``j``'s weight share. ``margin`` is the smallest slack; ``pair`` is the
    ``(deceased, payer)`` attaining it.
    """
    s2 = state.s2
    if not s2:
        raise ValueError("S2 is empty")
    weights = np.array([m.weight for m in s2])
    p = weights / weights.sum()
    wealth = np.array([m.wealth for m in s2])
    debt = np.array([-m.alpha * m.wealth for m in s2])
    slack = wealth[None, :] / debt[:, None] - p[None, :]
    i, j = np.unravel_index(np.argmin(slack), slack.shape)
    margin = float(slack[i, j])
    return Footnote1Result(margin > 0, margin, (s2[i].id, s2[j].id), len(s2) == 1)


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, rep])))


@dataclass
class Replications:
    ids: list
    received: np.ndarray
    donated: np.ndarray
    expected_rate: np.ndarray
    horizon: float
    events: list


def replicate(state: PoolState, replications: int, steps: int = 1, dt: float = 1.0 / 252.0,
              seed: int = 0, keep_events: bool = False) -> Replications:
    """Run independent copies of ``state`` forward and collect credit ledgers."""
    ids = [m.id for m in state.members]
    rec = np.zeros((replications, len(ids)))
    don = np.zeros((replications, len(ids)))
    start = state.clone()
    _refresh_alpha(start)
    expected = np.array([m.weight if m.alive else 0.0 for m in start.members])
    events = []
    for r in range(replications):
        st = start.clone()
        rng = replication_rng(seed, r)
        for _ in range(steps):
            log = step(st, dt, rng)
            if keep_events:
                events.extend(dict(row, replication=r) for row in log)
        rec[r] = [st.received[i] - start.received[i] for i in ids]
        don[r] = [st.donated[i] - start.donated[i] for i in ids]
    return Replications(ids, rec, don, np.abs(expected), steps * dt, events)


@dataclass(frozen=True)
class MemberFairness:
    id: str
    received_rate: float
    received_se: float
    donated_rate: float
    donated_se: float
    net_rate: float
    net_se: float
    expected_rate: float

    @property
    def fair(self) -> bool:
        return abs(self.net_rate) <= 3.0 * self.net_se

    @property
    def credit_rate_ok(self) -> bool:
        return abs(self.received_rate - self.expected_rate) <= 3.0 * self.received_se


def _mean_se(x):
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def fairness_report(runs: Replications) -> list:
    """Per-member mean credit rates with standard errors across replications."""
    if runs.received.shape[0] < 2:
        raise ValueError("need at least two replications")
    out = []
    h = runs.horizon
    for k, mid in enumerate(runs.ids):
        r_m, r_se = _mean_se(runs.received[:, k] / h)
        d_m, d_se = _mean_se(runs.donated[:, k] / h)
        n_m, n_se = _mean_se((runs.received[:, k] - runs.donated[:, k]) / h)
        out.append(MemberFairness(mid, r_m, r_se, d_m, d_se, n_m, n_se, float(runs.expected_rate[k])))
    return out


def alpha_from_schedule(scenario, resolution: float = 1.0 / 12.0):
    """Interpolating ``alpha*(t)`` for a scenario, tabulated once.

    Linear interpolation on a ``resolution`` grid keeps per-step cost flat;
    beyond the tabulated range the end value is held.
    """
    from .strategy import schedule

    n = int(round((scenario.end_age - scenario.entry_age) / resolution))
    ages = scenario.entry_age + resolution * np.arange(n + 1)
    alpha = schedule(scenario, ages).alpha_star
    return lambda t: float(np.interp(t, ages, alpha))


def pool_from_spec(data, base_dir=None) -> tuple:
    """Build a :class:`PoolState` from a pool spec.

    The spec is either a list of members or an object with ``members`` and
    optional ``dt``, ``steps`` and ``s2_rule``. Each member has ``age``,
    ``wealth``, optional ``id`` and ``mortality``, and either ``alpha`` or
    ``scenario`` (an inline config object or a path to one). Returns the state
    and a dict of run options.
    """
    from .mortality import GompertzMakehamParams
    from .scenario import ConfigError, load_scenario, scenario_from_dict

    options = {}
    if isinstance(data, dict):
        options = {k: data[k] for k in ("dt", "steps", "s2_rule") if k in data}
        data = data.get("members")
    if not isinstance(data, list):
        raise ConfigError("pool spec must be a list of members")
    if not data:
        raise ConfigError("pool spec has no members")
    members = []
    for n, raw in enumerate(data):
        if not isinstance(raw, dict):
            raise ConfigError(f"member {n} must be an object")
        for key in ("age", "wealth"):
            if key not in raw:
                raise ConfigError(f"member {n}: missing required key '{key}'")
        try:
            mortality = (GompertzMakehamParams.from_dict(raw["mortality"]) if "mortality" in raw
                         else GompertzMakehamParams())
            alpha_fn = None
            if "alpha" in raw:
                alpha = float(raw["alpha"])
            elif "scenario" in raw:
                ref = raw["scenario"]
                if isinstance(ref, str):
                    import os
                    sc = load_scenario(os.path.join(base_dir or ".", ref))
                else:
                    sc = scenario_from_dict(ref)
                alpha_fn = alpha_from_schedule(sc)
                alpha = alpha_fn(float(raw["age"]))
            else:
                raise ConfigError(f"member {n}: needs 'alpha' or 'scenario'")
            members.append(Member(str(raw.get("id", n)), float(raw["age"]), float(raw["wealth"]),
                                  alpha, mortality, alpha_fn))
        except ConfigError:
            raise
        except KeyError as exc:
            raise ConfigError(f"member {n}: missing required key {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"member {n}: {exc}") from exc
    try:
        state = PoolState(members, s2_rule=options.pop("s2_rule", S2Rule.EXACT_ESTATE))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return state, options
