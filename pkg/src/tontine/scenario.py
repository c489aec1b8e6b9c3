"""Scenario bundle and its JSON representation.

Config layout::

    {
      "market":    {"r": 0.02, "mu": 0.05, "sigma": 0.2, "rho": 0.02},
      "prefs":     {"gamma": 0.25, "b": 3}            # or {"log_utility": true, "b": 3}
      "mortality": {"m": 83.43, "q": 10.94, "v": -0.0052},
      "scenario":  {"entry_age": 65, "initial_wealth": 1, "end_age": 105,
                    "dt": 0.003968253968253968, "paths": 10000, "seed": 12345},
      "quadrature": {"max_age": 130, "rel_tol": 1e-10, "abs_tol": 1e-12}
    }

``scenario`` and ``quadrature`` are optional; the other three are required.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

from .annuity import QuadratureSettings
from .mortality import GompertzMakehamParams
from .strategy import MarketParams, PreferenceParams


class ConfigError(ValueError):
    """Invalid or incomplete scenario configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    market: MarketParams = field(default_factory=MarketParams)
    prefs: PreferenceParams = field(default_factory=PreferenceParams)
    mortality: GompertzMakehamParams = field(default_factory=GompertzMakehamParams)
    entry_age: float = 65.0
    initial_wealth: float = 1.0
    end_age: float = 105.0
    dt: float = 1.0 / 252.0
    paths: int = 10_000
    seed: int = 12345
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)

    def __post_init__(self):
        if not self.initial_wealth > 0:
            raise ValueError("initial_wealth must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.end_age > self.entry_age:
            raise ValueError("end_age must exceed entry_age")
        if self.end_age >= self.quadrature.max_age:
            raise ValueError("end_age must be below the quadrature max_age")
        if self.paths < 0:
            raise ValueError("paths must be nonnegative")

    @classmethod
    def baseline(cls, gamma: float = 0.25, b: float = 3.0, **kwargs) -> "ScenarioConfig":
        """UK male, entry at 65, r = rho = 0.02, mu = 0.05, sigma = 0.2."""
        prefs = PreferenceParams.log(b) if gamma == 0 else PreferenceParams(gamma=gamma, b=b)
        return cls(prefs=prefs, **kwargs)

    def with_prefs(self, **kwargs) -> "ScenarioConfig":
        return replace(self, prefs=replace(self.prefs, **kwargs))

    def to_dict(self) -> dict:
        prefs = {"b": self.prefs.b}
        if self.prefs.log_utility:
            prefs["log_utility"] = True
        else:
            prefs["gamma"] = self.prefs.gamma
        return {
            "market": {"r": self.market.r, "mu": self.market.mu,
                       "sigma": self.market.sigma, "rho": self.market.rho},
            "prefs": prefs,
            "mortality": self.mortality.to_dict(),
            "scenario": {"entry_age": self.entry_age, "initial_wealth": self.initial_wealth,
                         "end_age": self.end_age, "dt": self.dt, "paths": self.paths,
                         "seed": self.seed},
            "quadrature": self.quadrature.to_dict(),
        }

    def config_hash(self) -> str:
        return canonical_hash(self.to_dict())


def canonical_hash(data) -> str:
    """SHA-256 of the canonical JSON form; insensitive to key order."""
    text = json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


def _section(data: dict, key: str, required: bool = True) -> dict:
    if key not in data:
        if required:
            raise ConfigError(f"missing required key '{key}'")
        return {}
    section = data[key]
    if not isinstance(section, dict):
        raise ConfigError(f"'{key}' must be an object")
    return section


def _number(section: dict, path: str, key: str, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"missing required key '{path}.{key}'")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"'{path}.{key}' must be a finite number")
    return float(value)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    try:
        mk = _section(data, "market")
        market = MarketParams(
            r=_number(mk, "market", "r"), mu=_number(mk, "market", "mu"),
            sigma=_number(mk, "market", "sigma"), rho=_number(mk, "market", "rho"),
        )
        pr = _section(data, "prefs")
        b = _number(pr, "prefs", "b")
        if pr.get("log_utility", False):
            prefs = PreferenceParams.log(b)
        else:
            prefs = PreferenceParams(gamma=_number(pr, "prefs", "gamma"), b=b)
        mo = _section(data, "mortality")
        mortality = GompertzMakehamParams(
            m=_number(mo, "mortality", "m"), q=_number(mo, "mortality", "q"),
            v=_number(mo, "mortality", "v"),
        )
        qd = _section(data, "quadrature", required=False)
        base = QuadratureSettings()
        quadrature = QuadratureSettings(
            max_age=_number(qd, "quadrature", "max_age", base.max_age),
            rel_tol=_number(qd, "quadrature", "rel_tol", base.rel_tol),
            abs_tol=_number(qd, "quadrature", "abs_tol", base.abs_tol),
        )
        sc = _section(data, "scenario", required=False)
        d = ScenarioConfig()
        paths = sc.get("paths", d.paths)
        seed = sc.get("seed", d.seed)
        if isinstance(paths, bool) or not isinstance(paths, int):
            raise ConfigError("'scenario.paths' must be an integer")
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("'scenario.seed' must be a nonnegative integer")
        return ScenarioConfig(
            market=market, prefs=prefs, mortality=mortality,
            entry_age=_number(sc, "scenario", "entry_age", d.entry_age),
            initial_wealth=_number(sc, "scenario", "initial_wealth", d.initial_wealth),
            end_age=_number(sc, "scenario", "end_age", d.end_age),
            dt=_number(sc, "scenario", "dt", d.dt),
            paths=paths, seed=seed, quadrature=quadrature,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(data)
