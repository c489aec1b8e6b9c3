"""Optimal consumption, investment and bequest in a tontine with a bequest motive."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .annuity import QuadratureSettings, TruncationError, annuity_factor, annuity_factor_gauss  # noqa: E402
from .mortality import GompertzMakehamParams, HazardDomainError  # noqa: E402
from .paths import (  # noqa: E402
    bequest_distribution,
    expected_bequest_pv,
    expected_consumption_pv,
    expected_income_pv,
    expected_wealth,
    simulate_paths,
    wealth_closed_form,
)
from .scenario import ConfigError, ScenarioConfig, load_scenario  # noqa: E402
from .strategy import (  # noqa: E402
    InfeasibleScenarioError,
    MarketParams,
    PreferenceParams,
    Regime,
    beta,
    bequest_multiple,
    consumption_rate,
    level_gamma,
    mcbr,
    merton_weight,
    schedule,
)

__all__ = [
    "ConfigError", "GompertzMakehamParams", "HazardDomainError", "InfeasibleScenarioError",
    "MarketParams", "PreferenceParams", "QuadratureSettings", "Regime", "ScenarioConfig",
    "TruncationError", "annuity_factor", "annuity_factor_gauss", "bequest_distribution",
    "bequest_multiple", "beta", "consumption_rate", "expected_bequest_pv", "expected_consumption_pv",
    "expected_income_pv", "expected_wealth", "level_gamma", "load_scenario", "mcbr", "merton_weight",
    "schedule", "simulate_paths", "wealth_closed_form",
]
