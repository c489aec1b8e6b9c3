"""Gompertz-Makeham force of mortality.

The hazard is

    lambda(t) = v + exp((t - m) / q) / q

with modal-age parameter ``m``, dispersion ``q`` and Makeham constant ``v``.
Its integral over ``[s, t]`` is analytic, so survival probabilities never
need nested quadrature.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


class HazardDomainError(ValueError):
    """Raised when an age range contains negative hazard values."""


@dataclass(frozen=True)
class GompertzMakehamParams:
    """Hazard-curve parameters for a Gompertz-Makeham life.

    Defaults are the UK male fit for ages 50 and over.
    """

    m: float = 83.43
    q: float = 10.94
    v: float = -0.0052

    def __post_init__(self):
        if not (self.q > 0 and math.isfinite(self.q)):
            raise ValueError(f"q must be positive and finite, got {self.q}")
        if not (math.isfinite(self.m) and math.isfinite(self.v)):
            raise ValueError("m and v must be finite")

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        out = self.v + np.exp((t - self.m) / self.q) / self.q
        return out if out.ndim else float(out)

    def cumulative_hazard(self, s, t):
        """Integrated hazard over ``[s, t]`` (broadcasts over arrays).

        ``expm1`` keeps short intervals accurate; no ordering check here,
        callers needing ``s <= t`` go through :func:`cumulative_hazard`.
        """
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        gompertz = np.exp((s - self.m) / self.q) * np.expm1((t - s) / self.q)
        out = self.v * (t - s) + gompertz
        return out if out.ndim else float(out)

    def zero_hazard_age(self) -> float:
        """Age below which the hazard is negative (``-inf`` when ``v >= 0``)."""
        if self.v >= 0:
            return -math.inf
        return self.m + self.q * math.log(-self.v * self.q)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GompertzMakehamParams":
        return cls(m=float(data["m"]), q=float(data["q"]), v=float(data["v"]))


@dataclass(frozen=True)
class ConstantHazard:
    """Age-independent hazard; exponential lifetimes make annuity identities exact."""

    rate: float

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, self.rate)
        return out if out.ndim else float(out)

    def cumulative_hazard(self, s, t):
        out = self.rate * (np.asarray(t, dtype=float) - np.asarray(s, dtype=float))
        return out if np.ndim(out) else float(out)

    def zero_hazard_age(self) -> float:
        return -math.inf if self.rate >= 0 else math.inf


def hazard(params, t):
    """Force of mortality at age ``t`` (per year). May be negative for young ages."""
    return params.hazard(t)


def cumulative_hazard(params, s, t):
    """Integral of the hazard from age ``s`` to age ``t``.

    Raises
    ------
    ValueError
        If any ``s > t``.
    """
    if np.any(np.asarray(s) > np.asarray(t)):
        raise ValueError(f"cumulative hazard needs s <= t (got s={s}, t={t})")
    return params.cumulative_hazard(s, t)


def survival(params, s, t):
    """Probability of surviving from age ``s`` to age ``t``."""
    h = cumulative_hazard(params, s, t)
    out = np.exp(-np.asarray(h))
    return out if out.ndim else float(out)


def validate_hazard_domain(params, t_min: float) -> float:
    """First age ``>= t_min`` from which the hazard stays nonnegative.

    The hazard is increasing, so this is ``max(t_min, zero-crossing age)``.
    For the default UK fit the crossing sits near 52.1.
    """
    return max(float(t_min), params.zero_hazard_age())


def check_hazard_domain(params, t_min: float) -> None:
    """Reject an age range starting at ``t_min`` if the hazard is negative there."""
    threshold = validate_hazard_domain(params, t_min)
    if threshold > t_min:
        raise HazardDomainError(
            f"hazard is negative on [{t_min:g}, {threshold:.4f}); "
            f"earliest admissible age is {threshold:.4f}"
        )
