"""Tabular data behind the strategy figures.

Every table is long-format: one row per grid point. Cells that fail the
feasibility condition are kept with empty values and a ``reason``.

CSV layout: ``#``-prefixed metadata lines (``# key=value``), then a header
row, then data rows. Columns per figure id:

1. ``age, mcbr, beta, bequest_prop, reason``
2. ``gamma, b, age, bequest_prop, reason``
3. ``gamma, b, age, E_C_pv, reason``
4. ``gamma, b, age, E_B_pv, reason``
5. ``gamma, b, age, E_I_pv, reason``
6. ``gamma, kind, x, value`` where ``kind`` is ``density`` (``x`` = bequest,
   ``value`` = pdf) or a summary statistic (``x`` empty).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .annuity import annuity_factor
from .paths import bequest_distribution, expected_bequest_pv, expected_consumption_pv, expected_income_pv
from .scenario import ScenarioConfig
from .strategy import InfeasibleScenarioError, bequest_proportion

FIGURE_IDS = (1, 2, 3, 4, 5, 6)
VALUE_COLUMN = {2: "bequest_prop", 3: "E_C_pv", 4: "E_B_pv", 5: "E_I_pv"}


@dataclass(frozen=True)
class FigureSpec:
    figure_id: int
    mcbr_grid: tuple = (0.01, 0.1, 1.0)
    beta_grid: tuple = (0.01, 0.02, 0.05, 0.1)
    b_grid: tuple = (0.0, 1.0, 3.0, 10.0, 30.0, 60.0)
    gamma_set: tuple = (0.8, 0.25, -0.08225, -10.0)
    age_start: float = 65.0
    age_stop: float = 105.0
    age_step: float = 1.0
    density_age: float = 95.0
    density_b: float = 3.0
    density_gammas: tuple = (-0.08225, 0.8)
    density_points: int = 200
    base: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __post_init__(self):
        if self.figure_id not in FIGURE_IDS:
            raise ValueError(f"figure id must be one of 1..6, got {self.figure_id}")
        for name in ("mcbr_grid", "beta_grid", "b_grid", "gamma_set", "density_gammas"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        if any(x <= -1 for x in self.mcbr_grid + self.beta_grid):
            raise ValueError("MCBR and beta grids must exceed -1")
        if not self.age_step > 0 or self.age_stop < self.age_start:
            raise ValueError("invalid age range")
        if self.density_points < 2:
            raise ValueError("density_points must be at least 2")

    @property
    def ages(self) -> np.ndarray:
        n = int(round((self.age_stop - self.age_start) / self.age_step))
        return self.age_start + self.age_step * np.arange(n + 1)

    def metadata(self) -> dict:
        sc = self.base.to_dict()
        meta = {"figure": self.figure_id, "market": sc["market"], "mortality": sc["mortality"],
                "entry_age": self.base.entry_age, "quadrature": sc["quadrature"]}
        if self.figure_id == 1:
            meta.update(mcbr_grid=list(self.mcbr_grid), beta_grid=list(self.beta_grid))
        elif self.figure_id == 6:
            meta.update(age=self.density_age, b=self.density_b, gammas=list(self.density_gammas))
        else:
            meta.update(b_grid=list(self.b_grid), gamma_set=list(self.gamma_set))
        return meta


def proportion_from_mcbr(hazard, t, mcbr_value: float, beta_value: float, settings):
    """Bequest proportion ``1 / (1 + (MCBR - beta) A(t, beta))``."""
    a = annuity_factor(hazard, t, beta_value, settings)
    return 1.0 / (1.0 + (mcbr_value - beta_value) * a)


def figure1(spec: FigureSpec) -> list[dict]:
    sc = spec.base
    ages = spec.ages
    rows = []
    for mc in spec.mcbr_grid:
        for bv in spec.beta_grid:
            a_s = float(annuity_factor(sc.mortality, sc.entry_age, bv, sc.quadrature))
            margin = 1.0 + (mc - bv) * a_s
            values = proportion_from_mcbr(sc.mortality, ages, mc, bv, sc.quadrature) if margin > 0 else None
            for j, age in enumerate(ages):
                rows.append({
                    "age": float(age), "mcbr": mc, "beta": bv,
                    "bequest_prop": None if values is None else float(values[j]),
                    "reason": "" if values is not None else f"infeasible: margin {margin!r}",
                })
    return rows


def _scenario(base: ScenarioConfig, gamma: float, b: float) -> ScenarioConfig:
    return replace(ScenarioConfig.baseline(gamma=gamma, b=b), market=base.market, mortality=base.mortality,
                   entry_age=base.entry_age, initial_wealth=base.initial_wealth,
                   end_age=base.end_age, quadrature=base.quadrature)


def figures2to5(spec: FigureSpec) -> list[dict]:
    ages = spec.ages
    rows = []
    for g in spec.gamma_set:
        for b in spec.b_grid:
            try:
                sc = _scenario(spec.base, g, b)
                cols = {
                    "bequest_prop": bequest_proportion(sc.mortality, ages, sc.prefs, sc.market,
                                                       sc.quadrature, entry_age=sc.entry_age),
                    "E_C_pv": expected_consumption_pv(sc, ages),
                    "E_B_pv": expected_bequest_pv(sc, ages),
                    "E_I_pv": expected_income_pv(sc, ages),
                }
                reason = ""
            except InfeasibleScenarioError as exc:
                cols, reason = None, f"infeasible: margin {exc.margin!r}"
            for j, age in enumerate(ages):
                row = {"gamma": g, "b": b, "age": float(age)}
                for name in VALUE_COLUMN.values():
                    row[name] = None if cols is None else float(np.atleast_1d(cols[name])[j])
                row["reason"] = reason
                rows.append(row)
    return rows


def figure6(spec: FigureSpec) -> list[dict]:
    rows = []
    for g in spec.density_gammas:
        sc = _scenario(spec.base, g, spec.density_b)
        s = bequest_distribution(sc, spec.density_age, quantiles=(0.05, 0.5, 0.95))
        for kind, value in (("mean", s.mean), ("median", s.median), ("mode", s.mode),
                            ("p05", s.quantiles[0.05]), ("p95", s.quantiles[0.95])):
            rows.append({"gamma": g, "kind": kind, "x": None, "value": value})
        if s.degenerate:
            continue
        lo, hi = s.quantile(0.001), s.quantile(0.999)
        for x in np.geomspace(lo, hi, spec.density_points):
            rows.append({"gamma": g, "kind": "density", "x": float(x), "value": float(s.pdf(x))})
    return rows


def figure_columns(figure_id: int) -> tuple:
    if figure_id == 1:
        return ("age", "mcbr", "beta", "bequest_prop", "reason")
    if figure_id == 6:
        return ("gamma", "kind", "x", "value")
    return ("gamma", "b", "age", VALUE_COLUMN[figure_id], "reason")


def figure_rows(spec: FigureSpec) -> list[dict]:
    if spec.figure_id == 1:
        return figure1(spec)
    if spec.figure_id == 6:
        return figure6(spec)
    return figures2to5(spec)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return repr(float(v))


def figure_csv(spec: FigureSpec, rows: list[dict] | None = None) -> str:
    rows = figure_rows(spec) if rows is None else rows
    cols = figure_columns(spec.figure_id)
    buf = io.StringIO()
    for key, value in spec.metadata().items():
        buf.write(f"# {key}={json.dumps(value, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in cols])
    return buf.getvalue()


def read_figure_csv(text: str) -> tuple[dict, list[dict]]:
    """Parse a figure CSV back into metadata and rows of floats (``None`` for blanks)."""
    lines = text.splitlines()
    meta = {}
    while lines and lines[0].startswith("#"):
        key, _, value = lines.pop(0)[2:].partition("=")
        meta[key] = json.loads(value)
    rows = []
    for raw in csv.DictReader(lines):
        row = {}
        for k, v in raw.items():
            if k in ("reason", "kind"):
                row[k] = v
            else:
                row[k] = float(v) if v != "" else None
        rows.append(row)
    return meta, rows


def is_finite_cell(v) -> bool:
    return v is not None and math.isfinite(v)
