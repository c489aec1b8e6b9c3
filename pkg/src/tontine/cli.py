"""Command-line interface.

Subcommands: ``schedule``, ``simulate``, ``pool``, ``figure``, ``verify``.
Exit codes: 0 success, 2 configuration error, 3 infeasible scenario,
4 numerical failure or failed verification.

Output files are written atomically. Each run with ``--out`` also writes
``<out>.manifest.json`` listing every file produced. Timestamps live only in
the manifest and follow ``SOURCE_DATE_EPOCH`` when it is set, so the data
files themselves are a pure function of config, flags and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .annuity import TruncationError
from .figures import FIGURE_IDS, FigureSpec, figure_csv
from .mortality import HazardDomainError
from .oracle import OdeBlowUpError, run_verification
from .paths import analytic_csv, bequest_distribution, simulate_paths, simulation_csv
from .pool import PayerSolvencyError, fairness_report, footnote1_feasibility, pool_from_spec, replicate
from .quadrature import QuadratureError
from .scenario import ConfigError, ScenarioConfig, canonical_hash, load_scenario
from .strategy import InfeasibleScenarioError, schedule

def _error(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4
THREADS_ENV = "TONTINE_THREADS"


@dataclass
class RunManifest:
    command: str
    config_hash: str | None
    seed: int | None
    tool_version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"command": self.command, "config_hash": self.config_hash, "seed": self.seed,
                "tool_version": self.tool_version, "started": self.started,
                "finished": self.finished, "outputs": sorted(self.outputs)}


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch is not None else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.name + suffix)


class _Outputs:
    """Collects outputs; writes them to ``--out`` (and siblings) or stdout."""

    def __init__(self, args, manifest: RunManifest):
        self.out = Path(args.out) if args.out else None
        self.manifest = manifest

    def primary(self, text: str) -> None:
        if self.out is None:
            sys.stdout.write(text)
        else:
            atomic_write(self.out, text)
            self.manifest.outputs.append(str(self.out))

    def sibling(self, suffix: str, text: str) -> None:
        if self.out is None:
            return
        path = _sibling(self.out, suffix)
        atomic_write(path, text)
        self.manifest.outputs.append(str(path))

    def close(self) -> None:
        if self.out is None:
            return
        self.manifest.finished = _timestamp()
        path = _sibling(self.out, ".manifest.json")
        self.manifest.outputs.append(str(path))
        atomic_write(path, _dump(self.manifest.to_dict()))


def _scenario(args) -> ScenarioConfig:
    sc = load_scenario(args.config) if getattr(args, "config", None) else ScenarioConfig.baseline()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "paths", None) is not None:
        overrides["paths"] = args.paths
    if getattr(args, "dt", None) is not None:
        overrides["dt"] = args.dt
    try:
        return replace(sc, **overrides) if overrides else sc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _age_grid(args, start: float, stop: float) -> np.ndarray:
    lo = start if args.from_age is None else args.from_age
    hi = stop if args.to_age is None else args.to_age
    step = 1.0 if args.step is None else args.step
    if not step > 0 or hi < lo:
        raise ConfigError("age range needs --step > 0 and --to-age >= --from-age")
    n = int(np.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(n + 1)


def cmd_schedule(args) -> int:
    sc = _scenario(args)
    ages = _age_grid(args, sc.entry_age, sc.end_age)
    if ages[0] < sc.entry_age:
        raise ConfigError("--from-age precedes the entry age")
    sched = schedule(sc, ages)
    out = _Outputs(args, RunManifest("schedule", sc.config_hash(), None, started=_timestamp()))
    out.primary(sched.to_csv())
    out.close()
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    ages = _age_grid(args, sc.entry_age, sc.end_age)
    meta = {"seed": sc.seed, "dt": sc.dt, "paths": sc.paths, "scenario_hash": sc.config_hash(),
            "tool_version": __version__}
    summaries = {}
    for age in (75.0, 85.0, 95.0, sc.end_age):
        if sc.entry_age < age <= sc.end_age:
            summaries[repr(age)] = bequest_distribution(sc, age).to_dict()
    meta["bequest_distribution"] = summaries
    if sc.paths == 0:
        text = analytic_csv(sc, ages)
        meta["mode"] = "analytic"
    else:
        result = simulate_paths(sc, record_ages=ages)
        text = simulation_csv(result)
        meta["mode"] = "monte_carlo"
        meta["max_rel_deviation_closed_form"] = result.max_rel_deviation
    out = _Outputs(args, RunManifest("simulate", sc.config_hash(), sc.seed, started=_timestamp()))
    out.primary(text)
    out.sibling(".meta.json", _dump(meta))
    out.close()
    return EXIT_OK


def cmd_pool(args) -> int:
    if not args.config:
        raise ConfigError("pool needs --config pointing at a pool spec")
    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read pool spec {args.config}: {exc}") from exc
    state, options = pool_from_spec(data, base_dir=os.path.dirname(os.path.abspath(args.config)))
    if state.s2:
        f1 = footnote1_feasibility(state)
        if not f1.feasible:
            raise PayerSolvencyError(
                f"payer solvency fails for deceased {f1.pair[0]} and payer {f1.pair[1]}",
                f1.pair, f1.margin)
    dt = args.dt if args.dt is not None else float(options.get("dt", 1.0 / 252.0))
    steps = int(options.get("steps", 1))
    seed = 0 if args.seed is None else args.seed
    reps = 10_000 if args.replications is None else args.replications
    if reps < 2:
        raise ConfigError("--replications must be at least 2")
    runs = replicate(state, reps, steps=steps, dt=dt, seed=seed, keep_events=True)
    report = fairness_report(runs)
    body = {
        "replications": reps, "steps": steps, "dt": dt, "seed": seed, "s2_rule": state.s2_rule.value,
        "spec_hash": canonical_hash(data),
        "all_fair": all(m.fair for m in report),
        "members": [{"id": m.id, "received_rate": m.received_rate, "received_se": m.received_se,
                     "donated_rate": m.donated_rate, "donated_se": m.donated_se,
                     "net_rate": m.net_rate, "net_se": m.net_se, "expected_rate": m.expected_rate,
                     "fair": m.fair, "credit_rate_ok": m.credit_rate_ok} for m in report],
    }
    cols = ("replication", "time", "deceased", "subset", "payer", "payee", "amount", "degenerate")
    lines = [",".join(cols)]
    for ev in runs.events:
        lines.append(",".join(repr(float(ev[c])) if c in ("time", "amount") else str(ev[c]) for c in cols))
    out = _Outputs(args, RunManifest("pool", canonical_hash(data), seed, started=_timestamp()))
    out.primary(_dump(body))
    out.sibling(".events.csv", "\n".join(lines) + "\n")
    out.close()
    return EXIT_OK


def cmd_figure(args) -> int:
    if args.figure not in FIGURE_IDS:
        raise ConfigError(f"--figure must be one of 1..6, got {args.figure}")
    base = load_scenario(args.config) if args.config else ScenarioConfig()
    spec = FigureSpec(args.figure, base=base)
    if any(v is not None for v in (args.from_age, args.to_age, args.step)):
        ages = _age_grid(args, spec.age_start, spec.age_stop)
        spec = replace(spec, age_start=float(ages[0]), age_stop=float(ages[-1]),
                       age_step=1.0 if args.step is None else args.step)
    out = _Outputs(args, RunManifest("figure", base.config_hash(), None, started=_timestamp()))
    out.primary(figure_csv(spec))
    out.close()
    return EXIT_OK


def default_suite() -> list[ScenarioConfig]:
    """One scenario per regime and utility branch."""
    return [
        ScenarioConfig.baseline(gamma=0.25, b=3.0),
        ScenarioConfig.baseline(gamma=0.8, b=3.0),
        ScenarioConfig.baseline(gamma=0.0, b=10.0),
        ScenarioConfig.baseline(gamma=0.25, b=0.0),
        ScenarioConfig.baseline(gamma=0.25, b=60.0),
    ]


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def cmd_verify(args) -> int:
    suite = [load_scenario(args.config)] if args.config else default_suite()
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(lambda sc: run_verification(sc, inject=args.inject_fault), suite))
    report = {"passed": all(c.passed for checks in results for c in checks), "scenarios": []}
    for sc, checks in zip(suite, results):
        report["scenarios"].append({"scenario_hash": sc.config_hash(), "prefs": sc.to_dict()["prefs"],
                                    "checks": [c.to_dict() for c in checks]})
    out = _Outputs(args, RunManifest("verify", canonical_hash([sc.to_dict() for sc in suite]), None,
                                     started=_timestamp()))
    out.primary(_dump(report))
    out.close()
    for checks in results:
        for c in checks:
            if not c.passed:
                _error(f"check {c.name} failed: error {c.max_error!r} > tolerance {c.tolerance!r}")
    return EXIT_OK if report["passed"] else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tontine", description="Optimal tontine-with-bequest strategies.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_help="scenario config (JSON)"):
        p.add_argument("--config", help=config_help)
        p.add_argument("--out", help="output file; stdout when omitted")
        return p

    def ages(p):
        p.add_argument("--from-age", type=float)
        p.add_argument("--to-age", type=float)
        p.add_argument("--step", type=float)

    p = common(sub.add_parser("schedule", help="optimal strategy schedule as CSV"))
    ages(p)
    p.set_defaults(func=cmd_schedule)

    p = common(sub.add_parser("simulate", help="Monte Carlo or analytic wealth summaries"))
    ages(p)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", type=float)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("pool", help="finite-pool fairness experiment"), "pool spec (JSON)")
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", type=float)
    p.set_defaults(func=cmd_pool)

    p = common(sub.add_parser("figure", help="figure data as long-format CSV"), "base scenario (JSON)")
    p.add_argument("--figure", type=int, required=True)
    ages(p)
    p.set_defaults(func=cmd_figure)

    p = common(sub.add_parser("verify", help="cross-check closed forms against numerical oracles"))
    p.add_argument("--inject-fault", choices=["beta-sign"], help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, HazardDomainError) as exc:
        _error(f"config: {exc}")
        return EXIT_CONFIG
    except InfeasibleScenarioError as exc:
        _error(f"{exc}; margin = {exc.margin!r}")
        return EXIT_INFEASIBLE
    except PayerSolvencyError as exc:
        _error(f"{exc}; worst pair = {exc.pair}, margin = {exc.margin!r}")
        return EXIT_INFEASIBLE
    except (TruncationError, QuadratureError, OdeBlowUpError, FloatingPointError) as exc:
        _error(f"numerical failure: {exc}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
