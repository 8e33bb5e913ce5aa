"""Command line: ``cart run``, ``cart reproduce`` and ``cart verify``.

Exit codes: 0 on completion, 2 on a validation error (bad file, bad field,
unknown key), 3 on a runtime failure.  Output files go to ``--out`` or, by
default, ``$CART_OUTPUT_DIR`` (``./cart_output`` when unset).

Trajectory CSV columns: ``t, agent, p0..p{n-1}, v0..v{n-1}, u0..u{m-1}, min_h``
(inputs on the final sample are blank).  Table CSV columns: ``label,
success_rate, success_ci_low, success_ci_high, collision_rate, mean_J,
std_J, min_h_min, min_h_mean, n_runs``.  Envelope CSV columns: ``t, mean_s,
s_bound, exceed_prob, prob_bound, sigma``.  Every CSV starts with ``#``
provenance lines carrying the resolved scenario and seed; JSON files carry
the same under ``"provenance"``; PNGs carry it in their Description field.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CartError, ConfigError

log = logging.getLogger("cart")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
OUTPUT_ENV = "CART_OUTPUT_DIR"


@dataclass
class SuiteSpec:
    """A named set of scenario variants run on shared seeds.

    ``variants`` maps a row label to ``(base scenario, overrides)``.
    """

    name: str
    variants: dict
    n_runs: int = None
    output_dir: Path = None
    extra_overrides: list = field(default_factory=list)

    def resolve(self):
        from .scenario import resolve
        return {label: resolve(base, list(ov) + list(self.extra_overrides))
                for label, (base, ov) in self.variants.items()}


def _d(level):
    return [f"disturbance.d_bar={level}", f"disturbance.gamma_bar={level}"]


def _kind(kind):
    return [f'policy.kind="{kind}"']


def _suites() -> dict:
    sc = {f"{kind}/d={d:g}": ("spacecraft_grid", _kind(kind) + _d(d))
          for d in (3e-4, 5e-3, 5e-2) for kind in ("cart_safety_only", "clf_cbf_qp", "cart_full")}
    return {
        "nonlinear_small": {"learned": ("nonlinear_small", _kind("learned_emulated")),
                            "safety-filter": ("nonlinear_small", [])},
        "nonlinear_large": {"learned": ("nonlinear_large", _kind("learned_emulated")),
                            "safety-filter": ("nonlinear_large", []),
                            "cart": ("nonlinear_large_cart", [])},
        "spacecraft_grid": sc,
        "leo_table": {"global": ("leo_table", _kind("global_reference") + _d(0.0)),
                      "safety-filter/small": ("leo_table", _kind("cart_safety_only") + _d(1e-2)),
                      "clf-cbf/large": ("leo_table", _kind("clf_cbf_qp") + _d(5e-2)),
                      "cart/large": ("leo_table", _kind("cart_full") + _d(5e-2))},
    }


SUITE_KEYS = ("nonlinear_small", "nonlinear_large", "spacecraft_grid", "leo_table")


def suite(key: str, n_runs=None, overrides=()) -> SuiteSpec:
    table = _suites()
    if key not in table:
        raise ConfigError("reproduce", f"unknown key {key!r}; known: {list(SUITE_KEYS)}")
    return SuiteSpec(key, table[key], n_runs, extra_overrides=list(overrides))


# --- artifacts -----------------------------------------------------------------

def provenance(specs: dict, overrides=()) -> dict:
    from .scenario import scenario_to_dict
    return {"cart_version": __version__, "overrides": list(overrides),
            "scenarios": {label: scenario_to_dict(s) for label, s in specs.items()},
            "seeds": {label: s.seed for label, s in specs.items()}}


def _header_lines(prov: dict):
    return ["# " + line for line in json.dumps(prov, sort_keys=True).splitlines()]


def write_csv(path, rows, prov):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in _header_lines(prov):
            fh.write(line + "\n")
        csv.writer(fh).writerows(rows)
    return path


def read_csv(path):
    """Rows of a CSV written here, with the provenance block split off."""
    head, body = [], []
    with open(path) as fh:
        for line in fh:
            (head if line.startswith("# ") else body).append(line)
    prov = json.loads("".join(h[2:] for h in head)) if head else None
    return prov, list(csv.reader(body))


def write_json(path, payload, prov):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"provenance": prov, **payload}, indent=2, sort_keys=True, default=float))
    return path


def trajectory_rows(res):
    K1, N, n = res.positions.shape
    m = res.inputs.shape[2]
    head = ["t", "agent"] + [f"p{k}" for k in range(n)] + [f"v{k}" for k in range(n)] + \
        [f"u{k}" for k in range(m)] + ["min_h"]
    rows = [head]
    for k in range(K1):
        for i in range(N):
            u = [repr(float(x)) for x in res.inputs[k, i]] if k < res.inputs.shape[0] else [""] * m
            rows.append([repr(float(res.times[k])), i] + [repr(float(x)) for x in res.positions[k, i]]
                        + [repr(float(x)) for x in res.velocities[k, i]] + u + [repr(float(res.min_h_series[k]))])
    return rows


TABLE_COLUMNS = ("success_rate", "success_ci_low", "success_ci_high", "collision_rate", "mean_J", "std_J",
                 "min_h_min", "min_h_mean", "n_runs")


def table_rows(summaries: dict):
    rows = [("label",) + TABLE_COLUMNS]
    for label, s in summaries.items():
        d = s.as_dict()
        rows.append((label,) + tuple(d[c] for c in TABLE_COLUMNS))
    return rows


def format_table(summaries: dict) -> str:
    w = max(len(k) for k in summaries) + 2
    lines = [f"{'policy':<{w}}{'success':>9}{'95% CI':>16}{'J':>12}{'min h':>10}"]
    for label, s in summaries.items():
        lo, hi = s.success_ci
        lines.append(f"{label:<{w}}{s.success_rate:>9.3f}{f'[{lo:.2f}, {hi:.2f}]':>16}{s.mean_J:>12.4g}"
                     f"{float(np.min(s.min_h)):>10.4f}")
    return "\n".join(lines)


def _plots(results: dict, spec, out: Path, prov):
    from . import plotting
    desc = json.dumps(prov, sort_keys=True)
    plotting.plot_trajectories(results, spec, out / "trajectories.png", desc)
    plotting.plot_min_h(results, out / "min_h.png", desc)


# --- commands ------------------------------------------------------------------

def cmd_run(scenario, overrides=(), output_dir=None, seed=None, runs=None, workers=1, plots=True) -> int:
    from .scenario import resolve
    from .sim import monte_carlo, run_scenario, summarize
    overrides = list(overrides)
    if seed is not None:
        overrides.append(f"sim.seed={int(seed)}")
    if runs is not None:
        overrides.append(f"sim.n_monte_carlo={int(runs)}")
    spec = resolve(scenario, overrides)
    out = Path(output_dir or os.environ.get(OUTPUT_ENV, "cart_output"))
    prov = provenance({spec.name: spec}, overrides)
    if spec.n_monte_carlo == 1:
        summary = summarize([run_scenario(spec, 0)])
    else:
        summary = monte_carlo(spec, workers=workers)
    for r in summary.runs:
        write_csv(out / "trajectories" / f"run_{r.run_index:03d}.csv", trajectory_rows(r), prov)
    metrics = summary.as_dict()
    metrics["runs"] = [{"run": r.run_index, "success": r.success, "collided": r.collided,
                        "control_effort": r.control_effort, "min_h": r.min_h, "failure": r.failure}
                       for r in summary.runs]
    write_json(out / "metrics.json", {"metrics": metrics}, prov)
    if plots:
        _plots({spec.policy.kind: summary.runs[0]}, spec, out, prov)
    print(f"{spec.name}: success {summary.success_rate:.3f}, J {summary.mean_J:.4g}, "
          f"min min_h {float(np.min(summary.min_h)):.4f} ({summary.n_runs} runs) -> {out}")
    return EXIT_OK


def run_suite(s: SuiteSpec, workers=1):
    from .sim import compare_policies
    specs = s.resolve()
    n_runs = s.n_runs or max(sp.n_monte_carlo for sp in specs.values())
    return specs, compare_policies(specs, n_runs, workers)


def cmd_reproduce(key, output_dir=None, runs=None, workers=1, overrides=(), plots=True) -> int:
    s = suite(key, runs, overrides)
    specs, summaries = run_suite(s, workers)
    out = Path(output_dir or os.environ.get(OUTPUT_ENV, "cart_output")) / key
    prov = provenance(specs, overrides)
    write_csv(out / "table.csv", table_rows(summaries), prov)
    write_json(out / "metrics.json", {"table": {k: v.as_dict() for k, v in summaries.items()}}, prov)
    first = {}
    for label, summ in summaries.items():
        slug = label.replace("/", "_").replace("=", "")
        write_csv(out / "trajectories" / f"{slug}.csv", trajectory_rows(summ.runs[0]), prov)
        first[label] = summ.runs[0]
    if plots:
        _plots(first, next(iter(specs.values())), out, prov)
    print(format_table(summaries))
    print(f"-> {out}")
    return EXIT_OK


def cmd_verify(key, output_dir=None) -> int:
    from .checks import SUITES
    if key not in SUITES:
        raise ConfigError("verify", f"unknown key {key!r}; known: {sorted(SUITES)}")
    rep = SUITES[key]()
    print(rep.line())
    for name, val in rep.details.items():
        if name != "check":
            print(f"  {name}: {val}")
    if key == "envelope":
        from .plotting import plot_envelope
        out = Path(output_dir or os.environ.get(OUTPUT_ENV, "cart_output")) / "envelope"
        prov = {"cart_version": __version__, "suite": "envelope", "seed": 0}
        write_csv(out / "envelope.csv", rep.details["check"].rows(), prov)
        plot_envelope(rep.details["check"], out / "envelope.png", json.dumps(prov))
        print(f"-> {out}")
    return EXIT_OK if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cart", description="Safety and robust tracking filters for multi-agent "
                                 "motion planning: simulate scenarios, reproduce comparison suites, run checks.")
    ap.add_argument("--workers", type=int, default=1, help="worker processes for Monte Carlo runs")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario (file path or canned name)")
    r.add_argument("scenario")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a scenario field; value is a TOML literal")
    r.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./cart_output)")
    r.add_argument("--seed", type=int)
    r.add_argument("--runs", type=int, help="Monte Carlo runs (overrides sim.n_monte_carlo)")
    r.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("reproduce", help="run a canned comparison suite and print its table")
    p.add_argument("key", choices=SUITE_KEYS)
    p.add_argument("--out")
    p.add_argument("--runs", type=int)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--no-plots", action="store_true")

    v = sub.add_parser("verify", help="run a numerical invariant suite")
    v.add_argument("key", choices=("kkt", "lyapunov", "contraction", "envelope", "gradients", "lagrangian", "sdc"))
    v.add_argument("--out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args.scenario, args.overrides, args.out, args.seed, args.runs, args.workers,
                           not args.no_plots)
        if args.command == "reproduce":
            return cmd_reproduce(args.key, args.out, args.runs, args.workers, args.overrides, not args.no_plots)
        return cmd_verify(args.key, args.out)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"cart: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CartError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"cart: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
