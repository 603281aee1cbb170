"""Command-line entry point: ``dmwsim run | sweep | verify``.

CSV files carry a leading ``schema`` column naming the table layout and
version; floats are written with 12 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from pydantic import ValidationError

from . import config as cfgmod
from .oracles import run_suite
from .sim import Metrics, run, sweep

log = logging.getLogger("dmwsim")

OUTPUT_ENV = "DMWSIM_OUTPUT_DIR"

RUN_SCHEMA = "dmwsim.run/1"
SWEEP_SCHEMA = "dmwsim.sweep/1"
VERIFY_SCHEMA = "dmwsim.verify/1"
SERIES_SCHEMA = "dmwsim.series/1"

RUN_COLUMNS = [
    "schema", "policy", "n_users", "arrival_total", "slots", "warmup", "seed",
    "avg_total_queue", "throughput", "drop_rate", "mean_minislots",
    "max_weight_fraction", "collisions", "idles", "cap_hits", "ties",
    "verdict", "final_quarter_mean", "trend_slope",
]
SWEEP_COLUMNS = [
    "schema", "n_users", "delta", "arrival_total", "policy", "seed",
    "avg_total_queue", "throughput", "drop_rate", "mean_minislots",
    "max_weight_fraction", "cap_hits", "verdict",
]
VERIFY_COLUMNS = ["schema", "quantity", "analytic", "oracle", "tolerance", "trials", "passed", "note"]


def fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def write_csv(path, columns, rows):
    """Write ``rows`` (dicts) to ``path``; ``path='-'`` means stdout."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    text = buf.getvalue()
    if str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)


def run_row(m: Metrics, seed: int) -> dict:
    return {
        "schema": RUN_SCHEMA,
        "policy": m.policy,
        "n_users": m.n_users,
        "arrival_total": m.arrival_total,
        "slots": m.slots,
        "warmup": m.warmup,
        "seed": seed,
        "avg_total_queue": m.avg_total_queue,
        "throughput": m.throughput,
        "drop_rate": m.drop_rate,
        "mean_minislots": m.mean_minislots,
        "max_weight_fraction": m.max_weight_fraction,
        "collisions": m.collisions,
        "idles": m.idles,
        "cap_hits": m.cap_hits,
        "ties": m.ties,
        "verdict": str(m.verdict),
        "final_quarter_mean": m.verdict.final_quarter_mean,
        "trend_slope": m.verdict.slope,
    }


def sweep_row(m: Metrics, seed: int, delta: float) -> dict:
    return {
        "schema": SWEEP_SCHEMA,
        "n_users": m.n_users,
        "delta": delta,
        "arrival_total": m.arrival_total,
        "policy": m.policy,
        "seed": seed,
        "avg_total_queue": m.avg_total_queue,
        "throughput": m.throughput,
        "drop_rate": m.drop_rate,
        "mean_minislots": m.mean_minislots,
        "max_weight_fraction": m.max_weight_fraction,
        "cap_hits": m.cap_hits,
        "verdict": str(m.verdict),
    }


def _add_sim_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML experiment file")
    p.add_argument("--preset", help="built-in preset, e.g. paper-sec5")
    p.add_argument("--users", type=int)
    p.add_argument("--slots", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--buffer", help="buffer size in packets, or 'inf'")
    p.add_argument("--rates", type=int, nargs="+")
    p.add_argument("--arrival-total", type=float)
    p.add_argument("--arrival-per-user", type=float, nargs="+")
    p.add_argument("--policy", choices=["mw", "ab", "rs"])
    p.add_argument("--b", type=float, help="DMW-AB base")
    p.add_argument("--b-ladder", type=float, nargs="+")
    p.add_argument("--delta", type=float)
    p.add_argument("--collthr", type=int)
    p.add_argument("--idlethr", type=int)
    p.add_argument("--minislot-cap", type=int)
    p.add_argument("--carry", choices=["alpha", "tau"])
    p.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_ENV} or .)")


def _overrides(a: argparse.Namespace) -> dict:
    o = {}
    for key in ("preset", "users", "slots", "warmup", "seed", "rates", "arrival_total", "arrival_per_user", "policy", "output_dir"):
        val = getattr(a, key, None)
        if val is not None:
            o[key] = val
    if a.buffer is not None:
        o["buffer"] = a.buffer if a.buffer == "inf" else _int(a.buffer, "buffer")
    if a.b is not None:
        o["ab"] = {"b": a.b}
    rs = {}
    for key in ("b_ladder", "delta", "collthr", "idlethr", "minislot_cap", "carry"):
        val = getattr(a, key, None)
        if val is not None:
            rs[key] = val
    if rs:
        o["rs"] = rs
    for key in ("arrival_grid", "policies", "delta_grid", "users_grid", "jobs"):
        val = getattr(a, key, None)
        if val is not None:
            o.setdefault("sweep", {})[key] = val
    if getattr(a, "series", False):
        o["series"] = True
    return o


def _int(s, key):
    try:
        return int(s)
    except ValueError:
        raise ValueError(f"{key}: expected an integer or 'inf', got {s!r}") from None


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"])
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def _load(a) -> cfgmod.ExperimentFile:
    return cfgmod.load(a.config, _overrides(a))


def _outdir(exp: cfgmod.ExperimentFile) -> Path:
    return Path(exp.output_dir or os.environ.get(OUTPUT_ENV) or ".")


def cmd_run(a) -> int:
    exp = _load(a)
    sc = exp.sim_config()
    log.info("running %s: N=%d, total arrival %.4g, %d slots", sc.policy, sc.n_users, sc.arrivals.total, sc.slots)
    m = run(sc)
    out = Path(a.out) if a.out else _outdir(exp) / f"run_{sc.policy}_N{sc.n_users}_a{sc.arrivals.total:g}_s{sc.seed}.csv"
    write_csv(out, RUN_COLUMNS, [run_row(m, sc.seed)])
    if exp.series:
        series_path = out.with_name(out.stem + "_series.csv")
        rows = ({"schema": SERIES_SCHEMA, "slot": t, "total_queue": int(v)} for t, v in enumerate(m.total_queue_series))
        write_csv(series_path, ["schema", "slot", "total_queue"], rows)
    print(
        f"policy={m.policy} N={m.n_users} arrival={m.arrival_total:g} avg_total_queue={m.avg_total_queue:.6g} "
        f"throughput={m.throughput:.6g} mean_minislots={m.mean_minislots:.6g} "
        f"max_weight_fraction={m.max_weight_fraction:.6g} verdict={m.verdict} csv={out}"
    )
    return 0


def cmd_sweep(a) -> int:
    exp = _load(a)
    sw = exp.sweep
    if not sw.arrival_grid:
        raise ValueError("sweep.arrival_grid: must be nonempty")
    base = exp.sim_config()
    outdir = _outdir(exp)
    rows = [sweep_row(r.metrics, r.seed, exp.rs.delta) for r in sweep(base, sw.arrival_grid, sw.policies, jobs=sw.jobs)]
    write_csv(outdir / "fig1a.csv", SWEEP_COLUMNS, rows)
    log.info("wrote %s", outdir / "fig1a.csv")
    if sw.delta_grid:
        rows = []
        for d in sw.delta_grid:
            cfg_d = replace(base, rs=replace(base.rs, delta=float(d)))
            rows += [sweep_row(r.metrics, r.seed, float(d)) for r in sweep(cfg_d, sw.arrival_grid, ["rs"], jobs=sw.jobs)]
        write_csv(outdir / "fig1b.csv", SWEEP_COLUMNS, rows)
        log.info("wrote %s", outdir / "fig1b.csv")
    if sw.users_grid:
        rows = []
        for n in sw.users_grid:
            cfg_n = exp.sim_config(users=int(n))
            rows += [sweep_row(r.metrics, r.seed, exp.rs.delta) for r in sweep(cfg_n, sw.arrival_grid, ["rs"], jobs=sw.jobs)]
        write_csv(outdir / "fig1c.csv", SWEEP_COLUMNS, rows)
        log.info("wrote %s", outdir / "fig1c.csv")
    print(f"sweep done: {len(sw.arrival_grid)} arrival points x {len(sw.policies)} policies -> {outdir}")
    return 0


def cmd_verify(a) -> int:
    reports = run_suite(trials=a.trials, seed=a.seed, fault=a.inject_fault)
    rows = [
        {
            "schema": VERIFY_SCHEMA,
            "quantity": r.quantity,
            "analytic": r.analytic,
            "oracle": r.oracle,
            "tolerance": r.tolerance,
            "trials": r.trials,
            "passed": r.passed,
            "note": r.note,
        }
        for r in reports
    ]
    write_csv(a.out or "-", VERIFY_COLUMNS, rows)
    failed = [r.quantity for r in reports if not r.passed]
    if failed:
        log.error("%d oracle check(s) failed: %s", len(failed), ", ".join(failed))
        return 1
    log.info("all %d oracle checks passed", len(reports))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmwsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configuration")
    _add_sim_flags(p)
    p.add_argument("--out", help="metrics CSV path")
    p.add_argument("--series", action="store_true", help="also write the per-slot total queue")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="arrival-rate sweeps (Fig. 1 style tables)")
    _add_sim_flags(p)
    p.add_argument("--arrival-grid", type=float, nargs="+")
    p.add_argument("--policies", nargs="+", choices=["mw", "ab", "rs"])
    p.add_argument("--delta-grid", type=float, nargs="+")
    p.add_argument("--users-grid", type=int, nargs="+")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the oracle suite")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        return a.func(a)
    except ValidationError as e:
        print(f"dmwsim: config error: {_describe(e)}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"dmwsim: config error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"dmwsim: I/O error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
