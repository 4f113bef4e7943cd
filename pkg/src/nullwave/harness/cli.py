"""Command line interface.

Exit codes: 0 success (including a valid FAIL verdict or a measured
blowup), 1 validation or I/O error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..systems import check_derivative_bounds, check_null
from .config import RunConfig, SystemConfig
from .experiments import (convergence_study, scatter_study, simulate, strictly_decreasing,
                          summarize, sweep_lifespan, verdict_line)
from .persist import persist, write_json, write_table

log = logging.getLogger("nullwave")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class NumericalFailure(RuntimeError):
    pass


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _load(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg.validate()


def cmd_simulate(args) -> int:
    cfg = _load(args)
    result, _ = simulate(cfg)
    summary = summarize(result, cfg)
    out = cfg.output_dir(args.out)
    persist(result, out, summary, cfg.output.snapshot_format)
    print(f"simulate {cfg.system.name}: {verdict_line(result, summary)}")
    if result.termination == "nonfinite":
        raise NumericalFailure(result.message)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    res = sweep_lifespan(cfg, args.eps_list, workers=args.threads)
    out = cfg.output_dir(args.out)
    write_table(out / "sweep.csv", res.rows())
    write_json(out / "sweep.json", {"system": res.system, "slope": res.slope,
                                    "intercept": res.intercept, "residual": res.residual,
                                    "aborted": res.aborted, "entries": res.rows(),
                                    "config": cfg.to_dict()})
    slope = "n/a" if res.slope is None else f"{res.slope:.4f}"
    states = ",".join(e.termination for e in res.entries)
    print(f"sweep-lifespan {res.system}: slope={slope} [{states}]")
    if res.aborted:
        raise NumericalFailure("sweep aborted on a non-finite run")
    return EXIT_OK


def cmd_check_null(args) -> int:
    target = args.system
    if Path(target).suffix == ".toml":
        sc = RunConfig.load(target).system
    else:
        sc = SystemConfig(name=target, n=args.n)
    system = sc.build()
    seed = 0 if args.seed is None else args.seed
    report = check_null(system, radius=args.radius, n_samples=args.samples, seed=seed)
    bounds = check_derivative_bounds(system, seed=seed)
    out = Path(args.out) if args.out else RunConfig(system=sc).output_dir(f"runs/check-null/{system.name}")
    write_json(out / "null_report.json", {
        "system": system.name, "verdict": report.verdict(), "radius": report.radius,
        "samples": report.samples_used, "seed": report.seed,
        "conditions": {k: {"passed": c.passed, "violation": c.violation, "reason": c.reason}
                       for k, c in report.conditions().items()},
        "derivative_bounds": bounds,
    })
    print(report.verdict())
    return EXIT_OK


def cmd_convergence(args) -> int:
    cfg = _load(args)
    rows = convergence_study(cfg, args.levels)
    out = cfg.output_dir(args.out)
    write_table(out / "convergence.csv", rows)
    orders = [r["order"] for r in rows if r["order"] is not None]
    text = ",".join(f"{o:.3f}" for o in orders) if orders else "n/a"
    errors = ",".join(f"{r['error']:.3e}" for r in rows)
    print(f"convergence: orders={text} errors={errors}")
    return EXIT_OK


def cmd_scatter(args) -> int:
    cfg = _load(args)
    rows, result = scatter_study(cfg, args.times)
    out = cfg.output_dir(args.out)
    write_table(out / "scatter.csv", rows)
    dec_free = strictly_decreasing([r["free_defect"] for r in rows])
    dec_prof = strictly_decreasing([r["profile_metric"] for r in rows])
    print(f"scatter {cfg.system.name}: {result.termination} free_defect_decreasing={dec_free} "
          f"profile_metric_decreasing={dec_prof}")
    if result.termination == "nonfinite":
        raise NumericalFailure(result.message)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    # Shared options are accepted before or after the subcommand.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="seed for sampled checks (recorded in outputs)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker processes for sweeps")
    common.add_argument("--out", default=argparse.SUPPRESS,
                        help="output directory (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    ap = argparse.ArgumentParser(prog="nullwave", description=__doc__.splitlines()[0],
                                 parents=[common])
    ap.set_defaults(seed=None, threads=1, out=None, verbose=False)
    sub = ap.add_subparsers(dest="command", required=True)
    add = lambda name, **kw: sub.add_parser(name, parents=[common], **kw)  # noqa: E731

    p = add("simulate", help="single run from a TOML config")
    p.add_argument("config")
    p.set_defaults(func=cmd_simulate)

    p = add("sweep-lifespan", help="epsilon sweep with lifespan fit")
    p.add_argument("config")
    p.add_argument("--eps-list", type=_float_list, required=True)
    p.set_defaults(func=cmd_sweep)

    p = add("check-null", help="classify a system against the null condition")
    p.add_argument("system", help="catalog name or a TOML config with a [system] table")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--radius", type=float, default=0.25)
    p.add_argument("--samples", type=int, default=200)
    p.set_defaults(func=cmd_check_null)

    p = add("convergence", help="refinement study against d'Alembert")
    p.add_argument("config")
    p.add_argument("--levels", type=int, default=3)
    p.set_defaults(func=cmd_convergence)

    p = add("scatter", help="scattering metrics for (t, 2t) pairs")
    p.add_argument("config")
    p.add_argument("--times", type=_float_list, required=True)
    p.set_defaults(func=cmd_scatter)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
