"""Command line entry point: ``filtrage {simulate,run,verify,list}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config, resolve
from .experiments import REGISTRY, ExperimentError, defaults, simulate_experiment, verify_all
from .reports import ReportError, emit_reports

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("filtrage")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="filtrage", description="Characteristics under filtration shrinkage")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="simulate the configured experiments and save the paths")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    r = sub.add_parser("run", help="run the configured experiments and write reports")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    v = sub.add_parser("verify", help="run the registry (or a subset) and gate on the comparison rows")
    v.add_argument("--config")
    v.add_argument("--only", help="comma-separated experiment ids")
    v.add_argument("--out", required=True)
    sub.add_parser("list", help="print the experiment registry")
    return p


def _configs(args):
    cfg = load_config(getattr(args, "config", None), defaults())
    only = None
    if getattr(args, "only", None):
        only = [s.strip() for s in args.only.split(",") if s.strip()]
    return resolve(defaults(), cfg, only)


def _simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for c in _configs(args):
        bundle = simulate_experiment(c)
        arrays = {f"series_{k}": v for k, v in bundle.series.items()}
        arrays.update({f"meta_{k}": v for k, v in bundle.meta.items()})
        for k, ev in bundle.jumps.items():
            arrays.update({f"jumps_{k}_{f}": getattr(ev, f) for f in ("path", "index", "time", "mark")})
        arrays["times"] = bundle.grid.times
        np.savez_compressed(out / f"{c.experiment}.npz", **arrays)
        print(f"{c.experiment}: {bundle.n_paths} paths -> {out / (c.experiment + '.npz')}")
    return EXIT_OK


def _run(args) -> int:
    results = verify_all(_configs(args))
    emit_reports(results, args.out)
    code = EXIT_OK
    for res in results:
        ok = sum(r.passed for r in res.rows)
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.experiment}: {ok}/{len(res.rows)} rows ({res.timings.get('total', 0):.1f}s)")
        for r in res.failures():
            print(f"    t={r.t:g} {r.quantity}: mc={r.mc_estimate:.6g} oracle={r.oracle:.6g} "
                  f"err={r.abs_err:.3g} tol={r.tolerance:.3g}")
        if not res.passed:
            code = EXIT_FAIL
    return code


def _list(args) -> int:
    for k, e in REGISTRY.items():
        d = e.defaults
        print(f"{k:18s} n={d.n_paths:<7d} steps={d.steps:<4d} T={d.horizon:g}  {e.example}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"simulate": _simulate, "run": _run, "verify": _run, "list": _list}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExperimentError, ReportError, OSError, MemoryError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
