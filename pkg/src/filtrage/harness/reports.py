"""Comparison rows and the files written for them."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CSV_HEADER = ("experiment", "t", "quantity", "mc_estimate", "stderr", "oracle", "abs_err", "pass")
PLOT_HEADER = ("t", "mc", "oracle", "lo", "hi")


class ReportError(OSError):
    """A report file could not be written."""


@dataclass(frozen=True)
class ComparisonRow:
    experiment: str
    t: float
    quantity: str
    mc_estimate: float
    stderr: float
    oracle: float
    abs_err: float
    passed: bool
    # largest error the row accepted
    tolerance: float = 0.0


def tolerance(stderr: float, oracle: float, se_multiplier: float, rel_tol: float, abs_tol: float) -> float:
    return max(se_multiplier * stderr, rel_tol * abs(oracle), abs_tol)


def make_row(experiment: str, t: float, quantity: str, mc: float, stderr: float, oracle: float,
             se_multiplier: float, rel_tol: float, abs_tol: float) -> ComparisonRow:
    """Row with ``pass <=> |mc - oracle| <= max(k se, rel |oracle|, abs)``."""
    mc, stderr, oracle = float(mc), float(stderr), float(oracle)
    err = abs(mc - oracle)
    tol = tolerance(stderr, oracle, se_multiplier, rel_tol, abs_tol)
    ok = bool(np.isfinite(err) and err <= tol)
    return ComparisonRow(experiment, float(t), quantity, mc, stderr, oracle, err, ok, tol)


@dataclass(frozen=True)
class Curve:
    """A quantity along the whole grid, kept for plot-data output."""

    experiment: str
    quantity: str
    t: np.ndarray
    mc: np.ndarray
    oracle: np.ndarray
    stderr: np.ndarray
    se_multiplier: float


def _fmt(x: float) -> str:
    return repr(float(x))


def _slug(quantity: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", quantity.replace("^", "")).strip("_")


def write_comparison(rows, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.experiment, _fmt(r.t), r.quantity, _fmt(r.mc_estimate), _fmt(r.stderr),
                        _fmt(r.oracle), _fmt(r.abs_err), "true" if r.passed else "false"])


def write_plotdata(curves, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for c in curves:
        path = directory / f"{c.experiment}_{_slug(c.quantity)}.csv"
        half = c.se_multiplier * np.asarray(c.stderr, dtype=float)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PLOT_HEADER)
            for t, m, o, h in zip(c.t, c.mc, c.oracle, np.broadcast_to(half, np.shape(c.t))):
                w.writerow([_fmt(t), _fmt(m), _fmt(o), _fmt(m - h), _fmt(m + h)])
        written.append(path)
    return written


def summarize(results) -> dict:
    """Per-experiment pass counts, seeds, example names and timings."""
    out = {"experiments": {}, "total": 0, "pass_count": 0}
    for res in results:
        n = len(res.rows)
        ok = sum(r.passed for r in res.rows)
        out["experiments"][res.experiment] = {
            "example": res.example,
            "seed": res.config.seed,
            "n_paths": res.config.n_paths,
            "steps": res.config.steps,
            "horizon": res.config.horizon,
            "total": n,
            "pass_count": ok,
            "passed": ok == n,
            "info": res.info,
            "timings": res.timings,
        }
        out["total"] += n
        out["pass_count"] += ok
    out["passed"] = out["pass_count"] == out["total"]
    return out


def emit_reports(results, directory) -> dict[str, Path]:
    """Write ``comparison.csv``, ``summary.json`` and ``plotdata/`` under ``directory``."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        rows = [r for res in results for r in res.rows]
        curves = [c for res in results for c in res.curves]
        comp = d / "comparison.csv"
        write_comparison(rows, comp)
        summary = d / "summary.json"
        summary.write_text(json.dumps(summarize(results), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        write_plotdata(curves, d / "plotdata")
    except OSError as exc:
        raise ReportError(f"writing reports under {d}: {exc}") from exc
    return {"comparison": comp, "summary": summary, "plotdata": d / "plotdata"}
