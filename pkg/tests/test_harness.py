from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from filtrage.harness import (
    REGISTRY,
    ComparisonRow,
    ConfigError,
    ExperimentConfig,
    defaults,
    emit_reports,
    make_row,
    parse_config,
    resolve,
    run_experiment,
)
from filtrage.harness.cli import main
from filtrage.harness.config import SEED_ENV
from filtrage.harness.reports import CSV_HEADER, PLOT_HEADER

SMALL = "n_paths = 2000\nsteps = 40\n"


def _write(tmp_path, text, name="cfg.txt"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_registry_covers_every_experiment():
    assert set(REGISTRY) == {
        "two_defaults", "poisson_pair", "biv_diffusion", "structure_a", "structure_b", "structure_c",
        "structure_d", "coarse_brownian", "random_time_indep", "random_time_gauss",
    }
    assert all(e.example for e in REGISTRY.values())


def test_parse_config_layers():
    known = defaults()
    cfg = parse_config("experiment = poisson_pair, structure_d\nn_paths = 500  # small\n"
                       "poisson_pair.lam11 = 0.7\nstructure_d.steps = 10\n", known)
    assert cfg.selected == ("poisson_pair", "structure_d")
    out = resolve(known, cfg, env={})
    assert [c.experiment for c in out] == ["poisson_pair", "structure_d"]
    assert out[0].n_paths == 500 and out[0].params["lam11"] == 0.7
    assert out[1].steps == 10
    seeded = resolve(known, cfg, env={SEED_ENV: "99"})
    assert all(c.seed == 99 for c in seeded)
    only = resolve(known, cfg, only=["structure_d"], env={})
    assert [c.experiment for c in only] == ["structure_d"]


@pytest.mark.parametrize("text", [
    "experiment = nope",
    "n_paths = many",
    "just words",
    "poisson_pair.colour = red",
    "mystery = 1",
    "n_paths = 0",
    "se_multiplier = -1",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        resolve(defaults(), parse_config(text, defaults()), env={})


def test_bad_seed_variable():
    with pytest.raises(ConfigError):
        resolve(defaults(), parse_config("", defaults()), env={SEED_ENV: "x"})


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["verify", "--config", _write(tmp_path, "experiment = nope\n"), "--out", str(tmp_path)]) == 2
    assert main(["verify", "--config", str(tmp_path / "missing.txt"), "--out", str(tmp_path)]) == 2
    assert main(["verify", "--only", "nope", "--out", str(tmp_path)]) == 2


def test_cli_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert all(k in out for k in REGISTRY)


def test_verify_subset_writes_only_that_experiment(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["verify", "--config", _write(tmp_path, SMALL), "--only", "poisson_pair", "--out", str(out)])
    assert code == 0
    with open(out / "comparison.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(CSV_HEADER)
    assert {r[0] for r in rows[1:]} == {"poisson_pair"}
    summary = json.loads((out / "summary.json").read_text())
    assert list(summary["experiments"]) == ["poisson_pair"]
    assert summary["experiments"]["poisson_pair"]["example"]
    plots = list((out / "plotdata").glob("poisson_pair_*.csv"))
    assert plots
    assert plots[0].read_text().splitlines()[0] == ",".join(PLOT_HEADER)


def test_zero_tolerances_fail(tmp_path, capsys):
    text = SMALL + "rel_tol = 0\nse_multiplier = 0\nabs_tol = 0\n"
    code = main(["verify", "--config", _write(tmp_path, text), "--only", "structure_d", "--out", str(tmp_path / "o")])
    assert code == 1


def test_comparison_is_reproducible(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    a = tmp_path / "a"
    b = tmp_path / "b"
    for d in (a, b):
        main(["verify", "--config", cfg, "--only", "poisson_pair,structure_d", "--out", str(d)])
    assert (a / "comparison.csv").read_bytes() == (b / "comparison.csv").read_bytes()
    sa = json.loads((a / "summary.json").read_text())
    sb = json.loads((b / "summary.json").read_text())
    for s in (sa, sb):
        for e in s["experiments"].values():
            e.pop("timings")
    assert sa == sb


def test_seed_variable_changes_results(tmp_path, monkeypatch, capsys):
    cfg = _write(tmp_path, SMALL)
    main(["verify", "--config", cfg, "--only", "structure_d", "--out", str(tmp_path / "a")])
    monkeypatch.setenv(SEED_ENV, "12345")
    main(["verify", "--config", cfg, "--only", "structure_d", "--out", str(tmp_path / "b")])
    summary = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert summary["experiments"]["structure_d"]["seed"] == 12345
    assert (tmp_path / "a" / "comparison.csv").read_bytes() != (tmp_path / "b" / "comparison.csv").read_bytes()


def test_simulate_saves_paths(tmp_path, capsys):
    cfg = _write(tmp_path, "experiment = poisson_pair\n" + SMALL)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "sim")]) == 0
    data = np.load(tmp_path / "sim" / "poisson_pair.npz")
    assert data["series_N1"].shape == (2000, 41)
    assert data["times"][-1] == pytest.approx(2.0)


def test_empty_rows_give_header_only_files(tmp_path):
    paths = emit_reports([], tmp_path)
    assert paths["comparison"].read_text().splitlines() == [",".join(CSV_HEADER)]
    summary = json.loads(paths["summary"].read_text())
    assert summary["total"] == 0 and summary["pass_count"] == 0


def test_one_failing_row_is_counted(tmp_path):
    res = run_experiment(defaults()["structure_d"].override(n_paths=2000, steps=20))
    rows = list(res.rows)
    first_ok = [i for i, r in enumerate(rows) if r.passed]
    baseline = len(first_ok)
    rows.insert(0, rows.pop(first_ok[0]))
    bad = rows[0]
    rows[0] = make_row(bad.experiment, bad.t, bad.quantity, bad.oracle + 1.0, 0.0, bad.oracle, 0.0, 0.0, 0.0)
    assert not rows[0].passed
    broken = type(res)(res.experiment, res.example, res.config, tuple(rows), res.curves, res.info, res.timings)
    summary = json.loads(emit_reports([broken], tmp_path)["summary"].read_text())
    assert summary["pass_count"] == baseline - 1
    assert not broken.passed and rows[0] in broken.failures()


def test_row_pass_rule():
    row = make_row("x", 1.0, "B^F engine-oracle", 1.029, 0.01, 1.0, 3.0, 0.0, 0.0)
    assert isinstance(row, ComparisonRow)
    assert row.passed and row.abs_err == pytest.approx(0.029)
    assert not make_row("x", 1.0, "q", 1.031, 0.01, 1.0, 3.0, 0.0, 0.0).passed
    assert make_row("x", 1.0, "q", 1.04, 0.0, 1.0, 0.0, 0.05, 0.0).passed


def test_config_invariants():
    with pytest.raises(ConfigError):
        ExperimentConfig("poisson_pair", 0, 10, 1.0)
    with pytest.raises(ConfigError):
        ExperimentConfig("poisson_pair", 10, 10, -1.0)
