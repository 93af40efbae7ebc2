"""Generators, the experiment pipeline, curve emission, and CSV determinism."""

import math

import numpy as np
import pytest

from psdalloc import bench
from psdalloc.bench import (CSV_COLUMNS, CURVE_COLUMNS, ExperimentConfig,
                            cached_design, curve_rows, design_hash, emit_csv,
                            emit_curve, emit_gs_curve, gen_adversarial,
                            gen_random, run_experiment)
from psdalloc.budget import BudgetSmoother, gs_prime
from psdalloc.designer import DesignSpec, cr_bound
from psdalloc.objectives import make_objective

Q, D = 40, 60  # small design grids keep the pipeline tests fast


# ---------------------------------------------------------------- generators

def test_adversarial_instance_stats():
    n, m = 4, 10
    inst = gen_adversarial(n, m, seed=3)
    assert len(inst.arrivals) == m
    assert inst.b == pytest.approx(m / 5)
    for t, arr in enumerate(inst.arrivals, start=1):
        assert arr.c == 1.0
        assert np.trace(arr.A) == pytest.approx(m - t + 1, rel=1e-12)
        assert np.linalg.matrix_rank(arr.A) == 1
    # unit costs and the decaying traces pin the density spread exactly
    assert inst.theta == pytest.approx(1.0, rel=1e-12)
    assert inst.Theta == pytest.approx(m, rel=1e-12)
    assert inst.rho1 == 1.0


def test_adversarial_deterministic_in_seed():
    a = gen_adversarial(3, 6, seed=9)
    b = gen_adversarial(3, 6, seed=9)
    c = gen_adversarial(3, 6, seed=10)
    for x, y in zip(a.arrivals, b.arrivals):
        np.testing.assert_array_equal(x.A, y.A)
    assert any(not np.array_equal(x.A, y.A)
               for x, y in zip(a.arrivals, c.arrivals))


def test_random_generator_costs_and_budget():
    inst = gen_random(3, 25, density=0.6, seed=4, b=7.5)
    assert inst.b == 7.5
    assert len(inst.arrivals) == 25
    for arr in inst.arrivals:
        assert 0.5 <= arr.c <= 1.5
        assert np.any(arr.A != 0.0)
    again = gen_random(3, 25, density=0.6, seed=4, b=7.5)
    for x, y in zip(inst.arrivals, again.arrivals):
        np.testing.assert_array_equal(x.A, y.A)
        assert x.c == y.c


def test_random_generator_rejects_bad_density():
    with pytest.raises(ValueError):
        gen_random(3, 5, density=0.0)
    with pytest.raises(ValueError):
        gen_random(3, 5, density=1.5)


# ------------------------------------------------------------------- config

def test_config_from_dict_roundtrip():
    cfg = ExperimentConfig.from_dict({"objective": "aopt", "n": 3, "m": 12,
                                      "gammas": (1.0, 2.0), "seed": 7,
                                      "variants": ("sim", "seq")})
    assert cfg.objective == "aopt"
    assert cfg.m == 12
    assert cfg.gammas == (1.0, 2.0)
    assert cfg.b is None and cfg.out is None


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_dict({"objective": "dopt", "gamma": 2.0})


# ----------------------------------------------------------------- pipeline

@pytest.fixture(scope="module")
def small_reports():
    cfg = ExperimentConfig.from_dict({
        "objective": "dopt", "n": 3, "m": 8, "b": 2.0,
        "gammas": (1.0, 2.0), "repeats": 2, "seed": 5,
        "variants": ("sim", "seq"), "generator": "adversarial",
        "q": Q, "d": D,
    })
    return run_experiment(cfg)


def test_run_experiment_report_grid(small_reports):
    # 2 gammas x 2 variants x 2 repeats x 2 arms (dopt has an exact measure)
    assert len(small_reports) == 16
    combos = {(r.gamma, r.variant, r.repeat, r.arm) for r in small_reports}
    assert len(combos) == 16
    assert {r.arm for r in small_reports} == {"smoothed", "unsmoothed"}


def test_run_experiment_audits_and_budget(small_reports):
    for rep in small_reports:
        assert rep.audit_pass
        assert rep.budget_used <= rep.b_prime + 1e-9
        assert rep.d_value >= rep.p_star - 1e-6


def test_run_experiment_ratio_meets_bound(small_reports):
    for rep in small_reports:
        if not rep.umax_breached:
            assert rep.ratio >= rep.bound - 1e-6


def test_run_experiment_consistent_p_star(small_reports):
    by_repeat = {}
    for rep in small_reports:
        by_repeat.setdefault(rep.repeat, set()).add(rep.p_star)
    for vals in by_repeat.values():
        assert len(vals) == 1


def test_run_experiment_hash_and_umax_fields(small_reports):
    for rep in small_reports:
        assert len(rep.design_hash) == 16
        assert set(rep.design_hash) <= set("0123456789abcdef")
        assert rep.lam_max_U >= -1e-12
        assert rep.u_max > 0


# ------------------------------------------------------------ csv emission

def _run_to_csv(path):
    cfg = ExperimentConfig.from_dict({
        "objective": "dopt", "n": 3, "m": 8, "b": 2.0, "gammas": (1.5,),
        "repeats": 2, "seed": 11, "variants": ("sim",), "q": Q, "d": D,
        "out": str(path),
    })
    run_experiment(cfg)
    return path.read_bytes()


def test_csv_byte_identical_across_runs(tmp_path):
    first = _run_to_csv(tmp_path / "a.csv")
    bench._design_cache.clear()  # force a fresh design the second time round
    second = _run_to_csv(tmp_path / "b.csv")
    assert first == second


def test_csv_header_and_rows(tmp_path):
    text = _run_to_csv(tmp_path / "c.csv").decode()
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 4  # 1 gamma x 1 variant x 2 repeats x 2 arms
    for line in lines[1:]:
        cells = line.split(",")
        assert len(cells) == len(CSV_COLUMNS)
        assert cells[0] == "dopt"
        float(cells[1]), float(cells[3]), float(cells[7])  # numeric columns parse
        assert cells[9] in {"0", "1"} and cells[10] in {"0", "1"}


# -------------------------------------------------------------- bound curves

def test_curve_rows_dopt_bounds():
    rows = curve_rows("dopt", (1.0, 2.0), u_max=8.0, q=Q, d=D)
    for row in rows:
        g = row["gamma"]
        expected_u = 1.0 / (g / (math.e - 1.0) + g + 1.0)
        assert row["bound_unsmoothed"] == pytest.approx(expected_u, rel=1e-12)
        assert row["bound_smoothed"] >= row["bound_unsmoothed"] - 1e-12
        assert row["beta"] <= g + 1.0 + 1e-6


def test_curve_rows_linear_collapse():
    rows = curve_rows("linear", (1.0, 3.0), u_max=8.0, q=Q, d=D)
    for row in rows:
        g = row["gamma"]
        assert row["beta"] == g
        assert row["bound_smoothed"] == pytest.approx(cr_bound(g, g), rel=1e-12)
        assert row["bound_unsmoothed"] == pytest.approx(cr_bound(g, g), rel=1e-12)


def test_curve_rows_aopt_has_no_unsmoothed_bound():
    rows = curve_rows("aopt", (1.0,), u_max=8.0, q=Q, d=D)
    assert math.isnan(rows[0]["bound_unsmoothed"])
    assert rows[0]["bound_smoothed"] > 0


def test_emit_curve_file(tmp_path):
    path = tmp_path / "curve.csv"
    rows = emit_curve("linear", (1.0, 2.0), 8.0, str(path), q=Q, d=D)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == ",".join(CURVE_COLUMNS)
    assert len(lines) == 1 + len(rows)
    got = [float(x) for x in lines[1].split(",")]
    assert got[0] == 1.0 and got[1] == 1.0


def test_emit_gs_curve_file(tmp_path):
    obj = make_objective("linear")
    s = BudgetSmoother(obj, 1.0, 5.0, 1.0, 1.0, 1.0, "sim")
    us = np.linspace(0.0, 10.0, 21)
    path = tmp_path / "gs.csv"
    emit_gs_curve(s, us, str(path))
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "u,gs_prime"
    assert len(lines) == 1 + len(us)
    u5, v5 = (float(x) for x in lines[5].split(","))
    assert v5 == pytest.approx(float(gs_prime(s, u5)), abs=1e-12)


# ------------------------------------------------------- design cache / hash

def test_design_hash_stable_and_distinct():
    obj = make_objective("dopt")
    spec = DesignSpec(obj, 1.0, 8.0, Q, D, "sim", 0.0)
    h1 = design_hash(cached_design(spec))
    h2 = design_hash(cached_design(DesignSpec(obj, 1.0, 8.0, Q, D, "sim", 0.0)))
    h3 = design_hash(cached_design(DesignSpec(obj, 2.0, 8.0, Q, D, "sim", 0.0)))
    assert h1 == h2
    assert h1 != h3


def test_cached_design_returns_same_object():
    obj = make_objective("aopt")
    a = cached_design(DesignSpec(obj, 1.0, 8.0, Q, D, "sim", 0.0))
    b = cached_design(DesignSpec(obj, 1.0, 8.0, Q, D, "sim", 0.0))
    assert a is b
