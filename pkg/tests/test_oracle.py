import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from psdalloc.bench import gen_adversarial, gen_random
from psdalloc.budget import BudgetSmoother
from psdalloc.designer import DesignSpec, design_hs
from psdalloc.objectives import h_eval, make_objective
from psdalloc.online import Arrival, run_stream
from psdalloc.oracle import (
    AuditError,
    CapacityError,
    Instance,
    audit_run,
    audit_trace,
    dual_eval,
    instance_from_dict,
    instance_stats,
    instance_to_dict,
    offline_continuous_opt,
    offline_integer_opt,
    project_box_budget,
)


def random_instance(rng, n=3, m=8, b=3.0):
    arrivals = []
    for _ in range(m):
        v = rng.standard_normal(n)
        arrivals.append(Arrival(np.outer(v, v), float(rng.uniform(0.5, 1.5))))
    return Instance(arrivals, b)


def objective_value(obj, inst, x):
    X = np.tensordot(np.asarray(x, dtype=float), inst.As, axes=(0, 0))
    return float(np.sum(h_eval(obj, np.linalg.eigvalsh(X))))


def test_instance_validation():
    with pytest.raises(ValueError):
        Instance([], 1.0)
    with pytest.raises(ValueError):
        Instance([Arrival(np.eye(2), 1.0)], 0.0)


def test_instance_stats_recompute(rng):
    inst = random_instance(rng, n=4, m=6)
    traces = [float(np.trace(a.A)) for a in inst.arrivals]
    costs = [a.c for a in inst.arrivals]
    dens = [t / c for t, c in zip(traces, costs)]
    assert inst.theta == pytest.approx(min(dens))
    assert inst.Theta == pytest.approx(max(dens))
    assert inst.rho1 == pytest.approx(max(costs))
    lam = [float(np.linalg.eigvalsh(a.A)[-1]) for a in inst.arrivals]
    assert inst.rho2 == pytest.approx(max(lam))
    assert inst.max_lam_over_c == pytest.approx(max(l / c for l, c in zip(lam, costs)))
    assert inst.n == 4 and inst.m == 6


def test_instance_serialization_round_trip(rng):
    inst = random_instance(rng)
    back = instance_from_dict(instance_to_dict(inst))
    assert back.b == inst.b and back.m == inst.m
    assert np.allclose(back.As, inst.As)
    assert np.allclose(back.costs, inst.costs)


@given(seed=st.integers(min_value=0, max_value=200))
def test_projection_feasibility(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 10))
    v = rng.normal(size=m) * 2.0
    c = rng.uniform(0.3, 2.0, size=m)
    b = float(rng.uniform(0.5, 3.0))
    x, tau = project_box_budget(v, c, b)
    assert np.all(x >= 0.0) and np.all(x <= 1.0)
    assert c @ x <= b + 1e-8
    assert tau >= 0.0
    # complementary slackness: tau > 0 only when the budget is tight
    if tau > 1e-9:
        assert c @ x == pytest.approx(b, abs=1e-7)


@given(seed=st.integers(min_value=0, max_value=100))
@settings(max_examples=25)
def test_projection_is_euclidean_nearest(seed):
    rng = np.random.default_rng(seed)
    m = 5
    v = rng.normal(size=m) * 2.0
    c = rng.uniform(0.3, 2.0, size=m)
    b = 2.0
    x, _ = project_box_budget(v, c, b)
    d0 = np.sum((x - v) ** 2)
    for _ in range(40):
        y = rng.uniform(0.0, 1.0, size=m)
        if c @ y <= b:
            assert d0 <= np.sum((y - v) ** 2) + 1e-7


def test_projection_idempotent(rng):
    c = np.array([1.0, 1.0, 1.0])
    x, _ = project_box_budget(np.array([2.0, 0.4, -1.0]), c, 1.0)
    x2, _ = project_box_budget(x, c, 1.0)
    assert np.allclose(x2, x, atol=1e-9)


@pytest.mark.parametrize("kind", ["dopt", "aopt"])
def test_continuous_opt_vs_slsqp_and_random_search(kind, rng):
    obj = make_objective(kind)
    inst = random_instance(rng, n=3, m=8, b=3.0)
    res = offline_continuous_opt(inst, obj)
    assert res.converged

    # oracle 1: scipy SLSQP from several starts
    best_sci = -np.inf
    for s in range(4):
        x0 = np.random.default_rng(s).uniform(0.0, 1.0, inst.m)
        x0 *= min(1.0, inst.b / float(inst.costs @ x0))
        r = optimize.minimize(
            lambda x: -objective_value(obj, inst, x),
            x0,
            bounds=[(0.0, 1.0)] * inst.m,
            constraints=[{"type": "ineq", "fun": lambda x: inst.b - inst.costs @ x}],
            method="SLSQP",
            options={"maxiter": 300, "ftol": 1e-12},
        )
        best_sci = max(best_sci, -r.fun)

    # oracle 2: random feasible search
    draws = np.random.default_rng(1).uniform(0.0, 1.0, size=(200_000, inst.m))
    feas = draws[draws @ inst.costs <= inst.b]
    best_rand = max(objective_value(obj, inst, x) for x in feas[:20_000])

    target = max(best_sci, best_rand)
    assert res.value >= target - 1e-4 * max(1.0, abs(target))
    assert res.value <= target + 1e-4 * max(1.0, abs(target)) + 1e-6


def test_continuous_opt_kkt_multiplier(rng):
    obj = make_objective("dopt")
    inst = random_instance(rng, n=3, m=10, b=2.0)
    res = offline_continuous_opt(inst, obj)
    assert res.multiplier <= 1e-12  # price of budget is nonpositive in this sign convention
    assert float(inst.costs @ res.x) <= inst.b + 1e-8


def test_continuous_upper_bounds_integer(rng):
    obj = make_objective("dopt")
    inst = random_instance(rng, n=3, m=10, b=3.0)
    cont = offline_continuous_opt(inst, obj).value
    ival, bits = offline_integer_opt(inst, obj)
    assert ival <= cont + 1e-9
    assert float(inst.costs @ bits) <= inst.b + 1e-9


def test_integer_opt_explicit_enumeration(rng):
    obj = make_objective("aopt")
    inst = random_instance(rng, n=2, m=6, b=2.5)
    ival, bits = offline_integer_opt(inst, obj)
    best = 0.0
    for mask in range(2**6):
        x = [(mask >> i) & 1 for i in range(6)]
        if float(inst.costs @ x) <= inst.b:
            best = max(best, objective_value(obj, inst, x))
    assert ival == pytest.approx(best, abs=1e-12)
    assert objective_value(obj, inst, bits) == pytest.approx(ival, abs=1e-12)


def test_integer_opt_capacity_error(rng):
    inst = random_instance(rng, n=2, m=8)
    with pytest.raises(CapacityError):
        offline_integer_opt(inst, make_objective("dopt"), max_m=6)


def test_dual_eval_weak_duality_random_duals(rng):
    # any dual pair with finite conjugates upper-bounds every feasible primal
    obj = make_objective("dopt")
    inst = random_instance(rng, n=3, m=7, b=2.0)
    p_star = offline_continuous_opt(inst, obj).value
    for _ in range(10):
        B = rng.standard_normal((3, 3))
        Y = B @ B.T / 3.0
        Y = Y * (0.99 / max(1.0, float(np.linalg.eigvalsh(Y)[-1])))  # eigs in (0, 1)
        Y = Y + 1e-3 * np.eye(3)
        z = -float(rng.uniform(0.0, 2.0))
        assert dual_eval(inst, obj, Y, z) >= p_star - 1e-6


def engine_setup(inst, gamma, variant):
    obj = make_objective("dopt")
    rho1 = inst.rho1 if variant == "seq" else 0.0
    budget = BudgetSmoother(obj, gamma, inst.b, inst.theta, inst.Theta, rho1, variant)
    rho2 = inst.rho2 if variant == "seq" else 0.0
    spec = DesignSpec(obj, gamma, 14.0, 40, 60, variant, rho2)
    return design_hs(spec).smoothed(), budget


@pytest.mark.parametrize("variant", ["seq", "sim"])
def test_audit_passes_on_clean_run(variant, rng):
    inst = random_instance(rng, n=3, m=10, b=2.0)
    sm, budget = engine_setup(inst, 2.0, variant)
    trace = run_stream(sm, budget, inst.arrivals, variant)
    rep = audit_trace(trace, inst)
    assert rep.passed, rep.checks
    assert rep.budget_residual <= 1e-9
    assert rep.d_value >= rep.p_star - 1e-6
    d = rep.to_dict()
    assert d["passed"] and d["checks"] == rep.checks


def test_audit_detects_corrupted_decisions(rng):
    inst = random_instance(rng, n=3, m=10, b=2.0)
    sm, budget = engine_setup(inst, 2.0, "seq")
    trace = run_stream(sm, budget, inst.arrivals, "seq")
    bad = trace.decisions.copy()
    bad[0] = 1.0 - bad[0]
    rep = audit_run(bad, inst, sm, budget, "seq")
    assert not rep.checks["decisions"]
    assert not rep.passed


def test_audit_detects_budget_violation(rng):
    inst = random_instance(rng, n=3, m=12, b=2.0)
    sm, budget = engine_setup(inst, 2.0, "seq")
    all_ones = np.ones(inst.m)
    rep = audit_run(all_ones, inst, sm, budget, "seq")
    assert not rep.checks["budget"] or not rep.checks["decisions"]
    assert not rep.passed


def test_audit_length_mismatch(rng):
    inst = random_instance(rng, n=3, m=5)
    sm, budget = engine_setup(inst, 2.0, "sim")
    with pytest.raises(AuditError):
        audit_run(np.zeros(4), inst, sm, budget, "sim")
    with pytest.raises(AuditError):
        audit_run(np.zeros(5), inst, sm, budget, "diagonal")


def test_audit_accepts_precomputed_pstar(rng):
    inst = random_instance(rng, n=3, m=8, b=2.0)
    sm, budget = engine_setup(inst, 2.0, "sim")
    trace = run_stream(sm, budget, inst.arrivals, "sim")
    p_star = offline_continuous_opt(inst, make_objective("dopt")).value
    rep = audit_trace(trace, inst, p_star=p_star)
    assert rep.p_star == p_star and rep.passed


def test_generators_reproducible_and_shaped():
    a1 = gen_adversarial(n=5, m=12, seed=3)
    a2 = gen_adversarial(n=5, m=12, seed=3)
    assert np.allclose(a1.As, a2.As)
    assert a1.theta == pytest.approx(1.0)      # unit-density construction
    assert a1.Theta == pytest.approx(float(a1.m))
    r1 = gen_random(n=4, m=9, density=0.5, seed=7)
    r2 = gen_random(n=4, m=9, density=0.5, seed=7)
    assert np.allclose(r1.As, r2.As)
    assert all(a.c >= 0.5 and a.c <= 1.5 for a in r1.arrivals)
