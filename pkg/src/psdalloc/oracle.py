"""Offline optima, dual evaluation, and end-to-end audits of online runs.

The continuous relaxation

    maximize H(sum_t A_t x_t)  s.t.  c . x <= b,  0 <= x <= 1

is solved by projected gradient ascent with Armijo backtracking; the
projection onto the box-and-budget polytope is Euclidean, computed by
bisection on the budget multiplier.  The exhaustive integer optimum is
available for small m.  Audits replay a recorded decision sequence from
scratch and check every inequality the guarantees rest on.
"""

from dataclasses import dataclass, field

import numpy as np

from .budget import b_prime, g_conj, gs_prime, gs_value
from .lowner import grad_hs, hs_trace_lift, y_eval
from .objectives import h_conj, h_eval, h_prime

DEFAULT_TOLS = {
    "budget": 1e-9,
    "z_monotone": 1e-8,
    "y_monotone": 1e-8,
    "telescope": 1e-6,
    "dual_gap": 1e-6,
    "rho_bound": 1e-6,
    "d_vs_pstar": 1e-6,
    "decision": 1e-5,
}


class CapacityError(ValueError):
    """Instance too large for exhaustive enumeration."""


class AuditError(ValueError):
    """Trace is incomplete or inconsistent with the instance."""


@dataclass
class Instance:
    arrivals: list
    b: float
    theta: float = field(init=False)
    Theta: float = field(init=False)
    rho1: float = field(init=False)
    rho2: float = field(init=False)
    max_lam_over_c: float = field(init=False)
    n: int = field(init=False)
    m: int = field(init=False)

    def __post_init__(self):
        if not self.arrivals:
            raise ValueError("instance needs at least one arrival")
        if not self.b > 0.0:
            raise ValueError("budget must be positive")
        stats = instance_stats(self.arrivals)
        for k, v in stats.items():
            setattr(self, k, v)
        self._As = None

    @property
    def As(self):
        if self._As is None:
            self._As = np.stack([a.A for a in self.arrivals])
        return self._As

    @property
    def costs(self):
        return np.array([a.c for a in self.arrivals])


def instance_stats(arrivals):
    """Density bounds and caps recomputed from scratch: theta, Theta, rho1, rho2."""
    traces = np.array([np.trace(a.A) for a in arrivals])
    costs = np.array([a.c for a in arrivals])
    lam_max = np.array([float(np.linalg.eigvalsh(a.A)[-1]) for a in arrivals])
    density = traces / costs
    return {
        "theta": float(density.min()),
        "Theta": float(density.max()),
        "rho1": float(costs.max()),
        "rho2": float(lam_max.max()),
        "max_lam_over_c": float((lam_max / costs).max()),
        "n": arrivals[0].n,
        "m": len(arrivals),
    }


def instance_to_dict(inst):
    return {
        "b": inst.b,
        "arrivals": [{"A": a.A.tolist(), "c": a.c} for a in inst.arrivals],
    }


def instance_from_dict(d):
    from .online import Arrival
    arrivals = [Arrival(np.asarray(e["A"], dtype=float), float(e["c"]))
                for e in d["arrivals"]]
    return Instance(arrivals, float(d["b"]))


def project_box_budget(v, c, b):
    """Euclidean projection onto {0 <= x <= 1, c . x <= b}; returns (x, tau).

    tau is the budget multiplier (0 when the budget constraint is slack).
    """
    x = np.clip(v, 0.0, 1.0)
    if c @ x <= b + 1e-12:
        return x, 0.0
    lo, hi = 0.0, float(np.max(v / c))
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if c @ np.clip(v - mid * c, 0.0, 1.0) > b:
            lo = mid
        else:
            hi = mid
    return np.clip(v - hi * c, 0.0, 1.0), hi


@dataclass
class OfflineResult:
    value: float
    x: np.ndarray
    multiplier: float
    iterations: int
    stationarity: float
    converged: bool


def offline_continuous_opt(inst, obj, tol=1e-7, max_iters=5000):
    """Projected gradient ascent with backtracking for the continuous relaxation."""
    As, c, m = inst.As, inst.costs, inst.m

    def value(x):
        X = np.tensordot(x, As, axes=(0, 0))
        return float(np.sum(h_eval(obj, np.linalg.eigvalsh(X))))

    def grad(x):
        X = np.tensordot(x, As, axes=(0, 0))
        w, V = np.linalg.eigh(X)
        G = (V * h_prime(obj, w)) @ V.T
        return np.tensordot(As, G, axes=([1, 2], [0, 1]))

    x, _ = project_box_budget(np.full(m, min(1.0, inst.b / max(float(c.sum()), 1e-300))),
                              c, inst.b)
    f = value(x)
    s = 1.0
    stat = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        g = grad(x)
        probe, _ = project_box_budget(x + g, c, inst.b)
        stat = float(np.linalg.norm(probe - x))
        if stat <= tol:
            break
        moved = False
        for _ in range(60):
            xt, _ = project_box_budget(x + s * g, c, inst.b)
            ft = value(xt)
            gain = float(g @ (xt - x))
            if ft >= f + 1e-4 * gain - 1e-15 and gain > 0.0:
                moved = True
                break
            s *= 0.5
        if not moved:
            break
        x, f = xt, ft
        s = min(s * 1.5, 1e8)
    _, tau = project_box_budget(x + grad(x), c, inst.b)
    return OfflineResult(f, x, -tau, it, stat, stat <= tol)


def offline_integer_opt(inst, obj, max_m=22, batch=65536):
    """Exhaustive 0/1 optimum; CapacityError beyond max_m arrivals."""
    m = inst.m
    if m > max_m:
        raise CapacityError("m = %d exceeds the enumeration cap %d" % (m, max_m))
    As, c = inst.As, inst.costs
    best_val, best_bits = 0.0, np.zeros(m)
    shifts = np.arange(m)
    for start in range(0, 2 ** m, batch):
        idx = np.arange(start, min(start + batch, 2 ** m), dtype=np.int64)
        bits = ((idx[:, None] >> shifts[None, :]) & 1).astype(float)
        feas = bits @ c <= inst.b + 1e-12
        if not np.any(feas):
            continue
        bits = bits[feas]
        X = np.tensordot(bits, As, axes=(1, 0))
        w = np.linalg.eigvalsh(X)
        vals = np.sum(h_eval(obj, w), axis=1)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_bits = float(vals[k]), bits[k]
    return best_val, best_bits


def dual_eval(inst, obj, Y, z):
    """Dual objective sum_t (<A_t, Y> + c_t z)_+ - H*(Y) - G*(z)."""
    terms = np.tensordot(inst.As, Y, axes=([1, 2], [0, 1])) + inst.costs * z
    pos = float(np.sum(np.maximum(terms, 0.0)))
    hstar = float(np.sum(h_conj(obj, np.linalg.eigvalsh(Y))))
    return pos - hstar - g_conj(z, inst.b)


@dataclass
class AuditReport:
    variant: str
    m: int
    budget_used: float
    b_prime: float
    budget_residual: float        # u_m - b', must be <= budget tol
    decision_consistent: bool
    worst_decision_residual: float
    max_z_step: float             # max of z_t - z_{t-1}, <= tol
    min_y_gap: float              # min of lambda_min(Y_{t-1} - Y_t), >= -tol
    telescope_residual: float     # must be >= -tol
    dual_gap_residual: float      # must be >= -tol
    rho_bound_residual: float     # sequential only (nan otherwise), >= -tol
    d_value: float
    p_star: float
    passed: bool
    checks: dict

    def to_dict(self):
        out = {k: getattr(self, k) for k in (
            "variant", "m", "budget_used", "b_prime", "budget_residual",
            "decision_consistent", "worst_decision_residual", "max_z_step",
            "min_y_gap", "telescope_residual", "dual_gap_residual",
            "rho_bound_residual", "d_value", "p_star", "passed")}
        out["checks"] = dict(self.checks)
        return out


def audit_run(decisions, inst, smoothed, budget, variant, p_star=None, tols=None):
    """Replay a decision sequence from scratch and verify every guarantee.

    Recomputes the aggregate, duals, price terms, and correction terms with no
    reference to the engine's stored state, then checks: per-step decision
    consistency with the step rule, the budget cap u_m <= b' + tol, monotone
    duals, nonnegativity of the smoothed telescoping sum, the dual-gap
    inequality, the sequential correction bound, and D >= P* - tol.
    """
    tols = dict(DEFAULT_TOLS, **(tols or {}))
    decisions = np.asarray(decisions, dtype=float)
    if decisions.shape != (inst.m,):
        raise AuditError("decision sequence length %s != m = %d" % (decisions.shape, inst.m))
    if variant not in ("seq", "sim"):
        raise AuditError("unknown variant %r" % (variant,))
    obj = smoothed.base
    n = inst.n
    U = np.zeros((n, n))
    u = 0.0
    Y = obj.h_prime0 * np.eye(n)
    z = 0.0
    pos_sum = 0.0
    corr_sum = 0.0
    min_y_gap = np.inf
    max_z_step = -np.inf
    decision_ok = True
    worst_resid = 0.0

    for arr, x in zip(inst.arrivals, decisions):
        A, c = arr.A, arr.c
        if variant == "seq":
            price = float(np.vdot(A, Y)) + c * z
            pos_sum += max(price, 0.0)
            expect = 1.0 if price > 0.0 else 0.0
            if x != expect:
                decision_ok = False
                worst_resid = max(worst_resid, abs(price))
            if x > 0.0:
                U = U + x * A
                u += x * c
        else:
            d_at = (float(np.vdot(A, grad_hs(smoothed, U + x * A)))
                    + c * gs_prime(budget, u + x * c))
            scale = max(1.0, abs(float(np.vdot(A, Y))) + c * abs(z))
            if x <= 0.0:
                resid = max(0.0, d_at)
            elif x >= 1.0:
                resid = max(0.0, -d_at)
            else:
                resid = abs(d_at)
            if resid > tols["decision"] * scale:
                decision_ok = False
            worst_resid = max(worst_resid, resid / scale)
            if x > 0.0:
                U = U + x * A
                u += x * c
        if x > 0.0:
            Y_new = grad_hs(smoothed, U)
            z_new = gs_prime(budget, u)
        else:
            Y_new, z_new = Y, z
        if variant == "seq":
            if x > 0.0:
                corr_sum += x * (float(np.vdot(A, Y_new - Y)) + c * (z_new - z))
        else:
            pos_sum += max(float(np.vdot(A, Y_new)) + c * z_new, 0.0)
        min_y_gap = min(min_y_gap, float(np.linalg.eigvalsh(Y - Y_new)[0]))
        max_z_step = max(max_z_step, z_new - z)
        Y, z = Y_new, z_new

    bprime = b_prime(budget)
    budget_residual = u - bprime
    HS = hs_trace_lift(smoothed, U)
    GS = gs_value(budget, u)
    y_eigs = y_eval(smoothed.measure, np.linalg.eigvalsh(U))
    hstar = float(np.sum(h_conj(obj, y_eigs)))
    gstar = g_conj(z, budget.b)
    D = pos_sum - hstar - gstar
    if variant == "seq":
        telescope = HS + GS - corr_sum
        dual_gap = HS + GS - D - hstar - gstar - corr_sum
        rho_bound = (inst.rho2 * float(np.trace(obj.h_prime0 * np.eye(n) - Y))
                     - inst.rho1 * z) - (-corr_sum)
    else:
        telescope = HS + GS
        dual_gap = HS + GS - D - hstar - gstar
        rho_bound = np.nan
    if p_star is None:
        p_star = offline_continuous_opt(inst, obj).value

    checks = {
        "budget": budget_residual <= tols["budget"],
        "decisions": decision_ok,
        "z_monotone": max_z_step <= tols["z_monotone"],
        "y_monotone": min_y_gap >= -tols["y_monotone"],
        "telescope": telescope >= -tols["telescope"],
        "dual_gap": dual_gap >= -tols["dual_gap"],
        "d_vs_pstar": D >= p_star - tols["d_vs_pstar"],
    }
    if variant == "seq":
        checks["rho_bound"] = rho_bound >= -tols["rho_bound"]
    return AuditReport(
        variant=variant, m=inst.m, budget_used=u, b_prime=bprime,
        budget_residual=budget_residual, decision_consistent=decision_ok,
        worst_decision_residual=worst_resid, max_z_step=max_z_step,
        min_y_gap=min_y_gap, telescope_residual=telescope,
        dual_gap_residual=dual_gap, rho_bound_residual=float(rho_bound),
        d_value=D, p_star=p_star, passed=all(checks.values()), checks=checks,
    )


def audit_trace(trace, inst, p_star=None, tols=None):
    """Audit an engine trace against the instance it was produced from."""
    if trace.m != inst.m:
        raise AuditError("trace has %d steps, instance has %d" % (trace.m, inst.m))
    return audit_run(trace.decisions, inst, trace.smoothed, trace.budget,
                     trace.variant, p_star=p_star, tols=tols)
