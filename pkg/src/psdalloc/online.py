"""Online primal-dual allocation engines.

State tracks the running aggregate U = sum A_t x_t, spent budget u, and the
dual pair (Y, z) = (grad H_S(U), gs'(u)).  Two step rules:

  sequential   accept fully (x = 1) iff the stale price
               c_t z_{t-1} + <A_t, Y_{t-1}> is positive (ties reject);
               duals refresh after the decision.
  simultaneous pick x in [0, 1] maximizing
               Phi(x) = H_S(U + x A) + G_S(u + x c), via the scalar
               concave stationarity condition
               Phi'(x) = <A, grad H_S(U + x A)> + c gs'(u + x c).

Both record per-step price terms and dual movements so the run can be audited
and its dual value evaluated after the fact.
"""

from dataclasses import dataclass, field

import numpy as np

from .budget import g_conj, gs_prime
from .lowner import grad_hs, y_eval
from .objectives import h_conj, psd_eigs, trace_lift
from .spectral import sym

VARIANTS = ("seq", "sim")


class ConfigError(ValueError):
    """Engine assembled from inconsistent pieces."""


@dataclass(frozen=True)
class Arrival:
    A: np.ndarray
    c: float

    def __post_init__(self):
        A = sym(self.A)
        psd_eigs(A)  # raises NotPSD on a bad matrix
        object.__setattr__(self, "A", A)
        if not self.c > 0.0:
            raise ValueError("cost must be positive, got %r" % (self.c,))

    @property
    def n(self):
        return self.A.shape[0]


@dataclass
class StepRecord:
    t: int
    x: float
    u: float              # spent budget after the step
    z: float              # dual price after the step
    lam_max_U: float
    pos_term: float       # positive part of the priced inner product (dual value term)
    corr: float           # x * (<A, Y_t - Y_{t-1}> + c (z_t - z_{t-1})), sequential only
    y_gap: float          # lambda_min(Y_{t-1} - Y_t), >= 0 up to tolerance
    z_step: float         # z_t - z_{t-1}, <= 0 up to tolerance


@dataclass
class RunTrace:
    smoothed: object
    budget: object
    variant: str
    n: int
    records: list = field(default_factory=list)
    U: np.ndarray = None
    u: float = 0.0
    z: float = 0.0
    y_eigs: np.ndarray = None   # eigenvalues of the final dual Y_m

    @property
    def decisions(self):
        return np.array([r.x for r in self.records])

    @property
    def m(self):
        return len(self.records)


class OnlineState:
    """Mutable engine state; one instance per stream."""

    def __init__(self, smoothed, budget, n):
        if smoothed.base != budget.objective:
            raise ConfigError("smoothed measure and budget smoother disagree on the objective")
        self.smoothed = smoothed
        self.budget = budget
        self.n = n
        self.U = np.zeros((n, n))
        self.u = 0.0
        self.Y = smoothed.base.h_prime0 * np.eye(n)
        self.z = 0.0
        self.t = 0
        self.records = []

    def _refresh_duals(self):
        self.Y = grad_hs(self.smoothed, self.U)
        self.z = gs_prime(self.budget, self.u)

    def _record(self, x, pos_term, corr, Y_prev, z_prev):
        y_gap = float(np.linalg.eigvalsh(Y_prev - self.Y)[0])
        lam_max = float(np.linalg.eigvalsh(self.U)[-1])
        self.records.append(StepRecord(self.t, x, self.u, self.z, lam_max,
                                       pos_term, corr, y_gap, self.z - z_prev))

    def step_sequential(self, arr):
        """Threshold rule on the stale price; returns the decision x in {0, 1}."""
        self.t += 1
        A, c = arr.A, arr.c
        price = float(np.vdot(A, self.Y)) + c * self.z
        pos_term = max(price, 0.0)
        Y_prev, z_prev = self.Y, self.z
        if price > 0.0:
            x = 1.0
            self.U = self.U + A
            self.u += c
            self._refresh_duals()
            corr = (float(np.vdot(A, self.Y)) - float(np.vdot(A, Y_prev))
                    + c * (self.z - z_prev))
        else:
            x = 0.0
            corr = 0.0
        self._record(x, pos_term, corr, Y_prev, z_prev)
        return x

    def step_simultaneous(self, arr, x_tol=1e-10):
        """Fractional step maximizing Phi; returns x in [0, 1]."""
        self.t += 1
        A, c = arr.A, arr.c

        def dphi(x):
            return (float(np.vdot(A, grad_hs(self.smoothed, self.U + x * A)))
                    + c * gs_prime(self.budget, self.u + x * c))

        d0 = float(np.vdot(A, self.Y)) + c * self.z  # dphi(0) via cached duals
        if d0 <= 0.0:
            x = 0.0
        elif dphi(1.0) >= 0.0:
            x = 1.0
        else:
            lo, hi = 0.0, 1.0
            while hi - lo > x_tol:
                mid = 0.5 * (lo + hi)
                if dphi(mid) > 0.0:
                    lo = mid
                else:
                    hi = mid
            x = 0.5 * (lo + hi)
        Y_prev, z_prev = self.Y, self.z
        if x > 0.0:
            self.U = self.U + x * A
            self.u += x * c
            self._refresh_duals()
        pos_term = max(float(np.vdot(A, self.Y)) + c * self.z, 0.0)
        self._record(x, pos_term, 0.0, Y_prev, z_prev)
        return x

    def finish(self, variant):
        w, _ = psd_eigs(self.U)
        trace = RunTrace(self.smoothed, self.budget, variant, self.n,
                         self.records, self.U, self.u, self.z,
                         y_eval(self.smoothed.measure, w))
        return trace


def run_stream(smoothed, budget, arrivals, variant, n=None):
    """Drive one engine over an arrival sequence and return its trace."""
    if variant not in VARIANTS:
        raise ConfigError("variant must be one of %s" % (VARIANTS,))
    arrivals = list(arrivals)
    if n is None:
        if not arrivals:
            raise ConfigError("empty stream needs an explicit dimension n")
        n = arrivals[0].n
    state = OnlineState(smoothed, budget, n)
    step = state.step_sequential if variant == "seq" else state.step_simultaneous
    for arr in arrivals:
        if arr.n != n:
            raise ConfigError("arrival dimension %d != %d" % (arr.n, n))
        step(arr)
    return state.finish(variant)


def dual_value(trace):
    """D = sum of positive price terms - H*(Y_m) - G*(z_m), with the original h."""
    y_eigs = trace.y_eigs if trace.y_eigs is not None else \
        np.full(trace.n, trace.smoothed.base.h_prime0)
    pos = sum(r.pos_term for r in trace.records)
    hstar = float(np.sum(h_conj(trace.smoothed.base, y_eigs)))
    return float(pos - hstar - g_conj(trace.z, trace.budget.b))


def primal_value(trace, objective=None):
    """H(U_m) under the original (unsmoothed) objective."""
    obj = objective if objective is not None else trace.smoothed.base
    U = trace.U if trace.U is not None else np.zeros((trace.n, trace.n))
    return trace_lift(obj, U)
