"""Budget penalty smoothing: the exponentially weighted derivative gs' and its tools.

For a budget b, competitiveness knob gamma >= 1, and instance density bounds
theta <= tr(A_t)/c_t <= Theta, the smoothed penalty derivative is

    gs'(u) = -(gamma theta / (B (e-1))) * int_0^u exp(r (u - v)) h'(theta v) dv

with rate r = gamma / B, where B = b for the simultaneous variant and
B = b + rho1 gamma for the sequential one (rho1 = max cost).  gs'(u) = 0 for
u <= 0, and gs' is nonpositive and nonincreasing.  The penalty value
G_S(u) = int_0^u gs' is recovered by outer quadrature of gs'.

The stopping budget b' is the smallest u with gs'(u) <= -h'(0) Theta, plus
rho1 for the sequential variant.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .objectives import h_eval, h_prime

E1 = np.e - 1.0

# exponent guard: beyond this the convolution underflows the float range
OVERFLOW_EXP = 700.0

_GL16 = np.polynomial.legendre.leggauss(16)


class QuadratureError(RuntimeError):
    """Adaptive panel doubling failed to converge within the panel cap."""


@dataclass(frozen=True)
class BudgetSmoother:
    objective: object          # TraceObjective
    gamma: float
    b: float
    theta: float
    Theta: float
    rho1: float = 0.0
    variant: str = "sim"

    def __post_init__(self):
        if self.variant not in ("sim", "seq"):
            raise ValueError("variant must be 'sim' or 'seq', got %r" % (self.variant,))
        if not self.gamma >= 1.0:
            raise ValueError("gamma must be >= 1, got %r" % (self.gamma,))
        if not self.b > 0.0:
            raise ValueError("budget b must be positive")
        if not (0.0 < self.theta <= self.Theta):
            raise ValueError("need 0 < theta <= Theta, got %r, %r" % (self.theta, self.Theta))
        if self.rho1 < 0.0:
            raise ValueError("rho1 must be nonnegative")
        if self.variant == "seq" and not self.rho1 > 0.0:
            raise ValueError("sequential variant requires rho1 > 0")

    @property
    def B(self):
        return self.b + self.rho1 * self.gamma if self.variant == "seq" else self.b

    @property
    def rate(self):
        return self.gamma / self.B


@lru_cache(maxsize=64)
def _gl01(panels):
    """Gauss-Legendre nodes/weights for [0, 1] split into equal panels."""
    x, w = _GL16
    half = 0.5 / panels
    centers = (np.arange(panels) + 0.5) / panels
    T = (centers[:, None] + half * x[None, :]).ravel()
    W = np.tile(half * w, panels)
    return T, W


def _adaptive01(f, x, rel_tol, max_panels, label):
    """Evaluate x * int_0^1 f(x, t) dt elementwise over the vector x.

    f(x, t) takes the (k,) points and (nt,) nodes and returns a (k, nt) array.
    Panels double until successive estimates agree to rel_tol.
    """
    prev = None
    panels = 1
    while panels <= max_panels:
        T, W = _gl01(panels)
        cur = x * (f(x, T) @ W)
        if prev is not None:
            err = np.abs(cur - prev)
            tol = rel_tol * np.maximum(np.abs(cur), 1e-12) + 1e-15
            if np.all(err <= tol):
                return cur
        prev = cur
        panels *= 2
    raise QuadratureError("%s did not converge within %d panels" % (label, max_panels))


def gs_prime(s, u, force_quadrature=False, rel_tol=1e-11, max_panels=2048):
    """gs'(u) for scalar or array u.

    The linear objective short-circuits to the closed form
    -theta (exp(r u) - 1)/(e - 1); pass force_quadrature=True to exercise the
    generic convolution quadrature on it instead.  Exponents past the overflow
    guard return -inf.
    """
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    out = np.zeros(u.shape)
    pos = u > 0.0
    if np.any(pos):
        x = u[pos]
        expo = s.rate * x
        over = expo > OVERFLOW_EXP
        vals = np.empty(x.shape)
        vals[over] = -np.inf
        ok = ~over
        if np.any(ok):
            xo = x[ok]
            if s.objective.kind == "linear" and not force_quadrature:
                vals[ok] = -s.theta * np.expm1(s.rate * xo) / E1
            else:
                def integrand(xx, T):
                    E = np.exp(s.rate * xx[:, None] * (1.0 - T[None, :]))
                    F = h_prime(s.objective, s.theta * xx[:, None] * T[None, :])
                    return E * F

                conv = _adaptive01(integrand, xo, rel_tol, max_panels, "gs_prime")
                vals[ok] = -(s.gamma * s.theta / (s.B * E1)) * conv
        out[pos] = vals
    return float(out[0]) if scalar else out


def gs_value(s, u, rel_tol=1e-10, max_panels=1024):
    """G_S(u) = int_0^u gs'(v) dv by adaptive quadrature of gs_prime; 0 on u <= 0."""
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    out = np.zeros(u.shape)
    pos = u > 0.0
    if np.any(pos):
        x = u[pos]

        def integrand(xx, T):
            pts = (xx[:, None] * T[None, :]).ravel()
            return gs_prime(s, pts).reshape(len(xx), len(T))

        out[pos] = _adaptive01(integrand, x, rel_tol, max_panels, "gs_value")
    return float(out[0]) if scalar else out


def gs_prime_inv(s, target, tol=1e-9):
    """Smallest u >= 0 with gs'(u) <= target (target <= 0); +inf if unreachable."""
    if target >= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        if gs_prime(s, hi) <= target:
            break
        lo = hi
        hi *= 2.0
    else:
        return np.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gs_prime(s, mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def b_prime(s, tol=1e-9):
    """Stopping budget: crossing of gs' below -h'(0) Theta, plus rho1 if sequential."""
    u = gs_prime_inv(s, -s.objective.h_prime0 * s.Theta, tol=tol)
    if s.variant == "seq":
        u += s.rho1
    return u


def gamma_for_budget(objective, b, theta, Theta, rho1=0.0, variant="sim", tol=1e-6):
    """Smallest gamma >= 1 with b'(gamma) <= b, by bisection (b' is nonincreasing)."""

    def bp(g):
        return b_prime(BudgetSmoother(objective, g, b, theta, Theta, rho1, variant))

    if bp(1.0) <= b:
        return 1.0
    lo, hi = 1.0, 2.0
    for _ in range(200):
        if bp(hi) <= b:
            break
        lo = hi
        hi *= 2.0
    else:
        raise RuntimeError("no gamma found with b' <= b")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bp(mid) <= b:
            hi = mid
        else:
            lo = mid
    return hi


def gs_gamma_identity_check(s, grid):
    """Max absolute residual of the penalty identity over the grid.

    Simultaneous:  gamma G_S(u)                      = b gs'(u) + gamma/(e-1) h(theta u)
    Sequential:    gamma (G_S(u) - rho1 gs'(u))      = b gs'(u) + gamma/(e-1) h(theta u)
    """
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    gp = gs_prime(s, g)
    lhs = s.gamma * gs_value(s, g)
    if s.variant == "seq":
        lhs = lhs - s.gamma * s.rho1 * gp
    rhs = s.b * gp + (s.gamma / E1) * h_eval(s.objective, s.theta * g)
    return float(np.max(np.abs(lhs - rhs)))


def g_conj(z, b):
    """Conjugate of the budget indicator: G*(z) = b z for z <= 0, else 0."""
    return b * z if z <= 0.0 else 0.0
