"""Scalar gain functions and their trace lifts.

Catalog of concave increasing h with h(0) = 0, used eigenvalue-wise as
H(X) = sum_i h(lambda_i(X)):

    linear  h(u) = u
    dopt    h(u) = log(1 + u)
    aopt    h(u) = 1 - 1/(1+u)          (inverse-trace criterion, shifted)
    pmean   h(u) = 1 - (1+u)^(-p)       (p > 0; p = 1 recovers aopt)

Each h is extended linearly to u < 0 with slope h'(0).  The concave conjugate
h*(y) = inf_u { y u - h(u) } is over u >= 0 (over all u for linear), so
h*(y) = 0 for y > h'(0) and -inf for y < 0.
"""

from dataclasses import dataclass

import numpy as np

from .spectral import TOL_EIG, eig_sym, sym

KINDS = ("linear", "dopt", "aopt", "pmean")


class NotPSD(ValueError):
    """Matrix has an eigenvalue below the PSD tolerance."""


class RangeError(ValueError):
    """Scalar argument outside the range of h."""


@dataclass(frozen=True)
class TraceObjective:
    kind: str
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError("unknown objective kind %r (one of %s)" % (self.kind, list(KINDS)))
        if self.kind == "pmean" and not self.p > 0:
            raise ValueError("pmean requires p > 0, got %r" % (self.p,))

    @property
    def h_prime0(self):
        """Slope at zero: 1 for linear/dopt/aopt, p for pmean."""
        return float(self.p) if self.kind == "pmean" else 1.0

    @property
    def sup_h(self):
        return 1.0 if self.kind in ("aopt", "pmean") else np.inf

    @property
    def raw_offset_per_dim(self):
        """Per-eigenvalue shift versus the raw criterion; raw H = H + n * offset."""
        return -1.0 if self.kind in ("aopt", "pmean") else 0.0

    @property
    def label(self):
        if self.kind == "pmean":
            return "pmean%g" % self.p
        return self.kind


def make_objective(name, p=1.0):
    """Parse an objective label ('linear' | 'dopt' | 'aopt' | 'pmean')."""
    name = str(name).strip().lower()
    if name.startswith("pmean") and name != "pmean":
        return TraceObjective("pmean", float(name[5:]))
    return TraceObjective(name, float(p))


def _shaped(u):
    arr = np.asarray(u, dtype=float)
    return arr, arr.ndim == 0


def h_eval(obj, u):
    """h(u), vectorized; linear extension h'(0)*u on u < 0."""
    u, scalar = _shaped(u)
    up = np.maximum(u, 0.0)
    if obj.kind == "linear":
        pos = up
    elif obj.kind == "dopt":
        pos = np.log1p(up)
    elif obj.kind == "aopt":
        pos = up / (1.0 + up)
    else:
        pos = -np.expm1(-obj.p * np.log1p(up))
    out = np.where(u < 0.0, obj.h_prime0 * u, pos)
    return float(out) if scalar else out


def h_prime(obj, u):
    """h'(u), vectorized; constant h'(0) on u < 0."""
    u, scalar = _shaped(u)
    up = np.maximum(u, 0.0)
    if obj.kind == "linear":
        out = np.ones_like(up)
    elif obj.kind == "dopt":
        out = 1.0 / (1.0 + up)
    elif obj.kind == "aopt":
        out = (1.0 + up) ** -2.0
    else:
        out = obj.p * (1.0 + up) ** (-obj.p - 1.0)
    return float(out) if scalar else out


def h_inverse(obj, v):
    """Inverse of h on [0, sup h); RangeError outside."""
    v, scalar = _shaped(v)
    if np.any(v < 0.0) or np.any(v >= obj.sup_h):
        raise RangeError("value outside [0, sup h) for %s" % obj.label)
    if obj.kind == "linear":
        out = v.copy()
    elif obj.kind == "dopt":
        out = np.expm1(v)
    elif obj.kind == "aopt":
        out = v / (1.0 - v)
    else:
        out = np.expm1(-np.log1p(-v) / obj.p)
    return float(out) if scalar else out


def h_conj(obj, y):
    """Concave conjugate h*(y) = inf_{u>=0} { y u - h(u) } (inf over R for linear).

    Piecewise: -inf below the domain, a closed form on (0, h'(0)] (reaching -1
    at y = 0 for aopt/pmean), and 0 for y > h'(0).
    """
    y, scalar = _shaped(y)
    if obj.kind == "linear":
        out = np.where(y == 1.0, 0.0, -np.inf)
        return float(out) if scalar else out
    out = np.full(y.shape, -np.inf)
    if obj.kind == "dopt":
        mid = (y > 0.0) & (y <= 1.0)
        ys = np.where(mid, y, 1.0)
        out = np.where(mid, 1.0 - ys + np.log(ys), out)
        out = np.where(y > 1.0, 0.0, out)
    elif obj.kind == "aopt":
        mid = (y >= 0.0) & (y <= 1.0)
        ys = np.where(mid, y, 1.0)
        out = np.where(mid, 2.0 * np.sqrt(ys) - ys - 1.0, out)
        out = np.where(y > 1.0, 0.0, out)
    else:
        p = obj.p
        mid = (y >= 0.0) & (y <= p)
        ys = np.where(mid, y, p)
        coef = p ** (1.0 / (p + 1.0)) + p ** (-p / (p + 1.0))
        out = np.where(mid, ys ** (p / (p + 1.0)) * coef - ys - 1.0, out)
        out = np.where(y > p, 0.0, out)
    return float(out) if scalar else out


def h_conj_prime(obj, y):
    """Derivative of h*: the minimizer u*(y) = (h')^{-1}(y) clipped at 0.

    Defined for y > 0; not meaningful for the linear kind.
    """
    if obj.kind == "linear":
        raise ValueError("conjugate of the linear kind has no usable derivative")
    y, scalar = _shaped(y)
    if np.any(y <= 0.0):
        raise RangeError("h_conj_prime needs y > 0")
    if obj.kind == "dopt":
        out = 1.0 / y - 1.0
    elif obj.kind == "aopt":
        out = y ** -0.5 - 1.0
    else:
        out = (obj.p / y) ** (1.0 / (obj.p + 1.0)) - 1.0
    out = np.maximum(out, 0.0)
    return float(out) if scalar else out


def psd_eigs(M):
    """Eigendecomposition with a PSD check at TOL_EIG * ||M||_F."""
    w, V = eig_sym(M)
    fro = float(np.sqrt(np.sum(w * w)))
    if fro > 0.0 and w[-1] < -TOL_EIG * fro:
        raise NotPSD("smallest eigenvalue %g below -%g * ||M||" % (w[-1], TOL_EIG))
    return w, V


def trace_lift(obj, M):
    """H(M) = sum_i h(lambda_i(M)); requires M PSD up to tolerance."""
    w, _ = psd_eigs(M)
    return float(np.sum(h_eval(obj, w)))


def grad_trace_lift(obj, M):
    """Gradient of the trace lift: h' applied through the spectrum of M."""
    w, V = psd_eigs(M)
    return sym((V * h_prime(obj, w)) @ V.T)
