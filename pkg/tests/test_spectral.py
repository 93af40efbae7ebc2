import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from psdalloc.spectral import (
    TOL_EIG,
    DomainError,
    InvalidMatrix,
    ShapeError,
    eig_sym,
    psd_order_gap,
    spectral_apply,
    sym,
)

finite = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)


def random_sym(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) * scale
    return 0.5 * (A + A.T)


def random_psd(rng, n, scale=1.0):
    B = rng.standard_normal((n, n)) * scale
    return B @ B.T


def test_eig_identity():
    w, V = eig_sym(np.eye(3))
    assert np.allclose(w, 1.0)
    assert np.allclose(V @ V.T, np.eye(3), atol=TOL_EIG)


def test_eig_diagonal():
    w, V = eig_sym(np.diag([3.0, 1.0]))
    assert np.allclose(w, [3.0, 1.0])
    assert np.allclose(np.abs(V), np.eye(2), atol=TOL_EIG)


@given(a=finite, b=finite, c=finite)
def test_eig_2x2_quadratic_formula(a, b, c):
    # independent closed-form oracle: roots of the characteristic polynomial
    M = np.array([[a, b], [b, c]])
    tr, det = a + c, a * c - b * b
    disc = np.sqrt(max((a - c) ** 2 / 4.0 + b * b, 0.0))
    expected = np.array([tr / 2.0 + disc, tr / 2.0 - disc])
    w, V = eig_sym(M)
    scale = max(1.0, np.linalg.norm(M))
    assert np.all(np.abs(w - expected) <= 1e-10 * scale)
    assert abs(w[0] * w[1] - det) <= 1e-9 * max(1.0, abs(det), scale**2)


def test_eig_reconstruction_and_orthonormality(rng):
    for n in (1, 2, 5, 12):
        M = random_sym(rng, n, scale=3.0)
        w, V = eig_sym(M)
        scale = max(np.linalg.norm(M), 1.0)
        assert np.all(np.diff(w) <= 1e-12 * scale)
        assert np.linalg.norm((V * w) @ V.T - M) <= TOL_EIG * scale
        assert np.max(np.abs(V.T @ V - np.eye(n))) <= TOL_EIG


def test_eig_shift_invariance(rng):
    M = random_sym(rng, 6)
    eps = 0.37
    w0 = eig_sym(M).values
    w1 = eig_sym(M + eps * np.eye(6)).values
    assert np.allclose(w1, w0 + eps, atol=TOL_EIG * max(1.0, np.linalg.norm(M)))


def test_sym_exactness(rng):
    A = rng.standard_normal((4, 4))
    S = sym(A)
    assert np.array_equal(S, S.T)


def test_invalid_inputs():
    with pytest.raises(InvalidMatrix):
        eig_sym(np.array([[1.0, np.nan], [np.nan, 1.0]]))
    with pytest.raises(InvalidMatrix):
        eig_sym(np.ones((2, 3)))


def test_spectral_apply_identity_scalar():
    out = spectral_apply(np.eye(2), lambda u: np.log1p(u))
    assert np.allclose(out, np.log(2.0) * np.eye(2), atol=1e-12)


def test_spectral_apply_diagonal():
    out = spectral_apply(np.diag([3.0, 1.0]), lambda u: np.log1p(u))
    assert np.allclose(np.sort(np.diag(out)), [np.log(2.0), np.log(4.0)], atol=1e-12)
    assert abs(out[0, 1]) <= 1e-12


def test_spectral_apply_square_is_matrix_product(rng):
    M = random_psd(rng, 3)
    out = spectral_apply(M, lambda u: u * u)
    assert np.linalg.norm(out - M @ M) <= 1e-9 * max(1.0, np.linalg.norm(M) ** 2)


def test_spectral_apply_identity_map(rng):
    M = random_sym(rng, 5)
    out = spectral_apply(M, lambda u: u)
    assert np.linalg.norm(out - M) <= TOL_EIG * max(1.0, np.linalg.norm(M))


def test_spectral_apply_commutes(rng):
    M = random_psd(rng, 4)
    out = spectral_apply(M, np.sqrt)
    assert np.linalg.norm(out @ M - M @ out) <= 1e-9 * max(1.0, np.linalg.norm(M) ** 1.5)


def test_spectral_apply_trace_identity(rng):
    M = random_psd(rng, 5)
    out = spectral_apply(M, np.log1p)
    w = eig_sym(M).values
    assert abs(np.trace(out) - np.sum(np.log1p(w))) <= TOL_EIG * max(1.0, np.linalg.norm(M))


def test_spectral_apply_scalar_only_callable(rng):
    import math

    M = random_psd(rng, 3)
    out = spectral_apply(M, lambda u: math.exp(-u))
    assert np.isfinite(out).all()


def test_spectral_apply_domain_error():
    with pytest.raises(DomainError):
        spectral_apply(np.diag([1.0, -4.0]), np.sqrt)


def test_psd_order_gap_basic():
    assert psd_order_gap(np.zeros((2, 2)), np.eye(2)) == pytest.approx(1.0)
    assert psd_order_gap(np.eye(2), np.zeros((2, 2))) == pytest.approx(-1.0)


def test_psd_order_gap_rank_one_update(rng):
    A = random_sym(rng, 4)
    v = rng.standard_normal(4)
    assert psd_order_gap(A, A + np.outer(v, v)) >= -1e-12


def test_psd_order_gap_shape_error():
    with pytest.raises(ShapeError):
        psd_order_gap(np.eye(2), np.eye(3))
