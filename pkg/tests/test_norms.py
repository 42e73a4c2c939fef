import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gluonmvr.norms import (
    NormKind,
    dual_norm,
    lmo_direction,
    norm,
    polar_factor_newton_schulz,
    polar_factor_svd,
    rho_bound,
)

ALL_KINDS = list(NormKind)


def random_matrix(rng, max_dim=12):
    m = int(rng.integers(1, max_dim + 1))
    n = int(rng.integers(1, max_dim + 1))
    return rng.standard_normal((m, n))


# -- norm --------------------------------------------------------------------


def test_euclidean_pythagorean():
    assert norm(NormKind.EUCLIDEAN, np.array([[3.0, 4.0]])) == pytest.approx(5.0)


def test_spectral_zero_matrix():
    assert norm(NormKind.SPECTRAL, np.zeros((3, 2))) == 0.0


def test_spectral_matches_bruteforce_eigendecomposition():
    # independent oracle: largest singular value via eig of X^T X
    X = np.array([[3.0, 0.0], [0.0, -4.0]])
    eigvals = np.linalg.eigvalsh(X.T @ X)
    assert norm(NormKind.SPECTRAL, X) == pytest.approx(np.sqrt(eigvals.max()))
    assert norm(NormKind.SPECTRAL, X) == pytest.approx(4.0)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_norm_axioms_on_random_matrices(kind):
    rng = np.random.default_rng(0)
    for _ in range(200):
        X = random_matrix(rng)
        Y = rng.standard_normal(X.shape)
        c = float(rng.standard_normal())
        nx, ny = norm(kind, X), norm(kind, Y)
        assert nx >= 0.0
        assert norm(kind, c * X) == pytest.approx(abs(c) * nx, rel=1e-12, abs=1e-12)
        assert norm(kind, X + Y) <= nx + ny + 1e-12
    assert norm(kind, np.zeros((4, 5))) == 0.0


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_norm_rejects_non_finite(kind):
    bad = np.array([[1.0, np.nan]])
    with pytest.raises(ValueError):
        norm(kind, bad)
    with pytest.raises(ValueError):
        dual_norm(kind, np.array([[np.inf]]))
    with pytest.raises(ValueError):
        lmo_direction(kind, bad)


# -- dual norm -----------------------------------------------------------------


def test_dual_euclidean_self_dual():
    assert dual_norm(NormKind.EUCLIDEAN, np.array([[3.0, 4.0]])) == pytest.approx(5.0)


def test_dual_max_entry_is_l1():
    assert dual_norm(NormKind.MAX_ENTRY, np.array([[1.0, -2.0], [0.0, 3.0]])) == 6.0


def test_dual_spectral_is_nuclear_norm():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((4, 3))
    # exact: sum of singular values via eigendecomposition of M^T M
    exact = float(np.sum(np.sqrt(np.maximum(np.linalg.eigvalsh(M.T @ M), 0.0))))
    got = dual_norm(NormKind.SPECTRAL, M)
    assert got == pytest.approx(exact, rel=1e-10)
    # Monte-Carlo supremum over random unit-spectral-norm matrices never exceeds
    # it, and random extreme points (polar factors) come within a modest factor
    best = 0.0
    for _ in range(10_000):
        Y = polar_factor_svd(rng.standard_normal((4, 3)))
        best = max(best, float(np.sum(M * Y)))
    assert best <= got * (1.0 + 1e-9)
    assert best >= 0.85 * got


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_hoelder_pairing(seed):
    rng = np.random.default_rng(seed)
    X = random_matrix(rng)
    Y = rng.standard_normal(X.shape)
    for kind in ALL_KINDS:
        lhs = abs(float(np.sum(X * Y)))
        assert lhs <= dual_norm(kind, X) * norm(kind, Y) * (1.0 + 1e-9) + 1e-12


# -- LMO direction ----------------------------------------------------------------


def test_lmo_spectral_identity():
    assert np.allclose(lmo_direction(NormKind.SPECTRAL, np.eye(2)), np.eye(2))


def test_lmo_max_entry_sign_with_zero():
    M = np.array([[1.0, -2.0], [0.0, 3.0]])
    assert np.array_equal(
        lmo_direction(NormKind.MAX_ENTRY, M), np.array([[1.0, -1.0], [0.0, 1.0]])
    )


def test_lmo_euclidean_normalizes():
    got = lmo_direction(NormKind.EUCLIDEAN, np.array([[3.0, 4.0]]))
    assert np.allclose(got, np.array([[0.6, 0.8]]))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_lmo_zero_maps_to_zero(kind):
    assert not lmo_direction(kind, np.zeros((3, 4))).any()


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_lmo_sharpness_1000_random(kind):
    rng = np.random.default_rng(2)
    for _ in range(1000):
        M = random_matrix(rng)
        D = lmo_direction(kind, M)
        dual = dual_norm(kind, M)
        assert norm(kind, D) <= 1.0 + 1e-9
        assert float(np.sum(M * D)) == pytest.approx(dual, rel=1e-8, abs=1e-8)


# -- polar factors ------------------------------------------------------------------


def test_polar_svd_identity():
    assert np.allclose(polar_factor_svd(np.eye(3)), np.eye(3))


def test_polar_svd_diag_signs():
    # brute-force 2x2 SVD: diag(3, -4) = diag(1, 1) @ diag(3, 4) @ diag(1, -1)
    got = polar_factor_svd(np.diag([3.0, -4.0]))
    assert np.allclose(got, np.diag([1.0, -1.0]))


def test_polar_svd_rank_one():
    rng = np.random.default_rng(3)
    u = rng.standard_normal(5)
    v = rng.standard_normal(4)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    M = 2.5 * np.outer(u, v)
    D = polar_factor_svd(M)
    assert np.allclose(D, np.outer(u, v), atol=1e-10)
    # <M, D> equals the top singular value from power iteration
    B = M.T @ M
    x = np.ones(4)
    for _ in range(100):
        x = B @ x
        x /= np.linalg.norm(x)
    sigma1 = np.sqrt(x @ B @ x)
    assert float(np.sum(M * D)) == pytest.approx(sigma1, rel=1e-8)


def test_polar_svd_zero_matrix_documented():
    assert not polar_factor_svd(np.zeros((2, 3))).any()


def test_polar_svd_idempotent():
    rng = np.random.default_rng(4)
    for _ in range(20):
        D = polar_factor_svd(rng.standard_normal((6, 4)))
        assert np.allclose(polar_factor_svd(D), D, atol=1e-8)


def test_polar_svd_singular_values_in_zero_one():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((7, 3)) @ np.diag([1.0, 1e-14, 0.5])  # near rank-deficient
    s = np.linalg.svd(polar_factor_svd(M), compute_uv=False)
    assert np.all((np.abs(s - 1.0) < 1e-10) | (np.abs(s) < 1e-10))


def test_newton_schulz_identity_fixed_point():
    got = polar_factor_newton_schulz(np.eye(2), iters=5)
    assert np.max(np.abs(got - np.eye(2))) < 1e-6


def test_newton_schulz_mildly_conditioned_diag():
    got = polar_factor_newton_schulz(np.diag([1.0, 0.5]), iters=5)
    assert np.max(np.abs(got - np.eye(2))) <= 0.05


def test_newton_schulz_well_conditioned_8x8():
    rng = np.random.default_rng(6)
    for _ in range(10):
        U, _, Vt = np.linalg.svd(rng.standard_normal((8, 8)))
        M = U @ np.diag(rng.uniform(0.2, 1.0, 8)) @ Vt
        err = np.max(np.abs(polar_factor_newton_schulz(M, iters=5) - polar_factor_svd(M)))
        assert err <= 0.05


def test_newton_schulz_error_non_increasing():
    rng = np.random.default_rng(7)
    U, _, Vt = np.linalg.svd(rng.standard_normal((6, 6)))
    M = U @ np.diag(rng.uniform(0.3, 1.0, 6)) @ Vt
    ref = polar_factor_svd(M)
    errs = [
        np.linalg.norm(polar_factor_newton_schulz(M, iters=i) - ref)
        for i in range(1, 8)
    ]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_newton_schulz_zero_matrix():
    assert not polar_factor_newton_schulz(np.zeros((3, 3))).any()


def test_newton_schulz_tall_matrix():
    rng = np.random.default_rng(8)
    U, _, Vt = np.linalg.svd(rng.standard_normal((9, 4)), full_matrices=False)
    M = U @ np.diag(rng.uniform(0.3, 1.0, 4)) @ Vt
    err = np.max(np.abs(polar_factor_newton_schulz(M, iters=5) - polar_factor_svd(M)))
    assert err <= 0.05


# -- rho bound ---------------------------------------------------------------------


def test_rho_values():
    assert rho_bound(NormKind.SPECTRAL, 4, 3) == pytest.approx(np.sqrt(3))
    assert rho_bound(NormKind.EUCLIDEAN, 10, 2) == 1.0
    assert rho_bound(NormKind.MAX_ENTRY, 2, 2) == 2.0


def test_rho_rejects_bad_dims():
    with pytest.raises(ValueError):
        rho_bound(NormKind.SPECTRAL, 0, 3)


@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("shape", [(2, 2), (4, 3), (8, 8)])
def test_rho_validity_1000_random(kind, shape):
    rng = np.random.default_rng(9)
    bound = rho_bound(kind, *shape)
    for _ in range(1000):
        X = rng.standard_normal(shape)
        assert dual_norm(kind, X) <= bound * np.linalg.norm(X) * (1.0 + 1e-9)
