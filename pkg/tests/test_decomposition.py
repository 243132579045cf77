import numpy as np
import pytest

from sigmort.decomposition import (
    basis_at,
    expected_columns,
    fit_fpca,
    fit_huts,
    fit_lc,
    mean_curve,
    regress_scores,
    signature_matrix,
    svd_scores,
)
from sigmort.errors import DegenerateDataError, DomainError, RankError
from sigmort.ingest import LogMortalitySurface
from sigmort.signature import augment_path, path_signature
from sigmort.smoothing import SmoothSurface


def _smooth(values, sigma=None):
    values = np.asarray(values, dtype=float)
    n, q = values.shape
    known = sigma is not None
    return SmoothSurface(
        years=np.arange(1950, 1950 + n), grid=np.arange(q, dtype=float), values=values,
        sigma=np.ones((n, q)) if sigma is None else sigma, observed=values,
        std_residuals=np.zeros((n, q)), lams=np.ones(n), edf=np.ones(n), sigma_known=known,
    )


class TestMean:
    def test_two_curves(self):
        np.testing.assert_array_equal(mean_curve(_smooth([[1, 2, 3], [3, 2, 1]])), [2, 2, 2])

    def test_identical(self):
        np.testing.assert_array_equal(mean_curve(_smooth([[1.5, 2.5]] * 4)), [1.5, 2.5])

    def test_resummation(self, smoothed):
        ref = np.array([sum(smoothed.values[:, i].tolist()) / smoothed.n_years
                        for i in range(smoothed.values.shape[1])])
        np.testing.assert_allclose(mean_curve(smoothed), ref, rtol=1e-14)


class TestSignatureMatrix:
    def test_single_age(self, rng):
        vals = rng.normal(size=(6, 1))
        s = signature_matrix(_smooth(vals), 2)
        np.testing.assert_allclose(s[0], path_signature(augment_path(vals[:, 0]), 2).coefficients[1:])

    def test_identical_rows(self, rng):
        col = rng.normal(size=8)
        s = signature_matrix(_smooth(np.column_stack([col, col])), 3)
        np.testing.assert_array_equal(s[0], s[1])

    def test_column_count(self, smoothed):
        assert signature_matrix(smoothed, 2).shape == (smoothed.values.shape[1], 12)
        assert expected_columns(2) == 12


class TestSvd:
    def test_rank_one(self, rng):
        col = rng.normal(size=10)
        s = np.zeros((10, 4))
        s[:, 2] = col
        z, _, _ = svd_scores(s, 1)
        c = col - col.mean()
        cos = abs(z[:, 0] @ c) / (np.linalg.norm(z[:, 0]) * np.linalg.norm(c))
        assert cos == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_and_sign(self, rng):
        z, _, _ = svd_scores(rng.normal(size=(20, 12)), 6)
        g = z.T @ z
        off = g - np.diag(np.diag(g))
        assert np.max(np.abs(off)) <= 1e-8 * np.max(np.diag(g))
        idx = np.argmax(np.abs(z), axis=0)
        assert np.all(z[idx, np.arange(6)] > 0)

    def test_eckart_young(self, rng):
        s = rng.normal(size=(20, 12))
        z, sv, v = svd_scores(s, 6)
        sc = s - s.mean(axis=0)
        full = np.linalg.svd(sc, compute_uv=False)
        err = np.linalg.norm(sc - z @ v.T) ** 2
        assert err == pytest.approx(np.sum(full[6:] ** 2), rel=1e-8)
        np.testing.assert_allclose(sv, full, rtol=1e-12)

    def test_rank_error(self, rng):
        s = np.outer(rng.normal(size=10), rng.normal(size=5))
        with pytest.raises(RankError) as exc:
            svd_scores(s, 3, center=False)
        assert exc.value.effective_rank == 1

    def test_uncentered_option(self, rng):
        s = rng.normal(size=(10, 5)) + 3.0
        z, sv, _ = svd_scores(s, 2, center=False)
        np.testing.assert_allclose(sv, np.linalg.svd(s, compute_uv=False), rtol=1e-12)


class TestRegress:
    def test_exact_span(self, rng):
        q, K, n = 15, 3, 8
        basis, _ = np.linalg.qr(rng.normal(size=(q, K)))
        basis *= [2.0, 0.5, 1.3]
        mu = rng.normal(size=q)
        beta = rng.normal(size=(n, K))
        b, e, v, _ = regress_scores(basis, mu + beta @ basis.T, mu)
        np.testing.assert_allclose(b, beta, atol=1e-10)
        np.testing.assert_allclose(e, 0, atol=1e-12)

    def test_orthogonal_data(self, rng):
        basis, _ = np.linalg.qr(rng.normal(size=(10, 4)))
        y = rng.normal(size=10)
        y -= basis @ (basis.T @ y)
        b, _, _, _ = regress_scores(basis[:, :3], y[None, :], np.zeros(10))
        np.testing.assert_allclose(b, 0, atol=1e-14)

    def test_noisy_recovery(self, rng):
        q, K, n, sd = 40, 4, 60, 0.01
        basis, _ = np.linalg.qr(rng.normal(size=(q, K)))
        beta = rng.normal(size=(n, K))
        y = beta @ basis.T + sd * rng.normal(size=(n, q))
        b, _, _, _ = regress_scores(basis, y, np.zeros(q))
        se = sd / np.linalg.norm(basis, axis=0)
        assert np.mean(np.abs(b - beta)) < 3 * se.mean()

    def test_mean_variance(self, rng):
        sig = rng.uniform(0.1, 0.2, (5, 3))
        _, _, v, mv = regress_scores(np.zeros((3, 0)), rng.normal(size=(5, 3)), np.zeros(3), sig)
        np.testing.assert_allclose(mv, (sig**2).sum(axis=0) / 25)
        _, _, v, mv = regress_scores(np.zeros((3, 0)), rng.normal(size=(5, 3)), np.zeros(3))
        np.testing.assert_allclose(mv, v / 5)


class TestHuts:
    def test_invariants(self, huts, smoothed):
        z = huts.basis
        g = z.T @ z
        norms = np.sqrt(np.diag(g))
        assert np.all(np.abs(g - np.diag(np.diag(g))) <= 1e-8 * np.outer(norms, norms))
        np.testing.assert_allclose(huts.fitted_curves() + huts.residuals, smoothed.values, atol=1e-12)
        np.testing.assert_allclose(huts.residuals @ z, 0, atol=1e-8)
        assert huts.m == 2 and huts.sig_columns == 12 and huts.K == 6

    def test_variance_decomposition(self, huts, smoothed):
        y = smoothed.values - huts.mean
        fit = huts.coeffs @ huts.basis.T
        # exact per year once summed over ages
        np.testing.assert_allclose(np.sum(y**2, axis=1),
                                   np.sum(fit**2, axis=1) + np.sum(huts.residuals**2, axis=1), rtol=1e-8)

    def test_variance_decomposition_full_rank(self, rng):
        vals = rng.normal(size=(12, 5)).cumsum(axis=0)
        m = fit_huts(_smooth(vals), m=2, K=5)
        y = vals - m.mean
        rhs = np.mean((m.coeffs @ m.basis.T) ** 2, axis=0) + m.fit_variance
        np.testing.assert_allclose(np.mean(y**2, axis=0), rhs, rtol=1e-8)

    def test_full_rank_perfect(self, rng):
        vals = rng.normal(size=(12, 5)).cumsum(axis=0)
        m = fit_huts(_smooth(vals), m=2, K=5)
        assert np.max(np.abs(m.residuals)) <= 1e-8

    def test_m2_k6_on_13_ages(self, rng):
        vals = rng.normal(size=(20, 13)).cumsum(axis=0)
        assert fit_huts(_smooth(vals), m=2, K=6).K == 6

    def test_deterministic(self, smoothed):
        a, b = fit_huts(smoothed), fit_huts(smoothed)
        for f in ("mean", "basis", "coeffs", "residuals", "fit_variance", "mean_variance"):
            assert np.array_equal(getattr(a, f), getattr(b, f))

    def test_centered_rank_five(self, smoothed):
        with pytest.raises(RankError) as exc:
            fit_huts(smoothed, m=2, K=6, center=True)
        assert exc.value.effective_rank == 5
        assert fit_huts(smoothed, m=2, K=5, center=True).K == 5

    def test_obs_variance_window(self, rng):
        sig = np.linspace(0.1, 0.3, 15)[:, None] * np.ones((15, 4))
        m = fit_huts(_smooth(rng.normal(size=(15, 4)).cumsum(0), sigma=sig), m=2, K=3)
        np.testing.assert_allclose(m.obs_variance, np.mean(sig[-10:] ** 2, axis=0))


class TestFpca:
    def test_rank_one(self, rng):
        vals = np.outer(rng.normal(size=20), rng.normal(size=10)) + 1.0
        m = fit_fpca(_smooth(vals), K=1)
        y = vals - vals.mean(axis=0)
        explained = np.sum((m.coeffs @ m.basis.T) ** 2) / np.sum(y**2)
        assert explained >= 0.9999

    def test_orthonormal(self, huts, smoothed):
        m = fit_fpca(smoothed, K=6)
        np.testing.assert_allclose(m.basis.T @ m.basis, np.eye(6), atol=1e-10)

    def test_tail_bound(self, smoothed):
        m = fit_fpca(smoothed, K=4)
        y = smoothed.values - m.mean
        sv = np.linalg.svd(y, compute_uv=False)
        assert np.sum(m.residuals**2) == pytest.approx(np.sum(sv[4:] ** 2), rel=1e-8)


def _log(y):
    y = np.asarray(y, dtype=float)
    return LogMortalitySurface(np.arange(y.shape[0]), np.arange(2000, 2000 + y.shape[1]), y, 0.0, None, {})


class TestLc:
    def _gen(self, rng, p=20, n=30):
        a = rng.normal(-5, 1, p)
        b = rng.uniform(0.2, 1.0, p)
        b /= b.sum()
        k = np.cumsum(rng.normal(-1, 0.5, n))
        k -= k.mean()
        return a, b, k

    def test_exact_recovery(self, rng):
        a, b, k = self._gen(rng)
        m = fit_lc(_log(a[:, None] + np.outer(b, k)))
        np.testing.assert_allclose(m.b, b, atol=1e-8)
        np.testing.assert_allclose(m.k, k, atol=1e-8)
        np.testing.assert_allclose(m.a, a, atol=1e-12)

    def test_constant_shift(self, rng):
        y = rng.normal(size=(10, 15))
        m1, m2 = fit_lc(_log(y)), fit_lc(_log(y + 3.0))
        np.testing.assert_allclose(m2.a, m1.a + 3.0, atol=1e-12)
        np.testing.assert_allclose(m2.b, m1.b, atol=1e-10)
        np.testing.assert_allclose(m2.k, m1.k, atol=1e-10)

    def test_normalization(self, rng):
        m = fit_lc(_log(rng.normal(size=(12, 25))))
        assert abs(m.b.sum() - 1) <= 1e-10 and abs(m.k.sum()) <= 1e-10

    def test_degenerate(self):
        with pytest.raises(DegenerateDataError):
            fit_lc(_log(np.ones((4, 6))))


class TestBasisAt:
    def test_grid_point(self, huts):
        np.testing.assert_array_equal(basis_at(huts, huts.grid[7]), huts.basis[7])

    def test_midpoint(self, huts):
        x = 0.5 * (huts.grid[3] + huts.grid[4])
        np.testing.assert_allclose(basis_at(huts, x), 0.5 * (huts.basis[3] + huts.basis[4]), rtol=1e-14)

    def test_sweep(self, huts):
        xs = np.linspace(huts.grid[0], huts.grid[-1], 997)
        out = basis_at(huts, xs)
        for k in range(huts.K):
            lo = np.clip(np.searchsorted(huts.grid, xs, side="right") - 1, 0, huts.grid.size - 2)
            t = (xs - huts.grid[lo]) / (huts.grid[lo + 1] - huts.grid[lo])
            ref = (1 - t) * huts.basis[lo, k] + t * huts.basis[lo + 1, k]
            np.testing.assert_allclose(out[:, k], ref, rtol=1e-14, atol=1e-14 * np.abs(huts.basis[:, k]).max())

    def test_extrapolation(self, huts):
        with pytest.raises(DomainError):
            basis_at(huts, huts.grid[-1] + 1)
