import dataclasses

import numpy as np
import pytest

from sigmort.arima import CoeffModel, forecast_coeff
from sigmort.decomposition import LcModel, fit_huts
from sigmort.errors import FitError, InsufficientDataError
from sigmort.forecast import fit_coeff_models, forecast_lc, point_forecast


def rwd(series, c, s2=1.0):
    return CoeffModel(0, 1, 0, True, c, np.zeros(0), np.zeros(0), s2, 0.0, 0.0, np.asarray(series, float))


def test_eq2_additivity(huts):
    b = point_forecast(huts, 8)
    extra = b.variance - (huts.mean_variance + huts.fit_variance + huts.obs_variance)
    np.testing.assert_allclose(extra, b.coeff_vars @ (huts.basis**2).T, rtol=1e-10, atol=1e-14)
    assert np.all(b.variance > 0)
    assert np.all(np.diff(b.coeff_vars, axis=0) >= -1e-12)
    assert b.point.shape == (8, huts.grid.size) and b.H == 8


def test_two_stage_oracle(huts):
    b = point_forecast(huts, 5)
    for h in range(5):
        curve = huts.mean.copy()
        for k, cm in enumerate(b.coeff_models):
            curve = curve + forecast_coeff(cm, 5)[0][h] * huts.basis[:, k]
        np.testing.assert_allclose(b.point[h], curve, rtol=0, atol=1e-8)


def test_constant_coefficients(huts):
    c = np.arange(1.0, huts.K + 1)
    const = dataclasses.replace(huts, coeffs=np.tile(c, (huts.n_years, 1)))
    b = point_forecast(const, 4)
    for h in range(4):
        np.testing.assert_allclose(b.point[h], huts.mean + huts.basis @ c, atol=1e-10)


def test_zero_components(huts):
    empty = dataclasses.replace(huts, basis=np.zeros((huts.grid.size, 0)), coeffs=np.zeros((huts.n_years, 0)))
    b = point_forecast(empty, 3)
    np.testing.assert_array_equal(b.point, np.tile(huts.mean, (3, 1)))
    np.testing.assert_allclose(b.variance, np.tile(huts.mean_variance + huts.fit_variance + huts.obs_variance, (3, 1)))


def test_drift_shift(huts):
    drifts = np.linspace(-0.2, 0.2, huts.K)
    models = [rwd(huts.coeffs[:, k], drifts[k]) for k in range(huts.K)]
    b = point_forecast(huts, 1, coeff_models=models)
    last = huts.mean + huts.basis @ huts.coeffs[-1]
    np.testing.assert_allclose(b.point[0] - last, huts.basis @ drifts, atol=1e-12)


def test_wrong_model_count(huts):
    with pytest.raises(FitError):
        point_forecast(huts, 2, coeff_models=[])


def test_needs_ten_years(smoothed):
    with pytest.raises(InsufficientDataError):
        fit_coeff_models(fit_huts(smoothed.head(8), K=3))




class TestLc:
    def _model(self, k, b=None):
        p = 5
        a = np.linspace(-6, -1, p)
        b = np.full(p, 1 / p) if b is None else b
        return LcModel(np.arange(p), np.arange(len(k)), a, b, np.asarray(k, float))

    def test_linear_k(self):
        k = 4.0 - 0.5 * np.arange(20)
        f = forecast_lc(self._model(k), 6)
        np.testing.assert_allclose(f.k_mean, 4.0 - 0.5 * np.arange(20, 26), rtol=1e-12)
        assert f.drift == pytest.approx(-0.5)

    def test_zero_loading(self):
        b = np.array([0.5, 0.0, 0.25, 0.25, 0.0])
        m = self._model(np.cumsum(np.random.default_rng(0).normal(size=15)), b)
        f = forecast_lc(m, 4)
        np.testing.assert_array_equal(f.point[:, 1], m.a[1])

    def test_closed_form(self):
        rng = np.random.default_rng(4)
        k = np.cumsum(rng.normal(-0.8, 0.4, 30))
        m = self._model(k - k.mean())
        f = forecast_lc(m, 10)
        dk = np.diff(m.k)
        h = np.arange(1, 11)
        expect = m.a + np.outer(m.k[-1] + h * dk.mean(), m.b)
        np.testing.assert_allclose(f.point, expect, rtol=0, atol=1e-12)
        s2 = dk.var(ddof=1)
        np.testing.assert_allclose(f.k_var, s2 * h + h**2 * s2 / dk.size, rtol=1e-12)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            forecast_lc(self._model([1.0, 2.0]), 3)


def test_linear_trend_scores_extrapolated(rng):
    from sigmort.smoothing import SmoothSurface

    q, n = 20, 30
    basis, _ = np.linalg.qr(rng.normal(size=(q, 2)))
    mu = rng.normal(size=q)
    t = np.arange(n + 5.0)
    beta = np.column_stack([1.0 - 0.3 * t, 0.5 + 0.1 * t])
    truth = mu + beta @ basis.T
    s = SmoothSurface(np.arange(n), np.arange(q, dtype=float), truth[:n], np.ones((n, q)), truth[:n],
                      np.zeros((n, q)), np.ones(n), np.ones(n), True)
    from sigmort.decomposition import fit_fpca

    b = point_forecast(fit_fpca(s, K=1), 5)  # centered linear scores have rank 1
    np.testing.assert_allclose(b.point, truth[n:], atol=1e-6)
