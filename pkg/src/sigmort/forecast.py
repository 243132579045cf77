"""Point forecasts and the component-variance approximation."""

from dataclasses import dataclass, field

import numpy as np

from sigmort.arima import CoeffModel, fit_coeff_model, forecast_coeff
from sigmort.decomposition import BasisModel, LcModel
from sigmort.errors import FitError, InsufficientDataError, SigmortError


@dataclass(frozen=True)
class ForecastBundle:
    """Forecasts for horizons ``1..H``; curve arrays are ``(H, q)``."""

    grid: np.ndarray
    horizons: np.ndarray
    point: np.ndarray
    variance: np.ndarray
    coeff_means: np.ndarray
    coeff_vars: np.ndarray
    coeff_models: tuple = field(default=(), repr=False)

    @property
    def H(self) -> int:
        return self.horizons.size


def fit_coeff_models(model: BasisModel) -> tuple:
    if model.n_years < 10:
        raise InsufficientDataError(f"need >= 10 years of coefficients, have {model.n_years}")
    out = []
    for k in range(model.K):
        try:
            out.append(fit_coeff_model(model.coeffs[:, k], index=k))
        except SigmortError as exc:
            raise type(exc)(f"component {k}: {exc}") from None
    return tuple(out)


def point_forecast(model: BasisModel, H: int, coeff_models=None) -> ForecastBundle:
    """``mu + sum_k beta_hat[n+h, k] Z_k`` with variance
    ``sigma_mu^2 + sum_k Z_k^2 u[h, k] + v + sigma_obs^2``.
    """
    if H < 1:
        raise ValueError("H must be >= 1")
    models = fit_coeff_models(model) if coeff_models is None else tuple(coeff_models)
    if len(models) != model.K:
        raise FitError(f"expected {model.K} coefficient models, got {len(models)}")
    means = np.zeros((H, model.K))
    vars_ = np.zeros((H, model.K))
    for k, cm in enumerate(models):
        means[:, k], vars_[:, k] = forecast_coeff(cm, H)
    point = model.mean + means @ model.basis.T
    base = model.mean_variance + model.fit_variance + model.obs_variance
    variance = base + vars_ @ (model.basis**2).T
    return ForecastBundle(
        grid=model.grid,
        horizons=np.arange(1, H + 1),
        point=point,
        variance=variance,
        coeff_means=means,
        coeff_vars=vars_,
        coeff_models=models,
    )


@dataclass(frozen=True)
class LcForecast:
    ages: np.ndarray
    horizons: np.ndarray
    point: np.ndarray  # (H, p)
    k_mean: np.ndarray
    k_var: np.ndarray
    drift: float


def forecast_lc(model: LcModel, H: int) -> LcForecast:
    """Random walk with drift on ``k_t``.

    The drift is the mean first difference. ``k_var`` adds the drift
    estimation variance ``h^2 s^2 / (n - 1)`` to the diffusion term ``h s^2``.
    """
    k = np.asarray(model.k, dtype=np.float64)
    if k.size < 3:
        raise InsufficientDataError("Lee-Carter forecasting needs at least 3 years")
    dk = np.diff(k)
    drift = float(dk.mean())
    s2 = float(dk.var(ddof=1))
    h = np.arange(1, H + 1)
    k_mean = k[-1] + h * drift
    k_var = s2 * h + h**2 * s2 / dk.size
    point = model.a[None, :] + np.outer(k_mean, model.b)
    return LcForecast(np.asarray(model.ages), h, point, k_mean, k_var, drift)
