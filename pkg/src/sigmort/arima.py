"""Automatic ARIMA for coefficient series.

Differencing order by repeated KPSS tests, then a stepwise search over
``p, q <= 3`` ranked by AICc. Parameters maximize the exact Gaussian
likelihood evaluated by the Kalman filter, with AR and MA polynomials
parameterized through partial autocorrelations so every candidate is
stationary and invertible.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from sigmort.errors import DataError, FitError, InsufficientDataError
from sigmort.kernels.kalman import arma_filter, arma_negloglik, arma_system

MAX_P = 3
MAX_Q = 3
MAX_D = 2
MIN_LENGTH = 10
KPSS_CRIT_5PCT = 0.463
_PACF_CLIP = 7.0
_CONST_TOL = 1e-12


@dataclass(frozen=True)
class CoeffModel:
    p: int
    d: int
    q: int
    include_const: bool
    const: float
    phi: np.ndarray
    theta: np.ndarray
    sigma2: float
    loglik: float
    aicc: float
    series: np.ndarray

    @property
    def order(self):
        return (self.p, self.d, self.q)

    @property
    def drift(self) -> bool:
        return self.include_const and self.d == 1

    @property
    def n_params(self) -> int:
        return self.p + self.q + int(self.include_const) + 1

    @property
    def n(self) -> int:
        return self.series.size

    def label(self) -> str:
        extra = ""
        if self.include_const:
            extra = " with drift" if self.d == 1 else " with mean"
        return f"ARIMA({self.p},{self.d},{self.q}){extra}"


def pacf_to_coeffs(r):
    """Map partial autocorrelations in (-1, 1) to stationary AR coefficients."""
    phi = np.zeros(0)
    for k, rk in enumerate(r):
        phi = np.concatenate([phi - rk * phi[::-1], [rk]]) if k else np.array([rk])
    return phi


def coeffs_to_pacf(phi):
    """Inverse of :func:`pacf_to_coeffs` (Durbin-Levinson step-down)."""
    a = np.asarray(phi, dtype=np.float64).copy()
    out = np.zeros(a.size)
    for k in range(a.size - 1, -1, -1):
        rk = a[k]
        out[k] = rk
        if k == 0:
            break
        denom = 1.0 - rk * rk
        a = (a[:k] + rk * a[:k][::-1]) / denom
    return out


def _unpack(x, p, q):
    u = np.clip(x, -_PACF_CLIP, _PACF_CLIP)
    phi = pacf_to_coeffs(np.tanh(u[:p]))
    theta = -pacf_to_coeffs(np.tanh(u[p:p + q]))
    return phi, theta


def kpss_stat(x) -> float:
    """Level-stationarity KPSS statistic with a Bartlett long-run variance."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    e = x - x.mean()
    s = np.cumsum(e)
    lags = int(3 * math.sqrt(n) / 13)
    lrv = np.dot(e, e) / n
    for j in range(1, lags + 1):
        lrv += 2.0 * (1.0 - j / (lags + 1)) * np.dot(e[j:], e[:-j]) / n
    if lrv <= 0:
        return 0.0
    return float(np.dot(s, s) / (n * n * lrv))


def _is_constant(x) -> bool:
    scale = max(1.0, float(np.max(np.abs(x)))) if x.size else 1.0
    return x.size == 0 or float(np.ptp(x)) <= _CONST_TOL * scale


def select_d(x) -> int:
    x = np.asarray(x, dtype=np.float64)
    d = 0
    while d < MAX_D:
        if _is_constant(x) or x.size < 4:
            break
        if kpss_stat(x) <= KPSS_CRIT_5PCT:
            break
        x = np.diff(x)
        d += 1
    return d


def _sample_pacf(w, p):
    if p == 0:
        return np.zeros(0)
    e = w - w.mean()
    n = e.size
    g0 = np.dot(e, e) / n
    if g0 <= 0:
        return np.zeros(p)
    acf = np.array([np.dot(e[k:], e[:n - k]) / n / g0 for k in range(p + 1)])
    out = np.zeros(p)
    phi = np.zeros(0)
    for k in range(1, p + 1):
        num = acf[k] - np.dot(phi, acf[1:k][::-1])
        den = 1.0 - np.dot(phi, acf[1:k])
        rk = num / den if den > 0 else 0.0
        rk = float(np.clip(rk, -0.95, 0.95))
        phi = np.concatenate([phi - rk * phi[::-1], [rk]])
        out[k - 1] = rk
    return out


def _fit_order(w, p, q, with_const):
    """Maximum-likelihood fit of ARMA(p, q) (+ constant) to ``w``."""
    n = w.size
    starts = [np.concatenate([np.arctanh(_sample_pacf(w, p)), np.zeros(q)])]
    if p:
        starts.append(np.zeros(p + q))
    best = None
    for s in starts:
        x0 = np.concatenate([s, [w.mean()]]) if with_const else s
        if x0.size == 0:
            val = arma_negloglik(x0, w, p, q, with_const)
            best = (val, x0)
            break
        res = minimize(
            arma_negloglik,
            x0,
            args=(w, p, q, with_const),
            method="L-BFGS-B",
            options={"ftol": 1e-10, "gtol": 1e-8, "maxiter": 500},
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best[0] - 1e-8 * abs(best[0])):
            best = (float(res.fun), res.x)
    if best is None or not np.isfinite(best[0]) or best[0] >= 1e9:
        raise FitError(f"likelihood optimization failed for ARMA({p},{q})")
    x = best[1]
    phi, theta = _unpack(x, p, q)
    c = float(x[p + q]) if with_const else 0.0
    ssq, _, _, _ = arma_filter(w - c, phi, theta)
    return phi, theta, c, ssq / n, -best[0]


def _aicc(loglik, k, n):
    if n - k - 1 <= 0:
        return np.inf
    return -2.0 * loglik + 2.0 * k + 2.0 * k * (k + 1) / (n - k - 1)


def fit_arima(x, p, d, q, include_const) -> CoeffModel:
    """Fit a fixed ARIMA order."""
    x = np.asarray(x, dtype=np.float64)
    w = np.diff(x, n=d) if d else x.copy()
    phi, theta, c, s2, ll = _fit_order(w, p, q, include_const and d < 2)
    k = p + q + int(include_const) + 1
    return CoeffModel(p, d, q, include_const, c, phi, theta, s2, ll, _aicc(ll, k, w.size), x.copy())


def _degenerate_model(x, d):
    w = np.diff(x, n=d) if d else x
    c = float(w[0]) if w.size else 0.0
    include = d == 0 or (d == 1 and c != 0.0)
    scale = max(1.0, float(np.max(np.abs(x))))
    s2 = (1e-10 * scale) ** 2
    return CoeffModel(0, d, 0, include, c if include else 0.0, np.zeros(0), np.zeros(0),
                      s2, np.inf, -np.inf, x.copy())


def fit_coeff_model(series, index=None) -> CoeffModel:
    """Automatic ARIMA order selection and fit.

    Ties in AICc (to 1e-8) go to fewer parameters, then lower ``p``.
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    label = f" (series {index})" if index is not None else ""
    if not np.all(np.isfinite(x)):
        raise DataError(f"series contains non-finite values{label}")
    if x.size < MIN_LENGTH:
        raise InsufficientDataError(f"series length {x.size} < {MIN_LENGTH}{label}")

    d = select_d(x)
    w = np.diff(x, n=d) if d else x
    if _is_constant(w):
        return _degenerate_model(x, d)

    const_opts = (True, False) if d < 2 else (False,)
    cache = {}

    def score(p, q, c):
        key = (p, q, c)
        if key not in cache:
            if p > MAX_P or q > MAX_Q or p < 0 or q < 0 or (c and d == 2):
                cache[key] = None
            else:
                try:
                    cache[key] = fit_arima(x, p, d, q, c)
                except FitError:
                    cache[key] = None
        return cache[key]

    def rank(model):
        return (round(model.aicc, 8), model.n_params, model.p)

    start = [(2, 2, True), (0, 0, True), (1, 0, True), (0, 1, True), (0, 0, False)]
    best = None
    for p, q, c in start:
        c = c and d < 2
        mdl = score(p, q, c)
        if mdl is not None and np.isfinite(mdl.aicc) and (best is None or rank(mdl) < rank(best)):
            best = mdl
    if best is None:
        raise FitError(f"no ARIMA candidate could be fitted{label}")

    improved = True
    while improved:
        improved = False
        p0, q0, c0 = best.p, best.q, best.include_const
        moves = [(p0 + dp, q0 + dq, c0) for dp in (-1, 0, 1) for dq in (-1, 0, 1) if dp or dq]
        moves += [(p0, q0, c) for c in const_opts if c != c0]
        for p, q, c in moves:
            mdl = score(p, q, c)
            if mdl is not None and np.isfinite(mdl.aicc) and rank(mdl) < rank(best):
                best = mdl
                improved = True
    return best


def _w_forecast(model: CoeffModel, h: int):
    """Mean and covariance of the next ``h`` values of the differenced series."""
    x = model.series
    w = np.diff(x, n=model.d) if model.d else x
    c = model.const if model.include_const else 0.0
    t, rvec = arma_system(model.phi, model.theta)
    _, _, preds, pnext = arma_filter(w - c, model.phi, model.theta)
    return _project(t, rvec, preds[-1], pnext, h, c, model.sigma2)


def _project(t, rvec, a, pm, h, c, sigma2):
    r = t.shape[0]
    rr = np.outer(rvec, rvec)
    means = np.empty(h)
    covs = [pm]
    powers = [np.eye(r)]
    state = a.copy()
    for j in range(h):
        means[j] = c + state[0]
        state = t @ state
        if j + 1 < h:
            covs.append(t @ covs[-1] @ t.T + rr)
            powers.append(t @ powers[-1])
    cov = np.empty((h, h))
    for i in range(h):
        for j in range(i, h):
            cov[i, j] = cov[j, i] = (powers[j - i] @ covs[i])[0, 0]
    return means, cov * sigma2


def _integration_matrix(h, d):
    low = np.tril(np.ones((h, h)))
    out = np.eye(h)
    for _ in range(d):
        out = low @ out
    return out


def _integrate_base(x, h, d):
    steps = np.arange(1, h + 1)
    if d == 0:
        return np.zeros(h)
    if d == 1:
        return np.full(h, x[-1])
    return x[-1] + steps * (x[-1] - x[-2])


def forecast_coeff(model: CoeffModel, h: int):
    """Mean and variance of the ``1..h``-step forecasts (exact linear projection)."""
    if h < 1:
        raise ValueError("h must be >= 1")
    wm, wc = _w_forecast(model, h)
    m = _integration_matrix(h, model.d)
    mean = _integrate_base(model.series, h, model.d) + m @ wm
    var = np.diag(m @ wc @ m.T).copy()
    return mean, var


def insample_forecast_errors(model: CoeffModel, h: int) -> np.ndarray:
    """``x[t] - x[t | t-h]`` for every admissible target with fixed parameters.

    Targets run over 0-based indices ``t = h .. n-1`` whose origin ``t - h``
    leaves enough history to undo the differencing.
    """
    x = model.series
    n = x.size
    d = model.d
    w = np.diff(x, n=d) if d else x
    c = model.const if model.include_const else 0.0
    t, _ = arma_system(model.phi, model.theta)
    _, _, preds, _ = arma_filter(w - c, model.phi, model.theta)
    m = _integration_matrix(h, d)[h - 1]
    out = []
    for origin in range(max(0, d - 1), n - h):
        state = preds[origin - d + 1].copy()
        wm = np.empty(h)
        for j in range(h):
            wm[j] = c + state[0]
            state = t @ state
        base = _integrate_base(x[: origin + 1], h, d)[h - 1]
        out.append(x[origin + h] - (base + m @ wm))
    return np.asarray(out)
