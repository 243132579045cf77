"""Kalman filter for a zero-mean ARMA process in Harvey's state-space form.

State ``alpha_t`` has dimension ``r = max(p, q + 1)``; the observation is its
first element. The innovation variance is fixed to one so the caller can
concentrate the scale out of the likelihood.
"""

import numpy as np

from sigmort._accel import njit, select


def arma_system(phi, theta):
    """Transition matrix ``T`` and loading vector ``R`` for ARMA(p, q)."""
    p, q = len(phi), len(theta)
    r = max(p, q + 1)
    t = np.zeros((r, r))
    t[:p, 0] = phi
    t[np.arange(r - 1), np.arange(1, r)] = 1.0
    rvec = np.zeros(r)
    rvec[0] = 1.0
    rvec[1:q + 1] = theta
    return t, rvec


def stationary_cov(t, rvec):
    """Solve ``P = T P T' + R R'`` for the unconditional state covariance."""
    r = t.shape[0]
    lhs = np.eye(r * r) - np.kron(t, t)
    rhs = np.outer(rvec, rvec).ravel()
    return np.linalg.solve(lhs, rhs).reshape(r, r)


@njit
def _filter_numba(y, t, rvec, p0):
    n = y.shape[0]
    r = t.shape[0]
    a = np.zeros(r)
    pm = p0.copy()
    preds = np.zeros((n + 1, r))
    ssq = 0.0
    sumlog = 0.0
    af = np.zeros(r)
    pf = np.zeros((r, r))
    tmp = np.zeros((r, r))
    for i in range(n):
        v = y[i] - a[0]
        f = pm[0, 0]
        ssq += v * v / f
        sumlog += np.log(f)
        for j in range(r):
            af[j] = a[j] + pm[j, 0] * v / f
        for j in range(r):
            for k in range(r):
                pf[j, k] = pm[j, k] - pm[j, 0] * pm[0, k] / f
        for j in range(r):
            s = 0.0
            for k in range(r):
                s += t[j, k] * af[k]
            a[j] = s
        for j in range(r):
            for k in range(r):
                s = 0.0
                for l in range(r):
                    s += t[j, l] * pf[l, k]
                tmp[j, k] = s
        for j in range(r):
            for k in range(r):
                s = 0.0
                for l in range(r):
                    s += tmp[j, l] * t[k, l]
                pm[j, k] = s + rvec[j] * rvec[k]
        preds[i + 1] = a
    return ssq, sumlog, preds, pm


def _filter_numpy(y, t, rvec, p0):
    n = y.shape[0]
    r = t.shape[0]
    a = np.zeros(r)
    pm = p0.copy()
    preds = np.zeros((n + 1, r))
    rr = np.outer(rvec, rvec)
    f = pm[0, 0]
    ssq = 0.0
    sumlog = 0.0
    for i in range(n):
        f = pm[0, 0]
        v = y[i] - a[0]
        ssq += v * v / f
        sumlog += np.log(f)
        gain = pm[:, 0] / f
        af = a + gain * v
        pf = pm - np.outer(gain, pm[0, :])
        a = t @ af
        pm = t @ pf @ t.T + rr
        preds[i + 1] = a
    return ssq, sumlog, preds, pm


def arma_filter(y, phi, theta):
    """Run the filter; returns ``(ssq, sum_log_f, predicted_states, P_next)``.

    ``predicted_states[i]`` is the state mean before observing ``y[i]``;
    the last row and ``P_next`` describe the first out-of-sample step.
    """
    t, rvec = arma_system(np.asarray(phi, dtype=np.float64), np.asarray(theta, dtype=np.float64))
    p0 = stationary_cov(t, rvec)
    y = np.ascontiguousarray(y, dtype=np.float64)
    return select(_filter_numba, _filter_numpy)(y, t, rvec, p0)


_PACF_CLIP = 7.0
_BAD = 1e10


@njit
def _pacf_to_coeffs_nb(r):
    k = r.shape[0]
    phi = np.zeros(k)
    tmp = np.zeros(k)
    for j in range(k):
        rk = r[j]
        for i in range(j):
            tmp[i] = phi[i] - rk * phi[j - 1 - i]
        for i in range(j):
            phi[i] = tmp[i]
        phi[j] = rk
    return phi


@njit
def _negll_numba(x, w, p, q, with_const):
    for i in range(x.shape[0]):
        if not np.isfinite(x[i]):
            return _BAD
    u = np.empty(p + q)
    for i in range(p + q):
        u[i] = np.tanh(min(max(x[i], -_PACF_CLIP), _PACF_CLIP))
    phi = _pacf_to_coeffs_nb(u[:p])
    theta = -_pacf_to_coeffs_nb(u[p:])
    c = x[p + q] if with_const else 0.0
    r = max(p, q + 1)
    t = np.zeros((r, r))
    for i in range(p):
        t[i, 0] = phi[i]
    for i in range(r - 1):
        t[i, i + 1] = 1.0
    rvec = np.zeros(r)
    rvec[0] = 1.0
    for i in range(q):
        rvec[i + 1] = theta[i]
    lhs = np.eye(r * r)
    for i in range(r):
        for j in range(r):
            for k in range(r):
                for l in range(r):
                    lhs[i * r + k, j * r + l] -= t[i, j] * t[k, l]
    rhs = np.empty(r * r)
    for i in range(r):
        for k in range(r):
            rhs[i * r + k] = rvec[i] * rvec[k]
    p0 = np.linalg.solve(lhs, rhs).reshape((r, r))
    y = w - c
    ssq, sumlog, _, _ = _filter_numba(y, t, rvec, p0)
    n = w.shape[0]
    s2 = ssq / n
    if not np.isfinite(s2) or s2 <= 0.0 or not np.isfinite(sumlog):
        return _BAD
    return 0.5 * n * (np.log(2.0 * np.pi) + 1.0 + np.log(s2)) + 0.5 * sumlog


def _negll_numpy(x, w, p, q, with_const):
    from sigmort.arima import pacf_to_coeffs

    if not np.all(np.isfinite(x)):
        return _BAD
    u = np.tanh(np.clip(x, -_PACF_CLIP, _PACF_CLIP))
    phi = pacf_to_coeffs(u[:p])
    theta = -pacf_to_coeffs(u[p:p + q])
    c = x[p + q] if with_const else 0.0
    t, rvec = arma_system(phi, theta)
    try:
        p0 = stationary_cov(t, rvec)
    except np.linalg.LinAlgError:
        return _BAD
    ssq, sumlog, _, _ = _filter_numpy(np.asarray(w, dtype=np.float64) - c, t, rvec, p0)
    n = w.shape[0]
    s2 = ssq / n
    if not np.isfinite(s2) or s2 <= 0.0 or not np.isfinite(sumlog):
        return _BAD
    return 0.5 * n * (np.log(2.0 * np.pi) + 1.0 + np.log(s2)) + 0.5 * sumlog


def arma_negloglik(x, w, p, q, with_const):
    """Concentrated negative Gaussian log-likelihood of ARMA(p, q) (+ constant).

    ``x`` holds unconstrained AR then MA partial-autocorrelation parameters
    (mapped through ``tanh``) followed by the constant when ``with_const``.
    """
    return select(_negll_numba, _negll_numpy)(
        np.asarray(x, dtype=np.float64), np.ascontiguousarray(w, dtype=np.float64), p, q, with_const
    )
