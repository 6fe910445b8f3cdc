"""ARIMA(p, d, q) by conditional least squares.

Estimation: difference ``d`` times, initialize with the Hannan-Rissanen
two-stage regression, then minimize the conditional sum of squared
innovations (pre-sample innovations fixed at zero) with Levenberg-Marquardt.
A mean term is fitted only when ``d == 0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import lfilter


class ArimaError(ValueError):
    pass


@dataclass(frozen=True)
class ArimaConfig:
    p: int = 54
    d: int = 1
    q: int = 1

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ValueError("p and q must be >= 0")
        if self.d not in (0, 1, 2):
            raise ValueError("d must be 0, 1 or 2")


@dataclass
class ArimaFit:
    config: ArimaConfig
    phi: np.ndarray
    theta: np.ndarray
    mean: float
    sigma2: float
    history: np.ndarray
    residuals: np.ndarray

    def forecast(self, horizon: int) -> np.ndarray:
        return _forecast(self, horizon)

    def one_step_errors(self, series) -> np.ndarray:
        """One-step-ahead prediction errors over ``series`` with the fitted
        coefficients held fixed (no refitting).

        Entry ``k`` is the error of predicting ``series[p + d + k]`` from the
        values before it; pre-sample innovations are zero.
        """
        y = np.asarray(series, dtype=np.float64)
        p, d, q = self.config.p, self.config.d, self.config.q
        if len(y) <= p + d:
            raise ArimaError("series too short for the fitted lags")
        w = np.diff(y, n=d) if d else y
        params = np.concatenate([self.phi, self.theta, [self.mean] if d == 0 else []])
        return _css_residuals(params, w, p, q, d == 0)


def _lag_matrix(w: np.ndarray, lags: int, start: int) -> np.ndarray:
    """Rows t = start..n-1, column i = w[t-1-i]."""
    n = len(w)
    return np.column_stack([w[start - 1 - i:n - 1 - i] for i in range(lags)]) if lags else np.zeros((n - start, 0))


def _css_residuals(params: np.ndarray, w: np.ndarray, p: int, q: int, with_mean: bool) -> np.ndarray:
    phi = params[:p]
    theta = params[p:p + q]
    c = params[p + q] if with_mean else 0.0
    r = w[p:] - c - _lag_matrix(w, p, p) @ phi
    # e_t = r_t - sum_j theta_j e_{t-j}
    return lfilter([1.0], np.concatenate([[1.0], theta]), r)


def _invertible(theta: np.ndarray) -> bool:
    if not len(theta):
        return True
    roots = np.roots(np.concatenate([theta[::-1], [1.0]]))
    return bool(np.all(np.abs(roots) > 1.0))


def _hannan_rissanen(w: np.ndarray, p: int, q: int, with_mean: bool) -> np.ndarray:
    n = len(w)
    x0 = w - w.mean() if with_mean else w
    if q:
        m = min(max(p + q, 20), max(n // 4, 1))
        a = _lag_matrix(x0, m, m)
        coef, *_ = np.linalg.lstsq(a, x0[m:], rcond=None)
        e = np.zeros(n)
        e[m:] = x0[m:] - a @ coef
        start = m + q
    else:
        e = np.zeros(n)
        start = p
    start = max(start, p)
    cols = [_lag_matrix(x0, p, start), _lag_matrix(e, q, start)]
    design = np.hstack(cols)
    if design.shape[1] and len(design) > design.shape[1]:
        coef, *_ = np.linalg.lstsq(design, x0[start:], rcond=None)
    else:
        coef = np.zeros(p + q)
    theta = np.clip(coef[p:], -0.9, 0.9)
    init = np.concatenate([coef[:p], theta])
    return np.concatenate([init, [w.mean()]]) if with_mean else init


def arima_fit(history, config: ArimaConfig = ArimaConfig()) -> ArimaFit:
    y = np.asarray(history, dtype=np.float64)
    p, d, q = config.p, config.d, config.q
    if y.ndim != 1 or len(y) <= p + d + q:
        raise ArimaError(f"need more than p+d+q = {p + d + q} observations, got {len(y)}")
    if not np.isfinite(y).all():
        raise ArimaError("history contains non-finite values")
    w = np.diff(y, n=d) if d else y
    with_mean = d == 0
    k = p + q + int(with_mean)
    if len(w) - p <= k:
        raise ArimaError("too few observations after differencing to estimate the coefficients")
    if k:
        x0 = _hannan_rissanen(w, p, q, with_mean)
        sol = least_squares(_css_residuals, x0, args=(w, p, q, with_mean), method="lm", xtol=1e-12,
                            ftol=1e-12, gtol=1e-12, max_nfev=200 * (k + 1))
        params = sol.x
    else:
        params = np.zeros(0)
    phi, theta = params[:p], params[p:p + q]
    if not _invertible(theta):
        raise ArimaError(f"fitted MA polynomial is not invertible (theta={theta})")
    mean = float(params[p + q]) if with_mean else 0.0
    resid = _css_residuals(params, w, p, q, with_mean)
    return ArimaFit(config, phi, theta, mean, float(np.mean(resid ** 2)), y, resid)


def _forecast(fit: ArimaFit, horizon: int) -> np.ndarray:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    p, d, q = fit.config.p, fit.config.d, fit.config.q
    w = list(np.diff(fit.history, n=d) if d else fit.history)
    e = fit.residuals  # innovations up to the origin; future ones are zero
    out = []
    for h in range(horizon):
        val = fit.mean
        for i in range(p):
            val += fit.phi[i] * w[-1 - i]
        for j in range(1, q + 1):
            back = j - h  # e_{n+h+1-j} is known when it lies at or before the origin
            if back >= 1 and back <= len(e):
                val += fit.theta[j - 1] * e[len(e) - back]
        w.append(val)
        out.append(val)
    fc = np.array(out)
    return _integrate(fc, fit.history, d)


def _integrate(fc: np.ndarray, history: np.ndarray, d: int) -> np.ndarray:
    for level in range(d, 0, -1):
        base = np.diff(history, n=level - 1)[-1] if level > 1 else history[-1]
        fc = base + np.cumsum(fc)
    return fc


def arima_fit_forecast(history, config: ArimaConfig = ArimaConfig(), horizon: int = 10) -> np.ndarray:
    return arima_fit(history, config).forecast(horizon)


def simulate_arima(n: int, phi=(), theta=(), d: int = 1, sigma: float = 1.0, seed: Optional[int] = None,
                   burn: int = 200) -> tuple:
    """Simulate an ARIMA path; returns ``(y, innovations)`` with both of length n."""
    rng = np.random.default_rng(seed)
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    eps = sigma * rng.standard_normal(n + burn)
    w = lfilter(np.concatenate([[1.0], theta]), np.concatenate([[1.0], -phi]), eps)[burn:]
    y = w
    for _ in range(d):
        y = np.cumsum(y)
    return y, eps[burn:]
