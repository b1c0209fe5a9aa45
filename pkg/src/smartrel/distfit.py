"""Censored log-location-scale lifetime models (Weibull, lognormal)."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import (
    AllCensored,
    DegenerateData,
    InputError,
    NonPositiveSigma,
    NonPositiveTime,
    ProbabilityOutOfRange,
)
from .relcore import FitResult, LifetimeRecord, maximize, observed_information_cov

FAMILIES = ("weibull", "lognormal")
_LOG_SIGMA_BOUNDS = (-25.0, 10.0)
_DEGENERATE_LOG_SIGMA = -15.0


@dataclass(frozen=True)
class LocScaleParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise NonPositiveSigma(f"sigma must be > 0, got {self.sigma}")


def _check_family(family):
    if family not in FAMILIES:
        raise InputError(f"unknown lifetime family {family!r}; expected one of {FAMILIES}")


def std_cdf(family: str, z):
    _check_family(family)
    z = np.asarray(z, dtype=float)
    if family == "weibull":
        return -np.expm1(-np.exp(z))
    return special.ndtr(z)


def _log_pdf(family, z):
    if family == "weibull":
        return z - np.exp(z)
    return -0.5 * z * z - 0.5 * np.log(2 * np.pi)


def _log_sf(family, z):
    if family == "weibull":
        return -np.exp(z)
    return special.log_ndtr(-z)


def _dlog_pdf(family, z):
    if family == "weibull":
        return 1.0 - np.exp(z)
    return -z


def _dlog_sf(family, z):
    if family == "weibull":
        return -np.exp(z)
    # -phi(z)/S(z), evaluated in log space
    return -np.exp(_log_pdf(family, z) - special.log_ndtr(-z))


def _arrays(data: Sequence[LifetimeRecord]):
    t = np.array([r.time for r in data], dtype=float)
    d = np.array([r.status for r in data], dtype=float)
    if t.size == 0:
        raise InputError("no lifetime records")
    if np.any(~(t > 0)):
        raise NonPositiveTime("all times must be > 0")
    return t, d


def _loglik_internal(u, logt, d, family, fixed_sigma=None):
    """Loglik and gradient in (mu, log sigma)."""
    mu = u[0]
    log_sigma = np.log(fixed_sigma) if fixed_sigma is not None else u[1]
    sigma = np.exp(log_sigma)
    z = (logt - mu) / sigma
    fail = d == 1
    # far-off trial points overflow exp(z); the optimizer treats the resulting inf as a rejection
    with np.errstate(over="ignore", invalid="ignore"):
        ll = np.sum(_log_pdf(family, z[fail]) - log_sigma - logt[fail]) + np.sum(_log_sf(family, z[~fail]))
        dz = np.where(fail, _dlog_pdf(family, z), _dlog_sf(family, z))
        g_mu = np.sum(-dz / sigma)
        g_ls = np.sum(-dz * z) - np.sum(fail)
    if fixed_sigma is not None:
        return float(ll), np.array([g_mu])
    return float(ll), np.array([g_mu, g_ls])


def lifetime_loglik(data: Sequence[LifetimeRecord], family: str, params: LocScaleParams) -> float:
    """Right-censored loglik: failures contribute log f(t), survivors log(1 - F(t))."""
    _check_family(family)
    if not params.sigma > 0:
        raise NonPositiveSigma("sigma must be > 0")
    t, d = _arrays(data)
    return _loglik_internal(np.array([params.mu, np.log(params.sigma)]), np.log(t), d, family)[0]


def lifetime_loglik_grad(data, family: str, internal):
    """Gradient audit hook: loglik and gradient in the internal (mu, log sigma) coordinates."""
    t, d = _arrays(data)
    return _loglik_internal(np.asarray(internal, dtype=float), np.log(t), d, family)


def fit_lifetime(
    data: Sequence[LifetimeRecord],
    family: str,
    *,
    fixed_sigma: float | None = None,
    tol: float = 1e-8,
) -> FitResult:
    """Maximum-likelihood fit of a censored Weibull or lognormal model.

    Optimizes over (mu, log sigma). ``fixed_sigma`` pins the scale, e.g.
    ``fixed_sigma=1`` with ``family="weibull"`` is the exponential model.
    Standard errors come from the observed information, mapped to sigma by
    the delta method.
    """
    _check_family(family)
    t, d = _arrays(data)
    if d.sum() == 0:
        raise AllCensored("AllCensored: at least one failure is required")
    logt = np.log(t)
    lf = logt[d == 1]
    mu0 = float(lf.mean())
    sd = float(lf.std(ddof=1)) if lf.size >= 2 else 0.0
    sigma0 = sd if sd > 0 else 1.0

    if fixed_sigma is not None:
        if not fixed_sigma > 0:
            raise NonPositiveSigma("fixed_sigma must be > 0")
        fun = lambda u: _loglik_internal(u, logt, d, family, fixed_sigma)
        res = maximize(fun, [mu0], jac=True, tol=tol)
        cov_u = observed_information_cov(lambda u: fun(u)[1], res.x)
        mu, sigma = float(res.x[0]), float(fixed_sigma)
        se = None if cov_u is None else np.array([np.sqrt(cov_u[0, 0]), 0.0])
        cov = None if cov_u is None else np.array([[cov_u[0, 0], 0.0], [0.0, 0.0]])
        return FitResult(
            family,
            [mu, sigma],
            res.value,
            se,
            cov,
            res.converged,
            res.n_iter,
            ("mu", "sigma"),
            {"n": int(t.size), "n_failures": int(d.sum()), "fixed_sigma": True, "grad_norm": res.grad_norm},
        )

    fun = lambda u: _loglik_internal(u, logt, d, family)
    res = maximize(fun, [mu0, np.log(sigma0)], jac=True, bounds=[(None, None), _LOG_SIGMA_BOUNDS], tol=tol)
    mu, log_sigma = res.x
    sigma = float(np.exp(log_sigma))
    diag = {"n": int(t.size), "n_failures": int(d.sum()), "grad_norm": res.grad_norm}
    if log_sigma < _DEGENERATE_LOG_SIGMA:
        partial = FitResult(family, [mu, sigma], res.value, None, None, False, res.n_iter, ("mu", "sigma"), diag)
        raise DegenerateData("DegenerateData: scale estimate collapsed to 0 (sigma -> 0)", partial)
    cov_u = observed_information_cov(lambda u: fun(u)[1], res.x)
    se = cov = None
    if cov_u is not None:
        J = np.diag([1.0, sigma])
        cov = J @ cov_u @ J
        se = np.sqrt(np.diag(cov))
    return FitResult(family, [mu, sigma], res.value, se, cov, res.converged, res.n_iter, ("mu", "sigma"), diag)


def params_of(fit: FitResult) -> LocScaleParams:
    return LocScaleParams(float(fit.theta_hat[0]), float(fit.theta_hat[1]))


def reliability_at(params: LocScaleParams, family: str, t):
    """R(t) = 1 - F(t) = 1 - Phi((log t - mu) / sigma)."""
    _check_family(family)
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise NonPositiveTime("t must be > 0")
    z = (np.log(t) - params.mu) / params.sigma
    r = np.exp(_log_sf(family, z))
    return float(r) if r.ndim == 0 else r


def cdf(params: LocScaleParams, family: str, t):
    _check_family(family)
    t = np.asarray(t, dtype=float)
    z = (np.log(t) - params.mu) / params.sigma
    out = std_cdf(family, z)
    return float(out) if out.ndim == 0 else out


def std_quantile(family: str, p):
    _check_family(family)
    p = np.asarray(p, dtype=float)
    if family == "weibull":
        return np.log(-np.log1p(-p))
    return special.ndtri(p)


def quantile(params: LocScaleParams, family: str, p):
    """Time t with F(t) = p."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0) & (p_arr < 1))):
        raise ProbabilityOutOfRange(f"p must lie in (0, 1), got {p}")
    out = np.exp(params.mu + params.sigma * std_quantile(family, p_arr))
    return float(out) if out.ndim == 0 else out


def fit_report(fit: FitResult) -> dict:
    """JSON-ready summary: family, mu, sigma, their SEs, loglik, n, n_failures."""
    se = fit.std_errors if fit.std_errors is not None else [None, None]
    return {
        "family": fit.model_tag,
        "mu": float(fit.theta_hat[0]),
        "sigma": float(fit.theta_hat[1]),
        "se_mu": None if se[0] is None else float(se[0]),
        "se_sigma": None if se[1] is None else float(se[1]),
        "loglik": float(fit.loglik),
        "n": fit.diagnostics["n"],
        "n_failures": fit.diagnostics["n_failures"],
        "converged": bool(fit.converged),
    }

