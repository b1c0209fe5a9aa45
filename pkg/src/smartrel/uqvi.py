"""Mean-field Gaussian variational inference for Bayesian linear regression.

Model: ``y | X, w ~ N(X w, sigma2 I)`` with prior ``w ~ N(0, s0_sq I)`` and
known ``sigma2``. The ELBO and its gradient are closed form, so the fit is
deterministic and the exact conjugate posterior serves as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, InputError, NonConvergence

_LOG2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class BayesLinearModel:
    X: np.ndarray
    y: np.ndarray
    s0_sq: float = 1.0
    sigma_sq: float = 1.0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(y.size, -1) if y.size else X.reshape(0, -1)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise DimensionMismatch(f"X has shape {X.shape} for {y.size} responses")
        if X.shape[1] < 1:
            raise DimensionMismatch("need at least one coefficient")
        if not (self.s0_sq > 0 and self.sigma_sq > 0):
            raise InputError("s0_sq and sigma_sq must be > 0")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError("X and y must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class MeanFieldGaussian:
    m: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        lv = np.atleast_1d(np.asarray(self.log_var, dtype=float))
        if m.shape != lv.shape:
            raise DimensionMismatch("means and log-variances differ in length")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(lv))):
            raise InputError("variational parameters must be finite")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "log_var", lv)

    @property
    def var(self) -> np.ndarray:
        return np.exp(self.log_var)

    @classmethod
    def prior(cls, model: BayesLinearModel) -> MeanFieldGaussian:
        return cls(np.zeros(model.d), np.full(model.d, np.log(model.s0_sq)))


def _check(model, q):
    if q.m.size != model.d:
        raise DimensionMismatch(f"q has {q.m.size} coordinates, model has {model.d}")


def elbo(model: BayesLinearModel, q: MeanFieldGaussian) -> float:
    """Expected log-likelihood plus expected log-prior plus entropy."""
    _check(model, q)
    return _elbo_grad(model, q.m, q.log_var)[0]


def elbo_grad(model: BayesLinearModel, q: MeanFieldGaussian):
    """``(d elbo / d m, d elbo / d log_var)``."""
    _check(model, q)
    _, gm, gl = _elbo_grad(model, q.m, q.log_var)
    return gm, gl


def _elbo_grad(model, m, lv):
    X, y, s2, t2 = model.X, model.y, model.sigma_sq, model.s0_sq
    v = np.exp(lv)
    r = y - X @ m
    a = np.einsum("ij,ij->j", X, X)
    d, n = m.size, y.size
    ell = -0.5 * n * (_LOG2PI + np.log(s2)) - (r @ r + a @ v) / (2 * s2)
    prior = -0.5 * d * (_LOG2PI + np.log(t2)) - (m @ m + v.sum()) / (2 * t2)
    ent = 0.5 * d * (_LOG2PI + 1) + 0.5 * lv.sum()
    gm = X.T @ r / s2 - m / t2
    gl = 0.5 - v * (a / (2 * s2) + 1 / (2 * t2))
    return float(ell + prior + ent), gm, gl


@dataclass(frozen=True)
class VIResult:
    q: MeanFieldGaussian
    elbo_trace: tuple
    n_iter: int
    converged: bool


def fit_vi(
    model: BayesLinearModel,
    *,
    max_iter: int = 500,
    gain_tol: float = 1e-10,
    grad_tol: float = 1e-10,
    q0: MeanFieldGaussian | None = None,
) -> VIResult:
    """Maximize the ELBO by preconditioned gradient ascent with Armijo backtracking.

    The mean block is preconditioned by the inverse of its (constant) negative
    Hessian. Each log-variance coordinate moves toward its stationary value
    ``-log(2 c_j)``, which has the sign of the gradient, so the direction is an
    ascent direction and a full step is exact for both blocks. Steps are
    accepted only if the Armijo test passes, so the trace is monotone.
    """
    q = q0 or MeanFieldGaussian.prior(model)
    _check(model, q)
    X, s2, t2 = model.X, model.sigma_sq, model.s0_sq
    H = X.T @ X / s2 + np.eye(model.d) / t2
    cf = linalg.cho_factor(H)
    a = np.einsum("ij,ij->j", X, X)
    c = a / (2 * s2) + 1 / (2 * t2)
    m, lv = q.m.copy(), q.log_var.copy()
    f, gm, gl = _elbo_grad(model, m, lv)
    trace = [f]
    for it in range(1, max_iter + 1):
        dm = linalg.cho_solve(cf, gm)
        dl = -np.log(2 * c) - lv
        slope = gm @ dm + gl @ dl
        lam, accepted = 1.0, False
        while lam >= 1e-20:
            m_new, lv_new = m + lam * dm, lv + lam * dl
            if np.max(np.abs(lv_new)) < 700:
                f_new, gm_new, gl_new = _elbo_grad(model, m_new, lv_new)
                if f_new >= f + 1e-4 * lam * slope:
                    accepted = True
                    break
            lam /= 2
        if not accepted:
            # no ascent left at floating-point resolution
            gnorm = max(np.max(np.abs(gm)), np.max(np.abs(gl)))
            return VIResult(MeanFieldGaussian(m, lv), tuple(trace), it, bool(gnorm < 1e-6 * (1 + abs(f))))
        gain = f_new - f
        m, lv, f, gm, gl = m_new, lv_new, f_new, gm_new, gl_new
        trace.append(f)
        gnorm = max(np.max(np.abs(gm)), np.max(np.abs(gl)))
        if gain < gain_tol and gnorm < grad_tol * (1 + abs(f)):
            return VIResult(MeanFieldGaussian(m, lv), tuple(trace), it, True)
    raise NonConvergence(f"VI did not converge in {max_iter} iterations")


def posterior_predict(model: BayesLinearModel, q: MeanFieldGaussian, x_new):
    """Predictive ``(mean, variance)`` under q for one point or a matrix of points."""
    _check(model, q)
    x = np.asarray(x_new, dtype=float)
    if x.shape[-1] != model.d:
        raise DimensionMismatch(f"x_new has {x.shape[-1]} features, model has {model.d}")
    mean = x @ q.m
    var = model.sigma_sq + (x**2) @ q.var
    if np.ndim(mean) == 0:
        return float(mean), float(var)
    return mean, var


# --------------------------------------------------------------------------
# conjugate oracle
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactPosterior:
    mean: np.ndarray
    cov: np.ndarray
    log_evidence: float

    def predict(self, x_new, sigma_sq):
        x = np.asarray(x_new, dtype=float)
        return x @ self.mean, sigma_sq + np.einsum("...i,ij,...j->...", x, self.cov, x)


def exact_posterior(model: BayesLinearModel) -> ExactPosterior:
    X, y, s2, t2 = model.X, model.y, model.sigma_sq, model.s0_sq
    prec = X.T @ X / s2 + np.eye(model.d) / t2
    cov = linalg.inv(prec)
    cov = (cov + cov.T) / 2
    mean = cov @ (X.T @ y) / s2
    if model.n == 0:
        logev = 0.0
    else:
        K = s2 * np.eye(model.n) + t2 * X @ X.T
        L = linalg.cholesky(K, lower=True)
        alpha = linalg.solve_triangular(L, y, lower=True)
        logev = float(-0.5 * model.n * _LOG2PI - np.log(np.diag(L)).sum() - 0.5 * alpha @ alpha)
    return ExactPosterior(mean, cov, logev)
