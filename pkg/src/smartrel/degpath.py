"""General path model for degradation data with Gaussian random effects.

Supported paths are linear in the random effects:

* ``random_intercept_slope``: ``D(t) = (a0 + g0) + (a1 + g1) t``, ``q = 2``
* ``random_slope``:           ``D(t) = a0 + (a1 + g) t``,          ``q = 1``

with ``g ~ MVN(0, Sigma)`` and measurement noise ``N(0, sigma_eps2)``.
"""

from __future__ import annotations

import itertools
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.optimize import isotonic_regression

from .errors import (
    DegenerateData,
    EmptyPath,
    GridNotPositive,
    InputError,
    NonPDSigma,
    TooFewUnits,
)
from .relcore import (
    DegradationPath,
    FitResult,
    gauss_hermite_nodes,
    make_rng,
    maximize,
    numerical_jacobian,
    observed_information_cov,
)

LOG2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class PathModel:
    tag: str

    def __post_init__(self):
        if self.tag not in ("random_intercept_slope", "random_slope"):
            raise InputError(f"unknown path model {self.tag!r}")

    @property
    def q(self) -> int:
        return 2 if self.tag == "random_intercept_slope" else 1

    @property
    def n_fixed(self) -> int:
        return 2

    def fixed_design(self, t):
        t = np.asarray(t, dtype=float)
        return np.column_stack([np.ones_like(t), t])

    def random_design(self, t):
        t = np.asarray(t, dtype=float)
        if self.q == 2:
            return np.column_stack([np.ones_like(t), t])
        return t[:, None]

    def mean_path(self, t, alpha, gamma=None):
        out = self.fixed_design(t) @ np.asarray(alpha, dtype=float)
        if gamma is not None:
            out = out + self.random_design(t) @ np.asarray(gamma, dtype=float)
        return out


@dataclass(frozen=True)
class GpmParams:
    alpha: np.ndarray
    Sigma: np.ndarray
    sigma_eps2: float

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        S = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "Sigma", S)
        if S.shape[0] != S.shape[1] or not np.allclose(S, S.T, atol=1e-12):
            raise NonPDSigma("Sigma must be a symmetric square matrix")
        if not self.sigma_eps2 > 0:
            raise InputError("sigma_eps2 must be > 0")

    def check_pd(self):
        try:
            np.linalg.cholesky(self.Sigma)
        except np.linalg.LinAlgError:
            raise NonPDSigma("Sigma is not positive definite") from None


# --------------------------------------------------------------------------
# marginal likelihood
# --------------------------------------------------------------------------


def _unit_closed_form(y, X, Z, alpha, Sigma, s2):
    r = y - X @ alpha
    V = Z @ Sigma @ Z.T + s2 * np.eye(len(y))
    L = np.linalg.cholesky(V)
    w = np.linalg.solve(L, r)
    return -0.5 * (len(y) * LOG2PI + 2 * np.sum(np.log(np.diag(L))) + w @ w)


def _unit_quadrature(y, X, Z, alpha, Sigma, s2, nodes, weights):
    """Adaptive Gauss-Hermite: centre at the mode of the integrand in gamma,
    scale by the Cholesky factor of its curvature."""
    q = Sigma.shape[0]
    r = y - X @ alpha
    Sinv = np.linalg.inv(Sigma)
    H = Z.T @ Z / s2 + Sinv
    mode = np.linalg.solve(H, Z.T @ r / s2)
    C = np.linalg.cholesky(np.linalg.inv(H))
    _, logdetS = np.linalg.slogdet(Sigma)
    grid = np.array(list(itertools.product(nodes, repeat=q)))
    logw = np.sum(np.log(np.array(list(itertools.product(weights, repeat=q)))), axis=1)
    gam = mode + np.sqrt(2.0) * grid @ C.T
    resid = r[None, :] - gam @ Z.T
    log_lik = -0.5 * (len(y) * (LOG2PI + np.log(s2)) + np.sum(resid**2, axis=1) / s2)
    log_prior = -0.5 * (q * LOG2PI + logdetS + np.einsum("ki,ij,kj->k", gam, Sinv, gam))
    log_jac = q * 0.5 * np.log(2.0) + np.sum(np.log(np.diag(C)))
    terms = logw + np.sum(grid**2, axis=1) + log_lik + log_prior
    return float(special.logsumexp(terms) + log_jac)


def gpm_marginal_loglik(
    paths: Sequence[DegradationPath],
    model: PathModel,
    params: GpmParams,
    *,
    method: str = "quadrature",
    order: int = 15,
) -> float:
    """Sum over units of log ∫ prod_j N(y_ij; D(t_ij), sigma_eps2) f_MVN(gamma; Sigma) dgamma.

    ``method="quadrature"`` uses adaptive Gauss-Hermite with ``order`` nodes
    per random-effect dimension; ``method="closed_form"`` uses the Gaussian
    marginal ``y_i ~ MVN(X_i alpha, Z_i Sigma Z_i' + sigma_eps2 I)``.
    """
    params.check_pd()
    if params.Sigma.shape[0] != model.q:
        raise InputError(f"Sigma must be {model.q}x{model.q} for {model.tag}")
    if method == "quadrature":
        nodes, weights = gauss_hermite_nodes(order)
    elif method != "closed_form":
        raise InputError(f"unknown method {method!r}")
    total = 0.0
    for p in paths:
        if p.times.size == 0:
            raise EmptyPath(f"unit {p.unit_id} has no observations")
        X, Z = model.fixed_design(p.times), model.random_design(p.times)
        if method == "closed_form":
            total += _unit_closed_form(p.values, X, Z, params.alpha, params.Sigma, params.sigma_eps2)
        else:
            total += _unit_quadrature(p.values, X, Z, params.alpha, params.Sigma, params.sigma_eps2, nodes, weights)
    return float(total)


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------


def _tril(q):
    return np.tril_indices(q)


def unpack(u, q):
    """Internal vector (alpha, log-Cholesky of Sigma, log sigma_eps2) to parameters."""
    alpha = u[:2]
    k = q * (q + 1) // 2
    L = np.zeros((q, q))
    L[_tril(q)] = u[2 : 2 + k]
    d = np.diag_indices(q)
    L[d] = np.exp(L[d])
    return alpha, L, float(np.exp(u[2 + k]))


def pack(params: GpmParams) -> np.ndarray:
    L = np.linalg.cholesky(params.Sigma)
    L = L.copy()
    d = np.diag_indices(L.shape[0])
    L[d] = np.log(L[d])
    return np.concatenate([params.alpha, L[_tril(L.shape[0])], [np.log(params.sigma_eps2)]])


def _groups(paths, model):
    """Units sharing a time vector share their marginal covariance; group them."""
    groups: dict = {}
    for p in paths:
        groups.setdefault(p.times.tobytes(), (p.times, []))[1].append(p.values)
    out = []
    for t, ys in groups.values():
        out.append((model.fixed_design(t), model.random_design(t), np.array(ys)))
    return out


def _loglik_grad(u, groups, q):
    alpha, L, s2 = unpack(u, q)
    Sigma = L @ L.T
    ll = 0.0
    g_alpha = np.zeros(2)
    G_sigma = np.zeros((q, q))  # dll/dSigma
    g_s2 = 0.0
    for X, Z, Y in groups:
        n = X.shape[0]
        V = Z @ Sigma @ Z.T + s2 * np.eye(n)
        Lv = np.linalg.cholesky(V)
        Vinv = np.linalg.inv(Lv).T @ np.linalg.inv(Lv)
        R = Y - (X @ alpha)[None, :]
        W = R @ Vinv  # rows: V^{-1} r_i
        m = Y.shape[0]
        ll += -0.5 * (m * (n * LOG2PI + 2 * np.sum(np.log(np.diag(Lv)))) + np.sum(W * R))
        g_alpha += X.T @ W.sum(axis=0)
        dV = 0.5 * (W.T @ W - m * Vinv)
        G_sigma += Z.T @ dV @ Z
        g_s2 += np.trace(dV)
    G_L = 2 * G_sigma @ L
    d = np.diag_indices(q)
    G_L[d] *= np.diag(L)
    k = q * (q + 1) // 2
    g = np.empty(2 + k + 1)
    g[:2] = g_alpha
    g[2 : 2 + k] = G_L[_tril(q)]
    g[-1] = g_s2 * s2
    return float(ll), g


def gpm_loglik_grad(paths, model: PathModel, internal):
    """Gradient audit hook: closed-form marginal loglik and gradient in internal coordinates."""
    return _loglik_grad(np.asarray(internal, dtype=float), _groups(paths, model), model.q)


def _start(paths, model):
    coefs, resid = [], []
    for p in paths:
        X = model.fixed_design(p.times)
        if p.times.size >= 2:
            c, *_ = np.linalg.lstsq(X, p.values, rcond=None)
            coefs.append(c)
            resid.append(p.values - X @ c)
    if len(coefs) < 2:
        alpha = np.array([np.mean([p.values.mean() for p in paths]), 0.0])
        S = np.eye(model.q) * max(np.var([p.values.mean() for p in paths]), 1e-2)
        return GpmParams(alpha, S, max(S[0, 0], 1e-2))
    coefs = np.array(coefs)
    alpha = coefs.mean(axis=0)
    cv = np.var(coefs, axis=0)
    s2 = max(np.mean(np.concatenate(resid) ** 2), 1e-8 * (1 + np.var(coefs[:, 0])))
    diag = cv if model.q == 2 else cv[1:]
    diag = np.maximum(diag, 1e-6 * (1 + np.abs(alpha[: model.q])))
    return GpmParams(alpha, np.diag(diag), s2)


def fit_gpm(
    paths: Sequence[DegradationPath],
    model: PathModel,
    *,
    tol: float = 1e-7,
    order: int = 15,
) -> FitResult:
    """Maximum marginal likelihood for a linear-in-random-effects path model.

    Optimizes the closed-form Gaussian marginal in (alpha, log-Cholesky(Sigma),
    log sigma_eps2). The reported loglik is the closed form; the adaptive
    quadrature value is kept in ``diagnostics["loglik_quadrature"]`` as a cross-check.

    ``theta_hat`` order: alpha0, alpha1, the lower triangle of Sigma (row-major),
    sigma_eps2. ``diagnostics["params"]`` holds the :class:`GpmParams`.
    """
    if len(paths) < 2:
        raise TooFewUnits("need at least 2 units")
    for p in paths:
        if p.times.size == 0:
            raise EmptyPath(f"unit {p.unit_id} has no observations")
    q = model.q
    n_par = 2 + q * (q + 1) // 2 + 1
    n_obs = sum(p.times.size for p in paths)
    if n_obs <= n_par:
        raise InputError(f"{n_obs} observations cannot identify {n_par} parameters")
    groups = _groups(paths, model)
    u0 = pack(_start(paths, model))
    # log-diagonal of the Cholesky factor and log sigma_eps2 are floored
    bounds = [(None, None)] * 2
    bounds += [(-25.0, None) if i == j else (None, None) for i, j in zip(*_tril(q))]
    bounds += [(-40.0, None)]
    res = maximize(lambda u: _loglik_grad(u, groups, q), u0, jac=True, bounds=bounds, tol=tol)
    alpha, L, s2 = unpack(res.x, q)
    Sigma = L @ L.T
    names = ["alpha0", "alpha1"] + [f"Sigma{i + 1}{j + 1}" for i, j in zip(*_tril(q))] + ["sigma_eps2"]
    theta = np.concatenate([alpha, Sigma[_tril(q)], [s2]])
    scale = max(1.0, float(np.mean([np.var(p.values) for p in paths])))
    diag = {"n_units": len(paths), "n_obs": n_obs, "grad_norm": res.grad_norm}
    if s2 < 1e-12 * scale:
        partial = FitResult(model.tag, theta, res.value, None, None, False, res.n_iter, tuple(names), diag)
        raise DegenerateData("DegenerateData: error variance estimate collapsed to 0", partial)
    params = GpmParams(alpha, Sigma, s2)
    diag["params"] = params
    diag["loglik_quadrature"] = gpm_marginal_loglik(paths, model, params, order=order)

    cov_u = observed_information_cov(lambda u: _loglik_grad(u, groups, q)[1], res.x)
    se = cov = None
    if cov_u is not None:
        def natural(u):
            a, Lm, v = unpack(u, q)
            return np.concatenate([a, (Lm @ Lm.T)[_tril(q)], [v]])

        J = numerical_jacobian(natural, res.x, 1e-6)
        cov = J @ cov_u @ J.T
        cov = (cov + cov.T) / 2
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
    return FitResult(model.tag, theta, res.value, se, cov, res.converged, res.n_iter, tuple(names), diag)


# --------------------------------------------------------------------------
# failure-time distribution
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FailureCdf:
    t: np.ndarray
    cdf: np.ndarray
    mc_se: np.ndarray
    raw: np.ndarray


def failure_time_cdf(
    params: GpmParams,
    model: PathModel,
    D_f: float,
    t_grid,
    n_sim: int = 10_000,
    seed=0,
    *,
    increasing: bool = True,
) -> FailureCdf:
    """Monte Carlo estimate of F_T(t) = Pr(first crossing of D_f happens by t).

    Paths are linear in t, so the running maximum over [0, t] is
    ``max(D(0), D(t))``. One set of simulated random effects is shared by all
    grid points; pool-adjacent-violators keeps the output a cdf. For
    decreasing paths (``increasing=False``) values and threshold are negated.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t <= 0):
        raise GridNotPositive("t_grid must be a nonempty vector of positive times")
    if n_sim < 1000:
        raise InputError("n_sim must be >= 1000")
    rng = make_rng(seed)
    q = model.q
    w, V = np.linalg.eigh(params.Sigma)
    if np.any(w < -1e-12 * max(1.0, np.abs(w).max())):
        raise NonPDSigma("Sigma must be positive semidefinite")
    root = V * np.sqrt(np.clip(w, 0, None))
    gam = rng.standard_normal((n_sim, q)) @ root.T
    coef = params.alpha[None, :] + (gam if q == 2 else np.column_stack([np.zeros(n_sim), gam[:, 0]]))
    sign = 1.0 if increasing else -1.0
    d0 = sign * coef[:, 0]
    thr = sign * D_f
    raw = np.empty(t.size)
    for k, tk in enumerate(t):
        dt = sign * (coef[:, 0] + coef[:, 1] * tk)
        raw[k] = np.mean((d0 >= thr) | (dt >= thr))
    order = np.argsort(t)
    fixed = np.empty_like(raw)
    fixed[order] = isotonic_regression(raw[order]).x
    fixed = np.clip(fixed, 0.0, 1.0)
    se = np.sqrt(fixed * (1 - fixed) / n_sim)
    return FailureCdf(t, fixed, se, raw)
