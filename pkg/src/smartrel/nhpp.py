"""NHPP recurrent-event models with exposure-adjusted intensity.

The intensity for unit ``i`` is ``lambda0(t) * x_i(t)`` with ``x_i`` piecewise
constant, so the cumulative intensity over follow-up is an exact sum over
exposure steps of ``x_il * [Lambda0(end) - Lambda0(start)]``.

Each baseline family works on two coordinate systems: the natural parameters
``theta`` (what users read and write) and unconstrained or box-constrained
internal coordinates ``u`` used by the optimizer.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.optimize import brentq

from .errors import (
    ConstraintViolation,
    InputError,
    NonConvergence,
    RefitFailureRateExceeded,
    TooFewEvents,
)
from .ispline import SplineBasis, ppoly_max
from .relcore import (
    ExposureStep,
    FitResult,
    RecurrentHistory,
    maximize,
    numerical_jacobian,
    unit_exposure,
    validate_recurrent,
)

TAGS = ("power_law", "musa_okumoto", "gompertz", "weibull_srgm", "ispline")


def _pos(t):
    return np.asarray(t, dtype=float)


# --------------------------------------------------------------------------
# baseline families
# --------------------------------------------------------------------------


class _PowerLaw:
    names = ("beta", "eta")

    def check(self, th):
        return th[0] > 0 and th[1] > 0

    def to_u(self, th):
        return np.log(th)

    def from_u(self, u):
        return np.exp(u)

    def dtheta_du(self, th):
        return np.asarray(th, dtype=float)

    def cif(self, t, th):
        b, e = th
        return (_pos(t) / e) ** b

    def rate(self, t, th):
        b, e = th
        t = _pos(t)
        with np.errstate(divide="ignore"):
            return (b / e) * (t / e) ** (b - 1)

    def cif_grad(self, t, th):
        b, e = th
        t = _pos(t)
        L = (t / e) ** b
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(t > 0, np.log(np.where(t > 0, t, 1.0) / e), 0.0)
        return np.stack([L * lg, -b * L / e], axis=-1)

    def lograte_grad(self, t, th):
        b, e = th
        t = _pos(t)
        return np.stack([1 / b + np.log(t / e), np.full_like(t, -b / e)], axis=-1)

    def inverse_cif(self, y, th):
        b, e = th
        return e * _pos(y) ** (1.0 / b)

    def sup_rate(self, a, b_, th):
        b, _ = th
        if b < 1:
            return np.inf if a <= 0 else float(self.rate(a, th))
        return float(self.rate(b_, th))

    def shape_starts(self, tau):
        return [np.array([bb, tau]) for bb in (1.0, 0.6, 1.5)]

    def rescale(self, th, f):
        b, e = th
        return np.array([b, e * f ** (-1.0 / b)])


class _MusaOkumoto:
    names = ("theta1", "theta2")

    def check(self, th):
        return th[0] > 0 and th[1] > 0

    def to_u(self, th):
        return np.log(th)

    def from_u(self, u):
        return np.exp(u)

    def dtheta_du(self, th):
        return np.asarray(th, dtype=float)

    def cif(self, t, th):
        a, b = th
        return np.log1p(a * b * _pos(t)) / a

    def rate(self, t, th):
        a, b = th
        return b / (1 + a * b * _pos(t))

    def cif_grad(self, t, th):
        a, b = th
        t = _pos(t)
        s = 1 + a * b * t
        d_a = -np.log1p(a * b * t) / a**2 + b * t / (a * s)
        d_b = t / s
        return np.stack([d_a, d_b], axis=-1)

    def lograte_grad(self, t, th):
        a, b = th
        t = _pos(t)
        s = 1 + a * b * t
        return np.stack([-b * t / s, 1 / b - a * t / s], axis=-1)

    def inverse_cif(self, y, th):
        a, b = th
        return np.expm1(a * _pos(y)) / (a * b)

    def sup_rate(self, a_, b_, th):
        return float(self.rate(a_, th))

    def shape_starts(self, tau):
        # theta1 * theta2 * tau = c fixes the curvature; theta2 sets the level
        return [np.array([c / tau, 1.0]) for c in (0.1, 1.0, 10.0, 100.0)]

    def rescale(self, th, f):
        a, b = th
        return np.array([a / f, b * f])


class _Gompertz:
    names = ("theta1", "theta2", "theta3")

    def check(self, th):
        return th[0] > 0 and 0 < th[1] < 1 and 0 < th[2] < 1

    def to_u(self, th):
        return np.array([np.log(th[0]), special.logit(th[1]), special.logit(th[2])])

    def from_u(self, u):
        return np.array([np.exp(u[0]), special.expit(u[1]), special.expit(u[2])])

    def dtheta_du(self, th):
        return np.array([th[0], th[1] * (1 - th[1]), th[2] * (1 - th[2])])

    def cif(self, t, th):
        a, b, c = th
        u = b ** _pos(t)
        return a * (c**u - c)

    def rate(self, t, th):
        a, b, c = th
        u = b ** _pos(t)
        return a * np.log(c) * np.log(b) * u * c**u

    def cif_grad(self, t, th):
        a, b, c = th
        t = _pos(t)
        u = b**t
        cu = c**u
        d_a = cu - c
        d_b = a * cu * np.log(c) * t * u / b
        d_c = a * (u * c ** (u - 1) - 1)
        return np.stack([d_a, d_b, d_c], axis=-1)

    def lograte_grad(self, t, th):
        a, b, c = th
        t = _pos(t)
        u = b**t
        L2, L3 = np.log(b), np.log(c)
        d_a = np.full_like(t, 1 / a)
        d_b = 1 / (L2 * b) + t / b + L3 * t * u / b
        d_c = 1 / (L3 * c) + u / c
        return np.stack([d_a, d_b, d_c], axis=-1)

    def inverse_cif(self, y, th):
        a, b, c = th
        # c**u = y/a + c  ->  u = log(y/a + c)/log c  ->  t = log u / log b
        u = np.log(_pos(y) / a + c) / np.log(c)
        return np.log(u) / np.log(b)

    def sup_rate(self, a_, b_, th):
        _, b, c = th
        # rate ∝ g(u) = u c**u with u = b**t decreasing in t; g peaks at u* = -1/log c
        ustar = -1.0 / np.log(c)
        if ustar >= 1:
            tstar = 0.0
        else:
            tstar = np.log(ustar) / np.log(b)
        return float(self.rate(np.clip(tstar, a_, b_), th))

    def shape_starts(self, tau):
        out = []
        for c in (0.1, 0.5):
            for half in (0.5, 0.05):
                out.append(np.array([1.0, half ** (2.0 / tau), c]))
        return out

    def rescale(self, th, f):
        return np.array([th[0] * f, th[1], th[2]])


class _WeibullSRGM:
    names = ("theta1", "theta2", "theta3")

    def check(self, th):
        return th[0] > 0 and th[1] > 0 and th[2] > 0

    def to_u(self, th):
        return np.log(th)

    def from_u(self, u):
        return np.exp(u)

    def dtheta_du(self, th):
        return np.asarray(th, dtype=float)

    def cif(self, t, th):
        a, b, c = th
        return -a * np.expm1(-b * _pos(t) ** c)

    def rate(self, t, th):
        a, b, c = th
        t = _pos(t)
        with np.errstate(divide="ignore"):
            return a * b * c * t ** (c - 1) * np.exp(-b * t**c)

    def cif_grad(self, t, th):
        a, b, c = th
        t = _pos(t)
        w = t**c
        E = np.exp(-b * w)
        with np.errstate(divide="ignore", invalid="ignore"):
            wl = np.where(t > 0, w * np.log(np.where(t > 0, t, 1.0)), 0.0)
        return np.stack([-np.expm1(-b * w), a * w * E, a * b * wl * E], axis=-1)

    def lograte_grad(self, t, th):
        a, b, c = th
        t = _pos(t)
        w = t**c
        lt = np.log(t)
        return np.stack([np.full_like(t, 1 / a), 1 / b - w, 1 / c + lt - b * w * lt], axis=-1)

    def inverse_cif(self, y, th):
        a, b, c = th
        return (-np.log1p(-_pos(y) / a) / b) ** (1.0 / c)

    def sup_rate(self, a_, b_, th):
        _, b, c = th
        if c < 1:
            return np.inf if a_ <= 0 else float(self.rate(a_, th))
        if c == 1:
            return float(self.rate(a_, th))
        tstar = ((c - 1) / (b * c)) ** (1.0 / c)
        return float(self.rate(np.clip(tstar, a_, b_), th))

    def shape_starts(self, tau):
        return [np.array([1.0, (k / tau) ** c, c]) for c in (0.5, 1.0, 2.0) for k in (0.5, 2.0)]

    def rescale(self, th, f):
        return np.array([th[0] * f, th[1], th[2]])


class _ISpline:
    def __init__(self, basis: SplineBasis):
        self.basis = basis
        self.names = tuple(f"beta{l + 1}" for l in range(basis.n_basis))

    def check(self, th):
        return len(th) == self.basis.n_basis and np.all(np.asarray(th) >= 0)

    def to_u(self, th):
        return np.asarray(th, dtype=float)

    def from_u(self, u):
        return np.asarray(u, dtype=float)

    def dtheta_du(self, th):
        return np.ones(len(th))

    def cif(self, t, th):
        return self.basis.ivalues(t) @ np.asarray(th, dtype=float)

    def rate(self, t, th):
        return self.basis.mvalues(t) @ np.asarray(th, dtype=float)

    def cif_grad(self, t, th):
        return self.basis.ivalues(t)

    def lograte_grad(self, t, th):
        M = self.basis.mvalues(t)
        return M / (M @ np.asarray(th, dtype=float))[..., None]

    def inverse_cif(self, y, th):
        y = np.atleast_1d(_pos(y))
        tau = self.basis.tau
        out = np.empty_like(y)
        for i, v in enumerate(y):
            out[i] = brentq(lambda s: float(self.cif(s, th)) - v, 0.0, tau, xtol=1e-14, rtol=1e-14)
        return out

    def sup_rate(self, a_, b_, th):
        return ppoly_max(self.basis.rate_ppoly(th), a_, min(b_, self.basis.tau))

    def shape_starts(self, tau):
        return [np.ones(self.basis.n_basis)]

    def rescale(self, th, f):
        return np.asarray(th, dtype=float) * f


_PARAMETRIC = {
    "power_law": _PowerLaw(),
    "musa_okumoto": _MusaOkumoto(),
    "gompertz": _Gompertz(),
    "weibull_srgm": _WeibullSRGM(),
}


def _family(tag, basis=None):
    if tag == "ispline":
        if basis is None:
            raise InputError("ispline models need a SplineBasis")
        return _ISpline(basis)
    try:
        return _PARAMETRIC[tag]
    except KeyError:
        raise InputError(f"unknown intensity tag {tag!r}; expected one of {TAGS}") from None


@dataclass(frozen=True)
class IntensityModel:
    """A baseline cumulative intensity ``Lambda0(t; theta)`` of a given family."""

    tag: str
    theta: tuple
    basis: SplineBasis | None = None
    _fam: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        th = tuple(float(v) for v in np.atleast_1d(self.theta))
        object.__setattr__(self, "theta", th)
        fam = _family(self.tag, self.basis)
        object.__setattr__(self, "_fam", fam)
        if len(th) != len(fam.names):
            raise ConstraintViolation(f"{self.tag} expects {len(fam.names)} parameters, got {len(th)}")
        if not all(np.isfinite(th)) or not fam.check(np.array(th)):
            raise ConstraintViolation(f"{self.tag} parameters {th} violate the family constraints")

    @property
    def param_names(self):
        return self._fam.names

    def cif(self, t):
        """Baseline cumulative intensity Lambda0(t)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise InputError("time must be >= 0")
        out = self._fam.cif(t, np.array(self.theta))
        return float(out) if np.ndim(out) == 0 else out

    def rate(self, t):
        """Baseline intensity lambda0(t)."""
        out = self._fam.rate(np.asarray(t, dtype=float), np.array(self.theta))
        return float(out) if np.ndim(out) == 0 else out

    def inverse_cif(self, y):
        return self._fam.inverse_cif(y, np.array(self.theta))

    def sup_rate(self, a: float, b: float) -> float:
        """Supremum of lambda0 on [a, b]; ``inf`` for an integrable singularity at 0."""
        return self._fam.sup_rate(a, b, np.array(self.theta))

    def with_theta(self, theta) -> IntensityModel:
        return IntensityModel(self.tag, tuple(theta), self.basis)


def baseline_cif(model: IntensityModel, t):
    return model.cif(t)


# --------------------------------------------------------------------------
# data layout
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Layout:
    events: np.ndarray  # all event times
    log_x: np.ndarray  # log exposure rate at each event
    seg_a: np.ndarray  # exposure segments clipped at each unit's follow-up
    seg_b: np.ndarray
    seg_x: np.ndarray
    tau: float  # largest follow-up time
    n_units: int


def _layout(histories: Sequence[RecurrentHistory], exposure: Sequence[ExposureStep] | None) -> _Layout:
    if exposure is None:
        exposure = unit_exposure(histories)
    by_unit = validate_recurrent(histories, exposure)
    ev, lx, sa, sb, sx = [], [], [], [], []
    for h in histories:
        steps = by_unit[h.unit_id]
        if h.event_times:
            t = np.asarray(h.event_times)
            k = np.searchsorted([s.start for s in steps], t, side="left") - 1
            rates = np.array([s.rate for s in steps])[k]
            # validate_recurrent has already rejected events in zero-rate steps
            ev.append(t)
            lx.append(np.log(rates))
        for s in steps:
            if s.start >= h.follow_up_end or s.rate == 0:
                continue
            sa.append(s.start)
            sb.append(min(s.end, h.follow_up_end))
            sx.append(s.rate)
    cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0)
    return _Layout(
        cat(ev), cat(lx), np.array(sa), np.array(sb), np.array(sx),
        max(h.follow_up_end for h in histories), len(histories),
    )


def _loglik_theta(fam, th, lay: _Layout):
    r = fam.rate(lay.events, th)
    with np.errstate(divide="ignore"):
        ll = np.sum(np.log(r)) + np.sum(lay.log_x)
    ll -= np.sum(lay.seg_x * (fam.cif(lay.seg_b, th) - fam.cif(lay.seg_a, th)))
    return float(ll)


def _loglik_grad_u(fam, u, lay: _Layout):
    th = fam.from_u(u)
    ll = _loglik_theta(fam, th, lay)
    g = np.sum(fam.lograte_grad(lay.events, th), axis=0) if lay.events.size else np.zeros(len(th))
    g = g - lay.seg_x @ (fam.cif_grad(lay.seg_b, th) - fam.cif_grad(lay.seg_a, th))
    return ll, g * fam.dtheta_du(th)


def nhpp_loglik(histories, exposure, model: IntensityModel) -> float:
    """sum_i { sum_j log[lambda0(t_ij) x_i(t_ij)] - ∫_0^tau_i lambda0(s) x_i(s) ds }."""
    return _loglik_theta(model._fam, np.array(model.theta), _layout(histories, exposure))


def nhpp_loglik_grad(histories, exposure, model: IntensityModel, internal):
    """Gradient audit hook: loglik and gradient in the family's internal coordinates."""
    return _loglik_grad_u(model._fam, np.asarray(internal, dtype=float), _layout(histories, exposure))


def internal_params(model: IntensityModel) -> np.ndarray:
    return model._fam.to_u(np.array(model.theta))


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------


def _starts(fam, lay: _Layout):
    n = lay.events.size
    out = []
    for th in fam.shape_starts(lay.tau):
        expected = np.sum(lay.seg_x * (fam.cif(lay.seg_b, th) - fam.cif(lay.seg_a, th)))
        if not (np.isfinite(expected) and expected > 0):
            continue
        th = fam.rescale(th, n / expected)
        if fam.check(th):
            out.append(th)
    return out


def fit_nhpp(
    histories: Sequence[RecurrentHistory],
    exposure: Sequence[ExposureStep] | None,
    model_tag: str,
    *,
    n_basis: int = 5,
    basis: SplineBasis | None = None,
    start=None,
    tol: float = 1e-7,
    n_starts: int = 3,
    fixed: dict | None = None,
    std_errors: bool = True,
) -> FitResult:
    """Constrained maximum likelihood for one baseline family.

    For ``ispline`` the basis defaults to knots at 0, tau and event-time
    quantiles; coefficients stay >= 0 by projection. Coefficients pinned at
    0 get no Wald standard error (NaN) and are listed in
    ``diagnostics["pinned"]``.

    ``fixed`` maps parameter names to values held constant (for example
    ``{"beta": 1.0}`` gives the homogeneous process); they get zero SE.
    ``std_errors=False`` skips the observed-information step (bootstrap refits).

    The fitted :class:`IntensityModel` is ``diagnostics["model"]``.
    """
    lay = _layout(histories, exposure)
    if model_tag == "ispline" and basis is None:
        basis = SplineBasis.from_events(lay.events, lay.tau, n_basis)
    fam = _family(model_tag, basis)
    p = len(fam.names)
    if lay.events.size < p:
        raise TooFewEvents(f"{lay.events.size} events cannot identify {p} parameters")

    fixed = dict(fixed or {})
    unknown = sorted(set(fixed) - set(fam.names))
    if unknown:
        raise InputError(f"{model_tag} has no parameters {unknown}; names are {fam.names}")
    fix_idx = np.array([fam.names.index(k) for k in fixed], dtype=int)
    opt_idx = np.array([i for i in range(p) if i not in fix_idx], dtype=int)
    if opt_idx.size == 0:
        raise InputError("at least one parameter must be free")

    bounds = [(0.0, None)] * opt_idx.size if model_tag == "ispline" else None

    def fun(u):
        # extreme trial points overflow; the optimizer rejects the non-finite value
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return _loglik_grad_u(fam, u, lay)

    def pin(th):
        th = np.array(th, dtype=float)
        th[fix_idx] = [fixed[fam.names[i]] for i in fix_idx]
        return th

    if start is not None:
        cands = [pin(start)]
    else:
        cands = [pin(th) for th in _starts(fam, lay)]
        cands = [th for th in cands if fam.check(th)]
        if not cands:
            raise NonConvergence(f"no admissible starting value for {model_tag}")
        scored = sorted(cands, key=lambda th: -_loglik_theta(fam, th, lay))
        cands = scored[:n_starts]
    if not fam.check(cands[0]):
        raise ConstraintViolation(f"{model_tag} start {tuple(cands[0])} violates the family constraints")
    u_base = fam.to_u(cands[0])

    def full(v):
        u = u_base.copy()
        u[opt_idx] = v
        return u

    def fun_opt(v):
        ll, g = fun(full(v))
        return ll, g[opt_idx]

    best = None
    for th0 in cands:
        try:
            res = maximize(fun_opt, fam.to_u(th0)[opt_idx], jac=True, bounds=bounds, tol=tol, restarts=1)
        except InputError:
            continue
        if best is None or res.value > best.value + 1e-9 or (res.converged and not best.converged and res.value >= best.value - 1e-9):
            best = res
    if best is None:
        raise NonConvergence(f"{model_tag}: objective not finite at any start")
    u_hat = full(best.x)

    theta = fam.from_u(u_hat)
    if model_tag == "ispline":
        theta = np.maximum(theta, 0.0)
    model = IntensityModel(model_tag, tuple(theta), basis)

    g_full = fun(u_hat)[1]
    pinned = []
    if model_tag == "ispline":
        pinned = [int(i) for i in opt_idx if theta[i] <= 1e-10 and g_full[i] <= tol * (1 + abs(best.value))]
    free = np.array([i for i in opt_idx if i not in pinned], dtype=int)

    cov = se = None
    if free.size and std_errors:
        def grad_free(v):
            u = u_hat.copy()
            u[free] = v
            return fun(u)[1][free]

        H = numerical_jacobian(grad_free, u_hat[free])
        info = -(H + H.T) / 2
        try:
            Lc = np.linalg.cholesky(info)
            Li = np.linalg.inv(Lc)
            cov_free_u = Li.T @ Li
            J = fam.dtheta_du(theta)[free]
            cov = np.full((p, p), np.nan)
            cov[fix_idx, :] = 0.0
            cov[:, fix_idx] = 0.0
            cov_free = (J[:, None] * cov_free_u * J[None, :])
            cov[np.ix_(free, free)] = (cov_free + cov_free.T) / 2
            se = np.full(p, np.nan)
            se[fix_idx] = 0.0
            se[free] = np.sqrt(np.diag(cov_free))
        except np.linalg.LinAlgError:
            cov = se = None

    diag = {
        "model": model,
        "n_events": int(lay.events.size),
        "n_units": lay.n_units,
        "grad_norm": best.grad_norm,
        "pinned": pinned,
        "one_sided_se": bool(pinned),
        "fixed": fixed,
        "message": best.message,
    }
    if model_tag == "ispline":
        diag["knots"] = list(basis.knots)
    cov = cov if not pinned else None
    return FitResult(model_tag, theta, best.value, se, cov, best.converged, best.n_iter, fam.names, diag)


def model_of(fit: FitResult) -> IntensityModel:
    return fit.diagnostics["model"]


# --------------------------------------------------------------------------
# curves and bands
# --------------------------------------------------------------------------


def _expected_curve(model: IntensityModel, lay: _Layout, t_grid):
    t = np.asarray(t_grid, dtype=float)[:, None]
    a = np.minimum(lay.seg_a[None, :], t)
    b = np.minimum(lay.seg_b[None, :], t)
    fam, th = model._fam, np.array(model.theta)
    return (fam.cif(b, th) - fam.cif(a, th)) @ lay.seg_x


@dataclass(frozen=True)
class Curve:
    t: np.ndarray
    expected: np.ndarray
    observed: np.ndarray


def expected_vs_observed(fit, histories, exposure, t_grid) -> Curve:
    """Fleet-level expected events sum_i Lambda_i(min(t, tau_i)) and the observed event count."""
    model = fit if isinstance(fit, IntensityModel) else model_of(fit)
    if isinstance(fit, FitResult) and not fit.converged:
        raise NonConvergence("expected_vs_observed needs a converged fit")
    lay = _layout(histories, exposure)
    t = np.asarray(t_grid, dtype=float)
    if np.any(t < 0):
        raise InputError("t_grid must be nonnegative")
    if model.tag == "ispline":
        t = np.minimum(t, model.basis.tau)
    expected = _expected_curve(model, lay, t)
    observed = np.searchsorted(np.sort(lay.events), np.asarray(t_grid, dtype=float), side="right").astype(float)
    return Curve(np.asarray(t_grid, dtype=float), expected, observed)


@dataclass(frozen=True)
class Bands:
    t: np.ndarray
    estimate: np.ndarray  # Lambda0 at t
    lower: np.ndarray
    upper: np.ndarray
    expected: np.ndarray  # fleet expected count at t
    expected_lower: np.ndarray
    expected_upper: np.ndarray
    level: float
    n_replicates: int
    n_failed: int


def bootstrap_pointwise_bands(
    fit: FitResult,
    histories,
    exposure,
    t_grid,
    B: int = 200,
    level: float = 0.95,
    seed=0,
    *,
    min_B: int = 200,
) -> Bands:
    """Parametric-bootstrap pointwise bands for Lambda0 and the expected-count curve.

    Each replicate re-simulates every unit from the fitted model under its
    observed exposure and follow-up, then refits the same family (same spline
    knots). Bands are the pointwise ``(1 - level)/2`` and ``(1 + level)/2``
    quantiles, widened if needed so they contain the point estimate.
    """
    from .simgen import simulate_fleet

    if B < min_B:
        raise InputError(f"B must be >= {min_B}, got {B}")
    if not 0 < level < 1:
        raise InputError("level must lie in (0, 1)")
    model = model_of(fit)
    lay = _layout(histories, exposure)
    if exposure is None:
        exposure = unit_exposure(histories)
    t = np.asarray(t_grid, dtype=float)
    if model.tag == "ispline":
        t_eval = np.minimum(t, model.basis.tau)
    else:
        t_eval = t
    est = model.cif(t_eval)
    est_exp = _expected_curve(model, lay, t_eval)
    follow = {h.unit_id: h.follow_up_end for h in histories}

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rep_seeds = ss.spawn(B)
    cifs, exps, failed = [], [], 0
    start = np.array(model.theta)
    for b in range(B):
        sim = simulate_fleet(model, exposure, follow, rep_seeds[b])
        try:
            if sum(h.n_events for h in sim) < len(model.theta):
                raise TooFewEvents("replicate has too few events")
            rf = fit_nhpp(sim, exposure, model.tag, basis=model.basis, start=start, std_errors=False)
            if not rf.converged:
                raise NonConvergence("replicate fit did not converge")
        except (NonConvergence, TooFewEvents):
            failed += 1
            continue
        m = model_of(rf)
        cifs.append(m.cif(t_eval))
        exps.append(_expected_curve(m, lay, t_eval))
    if failed > 0.05 * B:
        raise RefitFailureRateExceeded(f"{failed} of {B} bootstrap refits failed")
    cifs = np.array(cifs)
    exps = np.array(exps)
    qlo, qhi = (1 - level) / 2, (1 + level) / 2
    lo = np.minimum(np.quantile(cifs, qlo, axis=0), est)
    hi = np.maximum(np.quantile(cifs, qhi, axis=0), est)
    elo = np.minimum(np.quantile(exps, qlo, axis=0), est_exp)
    ehi = np.maximum(np.quantile(exps, qhi, axis=0), est_exp)
    return Bands(t, est, lo, hi, est_exp, elo, ehi, level, B, failed)


def bif_curve(model: IntensityModel, t_grid) -> np.ndarray:
    """Baseline intensity lambda0 on a grid."""
    return np.asarray(model.rate(np.asarray(t_grid, dtype=float)), dtype=float)
