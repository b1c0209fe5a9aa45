"""Seeded simulators for every model family, plus use-rate acceleration.

All randomness comes from counter-based Philox generators derived from a
``SeedSequence``; per-unit streams are spawned so results do not depend on
the order units are processed.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .degpath import GpmParams, PathModel
from .distfit import LocScaleParams, std_quantile
from .errors import InputError, NonPDSigma, NonPositiveFactor, UnboundedIntensity
from .nhpp import IntensityModel
from .relcore import (
    DegradationPath,
    ExposureStep,
    LifetimeRecord,
    RecurrentHistory,
    check_exposure,
    make_rng,
)


def _seq(seed):
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _step_events(model: IntensityModel, a: float, b: float, x: float, rng, method: str):
    """Events of the NHPP with intensity lambda0(t) * x on (a, b]."""
    sup = model.sup_rate(a, b)
    if np.isfinite(sup):
        # Lewis-Shedler: homogeneous candidates at rate sup * x, kept with prob lambda0 / sup
        n = rng.poisson(sup * x * (b - a))
        cand = np.sort(a + (b - a) * rng.random(n))
        keep = rng.random(n) * sup <= model.rate(cand)
        return cand[keep & (cand > a)]
    if method == "thinning":
        raise UnboundedIntensity(f"lambda0 has no finite bound on ({a}, {b}]")
    # integrable singularity at t = 0: invert Lambda0 on the step instead
    lo, hi = model.cif(a), model.cif(b)
    n = rng.poisson(x * (hi - lo))
    u = np.sort(rng.random(n))
    t = model.inverse_cif(lo + u * (hi - lo))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return t[(t > a) & (t < b)]


def simulate_nhpp(
    model: IntensityModel,
    exposure: Sequence[ExposureStep] | None,
    follow_up: float,
    seed,
    *,
    unit_id: str = "u1",
    method: str = "auto",
) -> RecurrentHistory:
    """One unit's event history under intensity ``lambda0(t) * x(t)`` on (0, follow_up).

    ``exposure`` lists the unit's steps (``None`` means x = 1 throughout).
    ``method="thinning"`` forbids the inversion fallback used for families
    whose intensity is unbounded at t = 0 (power law with beta < 1, Weibull
    SRGM with theta3 < 1) and raises :class:`UnboundedIntensity` instead.
    """
    if method not in ("auto", "thinning"):
        raise InputError(f"unknown simulation method {method!r}")
    if not follow_up > 0:
        raise InputError("follow_up must be > 0")
    if model.tag == "ispline" and follow_up > model.basis.tau * (1 + 1e-12):
        raise InputError("follow-up extends beyond the spline knots")
    if exposure is None:
        exposure = [ExposureStep(unit_id, 0.0, follow_up, 1.0)]
    # steps tagged with another unit id are taken to belong to this unit
    steps = [s for s in exposure if s.unit_id == unit_id] or list(exposure)
    steps = check_exposure([ExposureStep(unit_id, s.start, s.end, s.rate) for s in steps]).get(unit_id, [])
    rng = make_rng(seed)
    out = []
    for s in steps:
        a, b = s.start, min(s.end, follow_up)
        if a >= b or s.rate == 0:
            continue
        out.append(_step_events(model, a, b, s.rate, rng, method))
    times = np.concatenate(out) if out else np.array([])
    times = times[times < follow_up]
    return RecurrentHistory(unit_id, tuple(np.unique(times).tolist()), follow_up)


def simulate_fleet(
    model: IntensityModel,
    exposure: Sequence[ExposureStep] | None,
    follow_up: dict,
    seed,
    *,
    method: str = "auto",
) -> list:
    """Histories for every unit in ``follow_up`` ({unit_id: tau}), one spawned stream per unit."""
    by_unit = check_exposure(exposure) if exposure is not None else {}
    seeds = _seq(seed).spawn(len(follow_up))
    out = []
    for ss, (uid, tau) in zip(seeds, follow_up.items()):
        steps = by_unit.get(uid) if exposure is not None else None
        if exposure is not None and not steps:
            raise InputError(f"unit {uid} has no exposure steps")
        out.append(simulate_nhpp(model, steps, tau, ss, unit_id=uid, method=method))
    return out


def simulate_lifetime(
    family: str,
    params: LocScaleParams,
    n: int,
    censor_time: float | None,
    seed,
) -> list:
    """``t = exp(mu + sigma * Phi^{-1}(U))``, Type-I censored at ``censor_time``."""
    if censor_time is not None and not censor_time > 0:
        raise InputError("censor_time must be > 0")
    rng = make_rng(seed)
    u = rng.random(n)
    u = np.where(u == 0, np.nextafter(0, 1), u)
    t = np.exp(params.mu + params.sigma * std_quantile(family, u))
    recs = []
    for i, ti in enumerate(t):
        if censor_time is not None and ti > censor_time:
            recs.append(LifetimeRecord(f"u{i + 1}", float(censor_time), 0))
        else:
            recs.append(LifetimeRecord(f"u{i + 1}", float(ti), 1))
    return recs


def simulate_degradation(
    model: PathModel,
    params: GpmParams,
    n_units: int,
    time_grid,
    seed,
) -> list:
    """Paths ``y_ij = D(t_j; alpha, gamma_i) + eps_ij``, gamma_i ~ MVN(0, Sigma).

    Sigma may be singular (including 0) and sigma_eps2 may be 0 here.
    """
    t = np.asarray(time_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) <= 0):
        raise InputError("time_grid must be nonempty and strictly increasing")
    S = np.atleast_2d(np.asarray(params.Sigma, dtype=float))
    w, V = np.linalg.eigh(S)
    if np.any(w < -1e-12 * max(1.0, np.abs(w).max())):
        raise NonPDSigma("Sigma must be positive semidefinite")
    root = V * np.sqrt(np.clip(w, 0, None))
    rng = make_rng(seed)
    gam = rng.standard_normal((n_units, model.q)) @ root.T
    eps = rng.standard_normal((n_units, t.size)) * np.sqrt(params.sigma_eps2)
    base = model.mean_path(t, params.alpha)
    Z = model.random_design(t)
    return [
        DegradationPath(f"u{i + 1}", t, base + Z @ gam[i] + eps[i])
        for i in range(n_units)
    ]


def sim_gpm_params(alpha, Sigma, sigma_eps2) -> GpmParams:
    """GpmParams without the positivity checks, for simulation-only inputs
    such as sigma_eps2 = 0."""
    p = object.__new__(GpmParams)
    object.__setattr__(p, "alpha", np.atleast_1d(np.asarray(alpha, dtype=float)))
    object.__setattr__(p, "Sigma", np.atleast_2d(np.asarray(Sigma, dtype=float)))
    object.__setattr__(p, "sigma_eps2", float(sigma_eps2))
    return p


def apply_use_rate_acceleration(exposure: Sequence[ExposureStep], factor: float) -> list:
    """Multiply every exposure rate by ``factor``; the mean event count scales by the same factor."""
    if not factor > 0:
        raise NonPositiveFactor(f"acceleration factor must be > 0, got {factor}")
    return [ExposureStep(s.unit_id, s.start, s.end, s.rate * factor) for s in exposure]
