"""Composite failure intensity: interruptive-event processes gated by logistic failure probabilities.

Each process ``j`` produces interruptive events at rate ``lambda_j(t) x_j(t)``;
an event becomes a failure with probability ``p_j(z) = expit(beta_j0 + z' beta_j1)``.
Failures then form an NHPP with intensity ``sum_j lambda_j(t) x_j(t) p_j(z)``,
assuming the processes are independent.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import (
    CompleteSeparation,
    DimensionMismatch,
    InputError,
    NonConvergence,
    TooFewOutcomes,
)
from .ispline import SplineBasis
from .nhpp import IntensityModel, fit_nhpp, model_of
from .relcore import ExposureStep, RecurrentHistory, check_exposure
from .simgen import simulate_nhpp

KNOWN_LABELS = ("ood_shift", "low_quality_data", "adversarial", "other")
MAX_PROCESSES = 8
DEPENDENCE_NOTE = "processes assumed independent"


@dataclass(frozen=True)
class InterruptiveProcess:
    label: str
    intensity: IntensityModel
    exposure: tuple = ()  # ExposureStep records; empty means x(t) = 1

    def __post_init__(self):
        steps = tuple(ExposureStep(self.label, s.start, s.end, s.rate) for s in self.exposure)
        if steps:
            steps = tuple(check_exposure(steps)[self.label])
        object.__setattr__(self, "exposure", steps)

    def x_at(self, t: float) -> float:
        if not self.exposure:
            return 1.0
        for s in self.exposure:
            if s.start < t <= s.end or (t == 0 and s.start == 0):
                return s.rate
        raise InputError(f"process {self.label}: no exposure covering t={t}")

    def steps_for(self, unit_id: str, horizon: float) -> list:
        if not self.exposure:
            return [ExposureStep(unit_id, 0.0, horizon, 1.0)]
        return [ExposureStep(unit_id, s.start, s.end, s.rate) for s in self.exposure]


@dataclass(frozen=True)
class GatingModel:
    """Per-process logistic coefficients ``(intercept, slopes...)`` keyed by label."""

    betas: dict

    def __post_init__(self):
        object.__setattr__(self, "betas", {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in self.betas.items()})

    def prob(self, label: str, z) -> float:
        return gate_prob(z, self.betas[label])


def gate_prob(z, beta) -> float:
    """Logistic gate ``expit(beta_0 + z' beta_1:)``; ``z`` excludes the intercept."""
    z = np.atleast_1d(np.asarray(z, dtype=float)) if np.size(z) else np.zeros(0)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.size != z.size + 1:
        raise DimensionMismatch(f"beta has {beta.size} entries but z has {z.size} (+1 intercept)")
    eta = beta[0] + z @ beta[1:]
    return float(special.expit(eta))


def _check_processes(processes, gating):
    if not 1 <= len(processes) <= MAX_PROCESSES:
        raise InputError(f"between 1 and {MAX_PROCESSES} processes are supported")
    labels = [p.label for p in processes]
    if len(set(labels)) != len(labels):
        raise InputError("process labels must be unique")
    missing = [l for l in labels if l not in gating.betas]
    if missing:
        raise InputError(f"no gate coefficients for {missing}")


def composite_intensity(processes: Sequence[InterruptiveProcess], gating: GatingModel, t: float, z) -> float:
    """Failure intensity ``sum_j lambda_j(t) x_j(t) p_j(z)``."""
    _check_processes(processes, gating)
    if t < 0:
        raise InputError("t must be >= 0")
    total = 0.0
    for p in processes:
        total += p.intensity.rate(t) * p.x_at(t) * gating.prob(p.label, z)
    return float(total)


@dataclass(frozen=True)
class SmartEvent:
    time: float
    label: str
    failed: bool


@dataclass(frozen=True)
class SmartStream:
    events: tuple
    horizon: float
    z: tuple
    metadata: dict = field(default_factory=lambda: {"dependence": DEPENDENCE_NOTE})

    def failures(self) -> list:
        return [e for e in self.events if e.failed]

    def times(self, label: str | None = None, failed: bool | None = None) -> list:
        return [
            e.time for e in self.events
            if (label is None or e.label == label) and (failed is None or e.failed == failed)
        ]


def simulate_smart(processes, gating: GatingModel, z, horizon: float, seed) -> SmartStream:
    """Simulate interruptive events per process and mark each as a failure with probability p_j(z)."""
    _check_processes(processes, gating)
    if not horizon > 0:
        raise InputError("horizon must be > 0")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    events = []
    for p, child in zip(processes, ss.spawn(len(processes))):
        ev_seed, mark_seed = child.spawn(2)
        hist = simulate_nhpp(p.intensity, p.steps_for(p.label, horizon), horizon, ev_seed, unit_id=p.label)
        prob = gating.prob(p.label, z)
        marks = np.random.Generator(np.random.Philox(mark_seed)).random(hist.n_events) < prob
        events.extend(SmartEvent(t, p.label, bool(m)) for t, m in zip(hist.event_times, marks))
    events.sort(key=lambda e: (e.time, e.label))
    zt = tuple(np.atleast_1d(np.asarray(z, dtype=float)).tolist()) if np.size(z) else ()
    return SmartStream(tuple(events), float(horizon), zt, {"dependence": DEPENDENCE_NOTE})


# --------------------------------------------------------------------------
# gate fitting
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GateObservation:
    label: str
    z: tuple
    failed: bool


@dataclass(frozen=True)
class GateFit:
    label: str
    beta: np.ndarray
    std_errors: np.ndarray
    loglik: float
    n: int
    n_failed: int
    n_iter: int


def _logistic_fit(Z, y, max_iter=100, tol=1e-10):
    p = Z.shape[1]
    beta = np.zeros(p)
    ybar = y.mean()
    beta[0] = np.log(ybar / (1 - ybar))
    for it in range(1, max_iter + 1):
        eta = Z @ beta
        mu = special.expit(eta)
        w = mu * (1 - mu)
        grad = Z.T @ (y - mu)
        info = Z.T @ (w[:, None] * Z)
        step = np.linalg.solve(info, grad)
        ll_old = np.sum(y * eta - np.logaddexp(0, eta))
        lam = 1.0
        while True:
            cand = beta + lam * step
            e2 = Z @ cand
            ll_new = np.sum(y * e2 - np.logaddexp(0, e2))
            if ll_new >= ll_old - 1e-12 or lam < 1e-10:
                break
            lam /= 2
        beta = cand
        if np.max(np.abs(lam * step)) < tol * (1 + np.max(np.abs(beta))):
            break
        if np.max(np.abs(beta)) > 50:
            raise CompleteSeparation("CompleteSeparation: coefficients diverge (outcomes separable in z)")
    else:
        raise NonConvergence("logistic fit did not converge")
    eta = Z @ beta
    mu = special.expit(eta)
    info = Z.T @ ((mu * (1 - mu))[:, None] * Z)
    cov = np.linalg.inv(info)
    ll = float(np.sum(y * eta - np.logaddexp(0, eta)))
    return beta, np.sqrt(np.diag(cov)), ll, it


def gate_loglik_grad(Z, y, beta):
    """Gradient audit hook for the logistic gate likelihood."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    eta = Z @ np.asarray(beta, dtype=float)
    return float(np.sum(y * eta - np.logaddexp(0, eta))), Z.T @ (y - special.expit(eta))


def fit_gates(labeled: Iterable) -> dict:
    """Per-process logistic regression of the failure flag on ``(1, z)``.

    ``labeled`` holds :class:`GateObservation` records or ``(label, z, failed)``
    tuples. Returns ``{label: GateFit}``.
    """
    by_label: dict = {}
    for obs in labeled:
        if not isinstance(obs, GateObservation):
            obs = GateObservation(obs[0], tuple(np.atleast_1d(obs[1]).tolist()) if np.size(obs[1]) else (), bool(obs[2]))
        by_label.setdefault(obs.label, []).append(obs)
    if not by_label:
        raise TooFewOutcomes("no labeled events")
    out = {}
    for label, obs in by_label.items():
        dims = {len(o.z) for o in obs}
        if len(dims) != 1:
            raise DimensionMismatch(f"process {label}: inconsistent z dimension")
        Z = np.column_stack([np.ones(len(obs)), np.array([o.z for o in obs], dtype=float).reshape(len(obs), -1)])
        y = np.array([o.failed for o in obs], dtype=float)
        if len(obs) < Z.shape[1] + 1:
            raise TooFewOutcomes(f"process {label}: {len(obs)} events for {Z.shape[1]} coefficients")
        if y.min() == y.max():
            raise CompleteSeparation(f"CompleteSeparation: process {label} has only {'failures' if y[0] else 'non-failures'}")
        if np.linalg.matrix_rank(Z) < Z.shape[1]:
            raise DimensionMismatch(f"process {label}: z columns are collinear")
        beta, se, ll, it = _logistic_fit(Z, y)
        out[label] = GateFit(label, beta, se, ll, len(obs), int(y.sum()), it)
    return out


# --------------------------------------------------------------------------
# decomposed refit of the whole composite model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CompositeFit:
    intensities: dict  # label -> FitResult
    gates: dict  # label -> GateFit
    exposure: dict  # label -> tuple of ExposureStep (empty = unit)

    def expected_failures(self, z, horizon: float) -> float:
        """``sum_j p_j(z) Lambda_j(horizon)`` under each process's exposure."""
        total = 0.0
        for label, fr in self.intensities.items():
            m = model_of(fr)
            p = gate_prob(z, self.gates[label].beta)
            steps = self.exposure.get(label) or (ExposureStep(label, 0.0, horizon, 1.0),)
            lam = sum(s.rate * (m.cif(min(s.end, horizon)) - m.cif(s.start)) for s in steps if s.start < horizon)
            total += p * lam
        return float(total)


def fit_composite(
    systems: Sequence[SmartStream],
    families: dict,
    *,
    exposure: dict | None = None,
    bases: dict | None = None,
) -> CompositeFit:
    """Fit intensities on all interruptive events and gates on the failure flags.

    ``systems`` are streams from independent systems (each its own ``z``);
    ``families`` maps label to an intensity tag. This decomposition is valid
    because the failure marks are independent thinnings given ``z``.
    """
    exposure = exposure or {}
    bases = bases or {}
    fits, obs = {}, []
    for label, tag in families.items():
        hists, steps = [], []
        for k, s in enumerate(systems):
            uid = f"s{k + 1}"
            hists.append(RecurrentHistory(uid, tuple(s.times(label)), s.horizon))
            src = exposure.get(label) or (ExposureStep(uid, 0.0, s.horizon, 1.0),)
            steps.extend(ExposureStep(uid, e.start, e.end, e.rate) for e in src)
        fits[label] = fit_nhpp(hists, steps, tag, basis=bases.get(label))
        for s in systems:
            obs.extend(GateObservation(label, s.z, e.failed) for e in s.events if e.label == label)
    gates = fit_gates(obs)
    return CompositeFit(fits, gates, {k: tuple(v) for k, v in exposure.items()})


def process_from_dict(entry: dict) -> InterruptiveProcess:
    """Build a process from the scenario JSON form ``{label, intensity: {tag, theta[, knots]}, exposure}``."""
    inten = entry["intensity"]
    basis = SplineBasis(tuple(inten["knots"])) if inten.get("knots") is not None else None
    model = IntensityModel(inten["tag"], tuple(inten["theta"]), basis)
    steps = tuple(ExposureStep(entry["label"], float(a), float(b), float(r)) for a, b, r in (entry.get("exposure") or ()))
    return InterruptiveProcess(entry["label"], model, steps)
