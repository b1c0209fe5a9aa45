"""Shared data model, CSV ingestion and the numeric kernel used by the fitters."""

from __future__ import annotations

import csv
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .errors import (
    EmptyDataset,
    EventOutsideExposure,
    InvariantViolation,
    MalformedRow,
    NonFiniteObjective,
    OrderOutOfRange,
)

SCHEMAS = {
    "lifetime": ("unit_id", "time", "status"),
    "exposure": ("unit_id", "start", "end", "rate"),
    "events": ("unit_id", "event_time"),
    "followup": ("unit_id", "follow_up_end"),
    "degradation": ("unit_id", "time", "value"),
}


# --------------------------------------------------------------------------
# records
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LifetimeRecord:
    unit_id: str
    time: float
    status: int

    def __post_init__(self):
        if not (math.isfinite(self.time) and self.time > 0):
            raise InvariantViolation(f"unit {self.unit_id}: time must be > 0, got {self.time}")
        if self.status not in (0, 1):
            raise InvariantViolation(f"unit {self.unit_id}: status must be 0 or 1, got {self.status}")


@dataclass(frozen=True)
class ExposureStep:
    unit_id: str
    start: float
    end: float
    rate: float

    def __post_init__(self):
        if not (self.start >= 0 and self.end > self.start):
            raise InvariantViolation(
                f"unit {self.unit_id}: exposure step needs 0 <= start < end, got [{self.start}, {self.end}]"
            )
        if not (math.isfinite(self.rate) and self.rate >= 0):
            raise InvariantViolation(f"unit {self.unit_id}: exposure rate must be >= 0, got {self.rate}")


@dataclass(frozen=True)
class RecurrentHistory:
    unit_id: str
    event_times: tuple
    follow_up_end: float

    def __post_init__(self):
        times = tuple(float(t) for t in self.event_times)
        object.__setattr__(self, "event_times", times)
        if not (math.isfinite(self.follow_up_end) and self.follow_up_end > 0):
            raise InvariantViolation(f"unit {self.unit_id}: follow_up_end must be > 0")
        prev = 0.0
        for t in times:
            if not t > prev:
                if t == prev and t > 0:
                    raise InvariantViolation(f"unit {self.unit_id}: duplicate event time {t}")
                raise InvariantViolation(
                    f"unit {self.unit_id}: event times must be positive and strictly increasing"
                )
            prev = t
        if times and not times[-1] < self.follow_up_end:
            raise InvariantViolation(
                f"unit {self.unit_id}: event at {times[-1]} is not before follow_up_end {self.follow_up_end}"
            )

    @property
    def n_events(self) -> int:
        return len(self.event_times)


@dataclass(frozen=True)
class DegradationPath:
    unit_id: str
    times: np.ndarray
    values: np.ndarray
    threshold: float | None = None

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        y = np.array(self.values, dtype=float)
        if t.ndim != 1 or t.shape != y.shape:
            raise InvariantViolation(f"unit {self.unit_id}: times and values must have equal length")
        if t.size and (np.any(t < 0) or np.any(np.diff(t) <= 0)):
            raise InvariantViolation(f"unit {self.unit_id}: times must be nonnegative and strictly increasing")
        t.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)


@dataclass(frozen=True)
class FitResult:
    model_tag: str
    theta_hat: np.ndarray
    loglik: float
    std_errors: np.ndarray | None = None
    covariance: np.ndarray | None = None
    converged: bool = False
    n_iter: int = 0
    param_names: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "theta_hat", np.asarray(self.theta_hat, dtype=float))
        if self.std_errors is not None:
            se = np.asarray(self.std_errors, dtype=float)
            if np.any(se[np.isfinite(se)] < 0):
                raise InvariantViolation("standard errors must be nonnegative")
            object.__setattr__(self, "std_errors", se)
        if self.covariance is not None:
            cov = np.asarray(self.covariance, dtype=float)
            if not np.allclose(cov, cov.T, atol=1e-8):
                raise InvariantViolation("covariance must be symmetric")
            object.__setattr__(self, "covariance", cov)

    def params(self) -> dict:
        return dict(zip(self.param_names, self.theta_hat.tolist()))

    def to_dict(self) -> dict:
        out = {
            "model": self.model_tag,
            "params": self.params(),
            "loglik": self.loglik,
            "converged": bool(self.converged),
            "n_iter": int(self.n_iter),
        }
        if self.std_errors is not None:
            out["std_errors"] = {
                n: (None if not np.isfinite(s) else float(s)) for n, s in zip(self.param_names, self.std_errors)
            }
        return out


# --------------------------------------------------------------------------
# ingestion
# --------------------------------------------------------------------------


def _read_rows(path, schema):
    path = Path(path)
    header = SCHEMAS[schema]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path}: file is empty") from None
        if tuple(c.strip() for c in first) != header:
            raise MalformedRow(path, 1, f"expected header {','.join(header)}, got {','.join(first)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, [c.strip() for c in row]))
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")
    return path, rows


def _num(path, lineno, text, name):
    try:
        val = float(text)
    except ValueError:
        raise MalformedRow(path, lineno, f"{name} is not a number: {text!r}") from None
    if not math.isfinite(val):
        raise MalformedRow(path, lineno, f"{name} is not finite: {text!r}")
    return val


def _wrap(path, lineno, build):
    try:
        return build()
    except InvariantViolation as exc:
        raise InvariantViolation(f"{path}:{lineno}: {exc}") from None


def load_dataset(path, schema: str, *, threshold: float | None = None):
    """Read and validate one CSV file.

    Returns a list of :class:`LifetimeRecord` / :class:`ExposureStep` /
    :class:`DegradationPath` for the ``lifetime``, ``exposure`` and
    ``degradation`` schemas, ``{unit_id: sorted event times}`` for ``events``
    and ``{unit_id: follow_up_end}`` for ``followup``.
    """
    if schema not in SCHEMAS:
        raise InvariantViolation(f"unknown schema {schema!r}; expected one of {sorted(SCHEMAS)}")
    path, rows = _read_rows(path, schema)

    if schema == "lifetime":
        out, seen = [], set()
        for lineno, (uid, t, s) in rows:
            if uid in seen:
                raise InvariantViolation(f"{path}:{lineno}: duplicate unit_id {uid}")
            seen.add(uid)
            if s not in ("0", "1"):
                raise MalformedRow(path, lineno, f"status must be 0 or 1, got {s!r}")
            time = _num(path, lineno, t, "time")
            out.append(_wrap(path, lineno, lambda: LifetimeRecord(uid, time, int(s))))
        return out

    if schema == "exposure":
        steps = []
        for lineno, (uid, a, b, r) in rows:
            vals = [_num(path, lineno, v, n) for v, n in ((a, "start"), (b, "end"), (r, "rate"))]
            steps.append(_wrap(path, lineno, lambda: ExposureStep(uid, *vals)))
        check_exposure(steps)
        return steps

    if schema == "events":
        by_unit: dict = {}
        for lineno, (uid, t) in rows:
            time = _num(path, lineno, t, "event_time")
            if time <= 0:
                raise InvariantViolation(f"{path}:{lineno}: event_time must be > 0")
            times = by_unit.setdefault(uid, [])
            if time in times:
                raise InvariantViolation(f"{path}:{lineno}: duplicate event time {time} for unit {uid}")
            times.append(time)
        return {uid: sorted(ts) for uid, ts in by_unit.items()}

    if schema == "followup":
        fu = {}
        for lineno, (uid, t) in rows:
            if uid in fu:
                raise InvariantViolation(f"{path}:{lineno}: duplicate unit_id {uid}")
            val = _num(path, lineno, t, "follow_up_end")
            if val <= 0:
                raise InvariantViolation(f"{path}:{lineno}: follow_up_end must be > 0")
            fu[uid] = val
        return fu

    # degradation
    grouped: dict = {}
    for lineno, (uid, t, y) in rows:
        grouped.setdefault(uid, []).append((_num(path, lineno, t, "time"), _num(path, lineno, y, "value"), lineno))
    paths = []
    for uid, obs in grouped.items():
        obs.sort()
        t = [o[0] for o in obs]
        for k in range(1, len(t)):
            if t[k] == t[k - 1]:
                raise InvariantViolation(f"{path}:{obs[k][2]}: duplicate time {t[k]} for unit {uid}")
        paths.append(
            _wrap(path, obs[0][2], lambda: DegradationPath(uid, t, [o[1] for o in obs], threshold))
        )
    return paths


def check_exposure(steps: Sequence[ExposureStep]) -> dict:
    """Group steps by unit, sorted by start; raise on overlaps."""
    by_unit: dict = {}
    for s in steps:
        by_unit.setdefault(s.unit_id, []).append(s)
    for uid, lst in by_unit.items():
        lst.sort(key=lambda s: s.start)
        for prev, cur in zip(lst, lst[1:]):
            if cur.start < prev.end:
                raise InvariantViolation(
                    f"unit {uid}: exposure steps [{prev.start}, {prev.end}] and [{cur.start}, {cur.end}] overlap"
                )
    return by_unit


def unit_exposure(histories: Sequence[RecurrentHistory]) -> list:
    """Exposure x(t) = 1 over each unit's whole follow-up."""
    return [ExposureStep(h.unit_id, 0.0, h.follow_up_end, 1.0) for h in histories]


def validate_recurrent(histories: Sequence[RecurrentHistory], exposure: Sequence[ExposureStep]) -> dict:
    """Check that exposure covers (0, tau_i] without gaps and that every event
    falls in a positive-rate step. Returns the per-unit sorted steps."""
    by_unit = check_exposure(exposure)
    for h in histories:
        steps = by_unit.get(h.unit_id)
        if not steps:
            raise InvariantViolation(f"unit {h.unit_id}: no exposure steps")
        cursor = 0.0
        for s in steps:
            if cursor >= h.follow_up_end:
                break
            if s.start > cursor:
                raise InvariantViolation(f"unit {h.unit_id}: missing exposure on ({cursor}, {s.start}]")
            cursor = max(cursor, s.end)
        if cursor < h.follow_up_end:
            raise InvariantViolation(f"unit {h.unit_id}: missing exposure on ({cursor}, {h.follow_up_end}]")
        if not h.event_times:
            continue
        t = np.asarray(h.event_times)
        k = np.searchsorted([s.start for s in steps], t, side="left") - 1
        kk = np.clip(k, 0, None)
        ends = np.array([s.end for s in steps])[kk]
        rates = np.array([s.rate for s in steps])[kk]
        bad = (k < 0) | (t > ends) | (rates <= 0)
        if bad.any():
            t0 = float(t[np.argmax(bad)])
            raise EventOutsideExposure(f"unit {h.unit_id}: event at {t0} is not inside a positive-rate exposure step")
    return by_unit


def load_recurrent(events_path, followup_path, exposure_path=None):
    """Assemble validated (histories, exposure) from the three recurrent-event CSVs.

    Units listed in the follow-up file without events get empty histories.
    Without an exposure file, x(t) = 1 is assumed.
    """
    events = load_dataset(events_path, "events")
    followup = load_dataset(followup_path, "followup")
    missing = sorted(set(events) - set(followup))
    if missing:
        raise InvariantViolation(f"units with events but no follow-up: {', '.join(missing)}")
    histories = [RecurrentHistory(uid, tuple(events.get(uid, ())), tau) for uid, tau in followup.items()]
    if exposure_path is None:
        exposure = unit_exposure(histories)
    else:
        exposure = load_dataset(exposure_path, "exposure")
    validate_recurrent(histories, exposure)
    return histories, exposure


def write_dataset(records, path, schema: str) -> None:
    """Inverse of :func:`load_dataset`; floats are written with ``repr`` so a
    round trip is exact."""
    header = SCHEMAS[schema]
    rows = []
    if schema == "lifetime":
        rows = [(r.unit_id, repr(float(r.time)), str(r.status)) for r in records]
    elif schema == "exposure":
        rows = [(r.unit_id, repr(float(r.start)), repr(float(r.end)), repr(float(r.rate))) for r in records]
    elif schema == "events":
        items = records.items() if isinstance(records, dict) else ((h.unit_id, h.event_times) for h in records)
        rows = [(uid, repr(float(t))) for uid, ts in items for t in ts]
    elif schema == "followup":
        items = records.items() if isinstance(records, dict) else ((h.unit_id, h.follow_up_end) for h in records)
        rows = [(uid, repr(float(t))) for uid, t in items]
    elif schema == "degradation":
        rows = [(p.unit_id, repr(float(t)), repr(float(y))) for p in records for t, y in zip(p.times, p.values)]
    else:
        raise InvariantViolation(f"unknown schema {schema!r}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --------------------------------------------------------------------------
# numeric kernel
# --------------------------------------------------------------------------


class MaxResult(NamedTuple):
    x: np.ndarray
    value: float
    converged: bool
    n_iter: int
    grad_norm: float
    message: str


def _projected_grad(x, g, bounds):
    pg = np.array(g, dtype=float)
    if bounds is not None:
        for i, (lo, hi) in enumerate(bounds):
            if lo is not None and x[i] <= lo and pg[i] < 0:
                pg[i] = 0.0
            if hi is not None and x[i] >= hi and pg[i] > 0:
                pg[i] = 0.0
    return pg


def maximize(
    fun: Callable,
    x0,
    *,
    jac: bool | Callable = False,
    bounds=None,
    tol: float = 1e-6,
    max_iter: int = 2000,
    restarts: int = 2,
) -> MaxResult:
    """Maximize a smooth objective with projected quasi-Newton (L-BFGS-B).

    Parameters
    ----------
    fun : callable
        Objective. If ``jac is True`` it must return ``(value, gradient)``.
    x0 : array-like
        Starting point; projected into ``bounds`` first.
    jac : bool or callable
        ``True`` if ``fun`` returns the gradient, a callable for a separate
        gradient, or ``False`` for finite differences.
    bounds : sequence of (lo, hi), optional
        Box constraints; ``None`` entries mean unbounded.
    tol : float
        Convergence requires the projected gradient norm to be below
        ``tol * (1 + |f|)``.
    restarts : int
        Restarts from a perturbed best point when not converged. The
        perturbation uses a fixed seed, so results are deterministic.

    Returns
    -------
    MaxResult
        ``converged`` is False (never an exception) when iterations ran out.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if bounds is not None:
        lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
        hi = np.array([np.inf if b[1] is None else b[1] for b in bounds])
        x0 = np.clip(x0, lo, hi)

    def value_and_grad(x):
        if jac is True:
            f, g = fun(x)
            return float(f), np.asarray(g, dtype=float)
        f = float(fun(x))
        if callable(jac):
            return f, np.asarray(jac(x), dtype=float)
        return f, optimize.approx_fprime(x, lambda z: float(fun(z)), 1e-7)

    f0, _ = value_and_grad(x0)
    if not np.isfinite(f0):
        raise NonFiniteObjective(f"objective is not finite at the start point ({f0})")

    def neg(x):
        f, g = value_and_grad(x)
        if not np.isfinite(f):
            return 1e300, np.zeros_like(x)
        return -f, -g

    rng = np.random.default_rng(0)
    best = None
    total_iter = 0
    start = x0
    for attempt in range(restarts + 1):
        res = optimize.minimize(
            neg,
            start,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_iter, "ftol": 1e-15, "gtol": 1e-12, "maxcor": 20, "maxls": 50},
        )
        total_iter += int(res.nit)
        f, g = value_and_grad(res.x)
        pg = float(np.linalg.norm(_projected_grad(res.x, g, bounds)))
        ok = bool(np.isfinite(f) and pg <= tol * (1.0 + abs(f)))
        cand = MaxResult(res.x.copy(), f, ok, total_iter, pg, str(res.message))
        if best is None or (cand.value > best.value) or (ok and not best.converged and cand.value >= best.value):
            best = cand
        if ok:
            break
        jitter = 0.1 * rng.standard_normal(best.x.shape) * np.maximum(1.0, np.abs(best.x))
        start = best.x + jitter
        if bounds is not None:
            start = np.clip(start, lo, hi)
    return best._replace(n_iter=total_iter)


def numerical_jacobian(fun: Callable, x, step: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of a vector function."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h))
    return np.column_stack(cols)


def observed_information_cov(grad: Callable, x, step: float = 1e-5):
    """Inverse observed information from a numerical Hessian of the loglik.

    Returns ``None`` when the information matrix is not positive definite.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return np.zeros((0, 0))
    H = numerical_jacobian(grad, x, step)
    info = -(H + H.T) / 2
    try:
        L = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        return None
    Linv = np.linalg.inv(L)
    cov = Linv.T @ Linv
    return (cov + cov.T) / 2


def gauss_hermite_nodes(order: int):
    """Nodes and weights for integrals of the form ``∫ exp(-x²) g(x) dx``."""
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= 100:
        raise OrderOutOfRange(f"Gauss-Hermite order must be in [1, 100], got {order}")
    return np.polynomial.hermite.hermgauss(int(order))


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; ``seed`` may be an int or SeedSequence."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def spawn_rngs(seed, n: int) -> list:
    """Independent per-stream generators derived from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(s)) for s in ss.spawn(n)]
