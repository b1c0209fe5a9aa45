"""Monotone I-spline bases built as running integrals of normalized M-splines.

An M-spline of degree ``d`` on the knot vector ``t`` is a B-spline rescaled to
integrate to one, ``M_l = (d + 1) B_l / (t[l + d + 1] - t[l])``, so its running
integral ``I_l(x) = ∫_0^x M_l`` climbs from 0 at the left boundary to 1 at the
right boundary. Nonnegative combinations of I-splines are nondecreasing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import BSpline, PPoly

from .errors import InputError, OutOfDomain

_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class SplineBasis:
    """Knots ``(0, k_1, ..., k_r, tau)``; ``n_s = r + degree + 1`` basis functions."""

    knots: tuple
    degree: int = 3

    def __post_init__(self):
        k = tuple(float(v) for v in self.knots)
        object.__setattr__(self, "knots", k)
        if len(k) < 2 or k[0] != 0.0:
            raise InputError("spline knots must start at 0 and contain at least the two boundary knots")
        if any(b <= a for a, b in zip(k, k[1:])):
            raise InputError(f"spline knots must be strictly increasing, got {k}")
        if self.degree < 1:
            raise InputError("spline degree must be >= 1")

    @property
    def tau(self) -> float:
        return self.knots[-1]

    @property
    def n_basis(self) -> int:
        return len(self.knots) - 2 + self.degree + 1

    @cached_property
    def _knot_vector(self):
        d = self.degree
        k = np.array(self.knots)
        return np.concatenate([np.repeat(k[0], d + 1), k[1:-1], np.repeat(k[-1], d + 1)])

    @cached_property
    def _mspline(self) -> BSpline:
        t = self._knot_vector
        d = self.degree
        n = self.n_basis
        widths = t[d + 1 : d + 1 + n] - t[:n]
        return BSpline(t, np.diag((d + 1) / widths), d, extrapolate=False)

    @cached_property
    def _ispline(self) -> BSpline:
        return self._mspline.antiderivative()

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -_DOMAIN_SLACK) or np.any(t > self.tau * (1 + _DOMAIN_SLACK)):
            raise OutOfDomain(f"spline evaluated outside [0, {self.tau}]")
        return np.clip(t, 0.0, self.tau)

    def ivalues(self, t) -> np.ndarray:
        """I-spline values, shape ``t.shape + (n_basis,)``."""
        t = self._check(t)
        out = self._ispline(t) - self._ispline(0.0)
        # outside each basis's support the value is exactly 0 or 1; avoid ulp wobble there
        kv = self._knot_vector
        d, n = self.degree, self.n_basis
        tt = np.asarray(t)[..., None]
        out = np.where(tt >= kv[d + 1 : d + 1 + n], 1.0, out)
        out = np.where(tt <= kv[:n], 0.0, out)
        return np.clip(out, 0.0, 1.0)

    def mvalues(self, t) -> np.ndarray:
        """M-spline values (derivatives of the I-splines)."""
        t = self._check(t)
        return np.nan_to_num(self._mspline(t))

    def rate_ppoly(self, coef) -> PPoly:
        """Piecewise-polynomial form of ``sum_l coef_l M_l``."""
        t = self._knot_vector
        d = self.degree
        n = self.n_basis
        widths = t[d + 1 : d + 1 + n] - t[:n]
        return PPoly.from_spline(BSpline(t, np.asarray(coef, dtype=float) * (d + 1) / widths, d))

    @classmethod
    def from_events(cls, event_times, tau: float, n_basis: int = 5, degree: int = 3) -> SplineBasis:
        """Boundary knots at 0 and ``tau``; interior knots at event-time quantiles."""
        n_interior = n_basis - degree - 1
        if n_interior < 0:
            raise InputError(f"need at least {degree + 1} basis functions for degree {degree}")
        ev = np.asarray(event_times, dtype=float)
        ev = ev[(ev > 0) & (ev < tau)]
        if n_interior == 0:
            interior = []
        else:
            probs = np.arange(1, n_interior + 1) / (n_interior + 1)
            if ev.size >= n_interior:
                interior = np.quantile(ev, probs)
            else:
                interior = probs * tau
            interior = np.unique(np.clip(interior, tau * 1e-6, tau * (1 - 1e-6)))
            if interior.size < n_interior:
                interior = probs * tau
        return cls((0.0, *map(float, interior), float(tau)), degree)


def ispline_basis_eval(basis: SplineBasis, t) -> np.ndarray:
    """Vector of the ``n_s`` I-spline values at ``t``; zero at ``t = 0``."""
    return basis.ivalues(t)


def ppoly_max(pp: PPoly, a: float, b: float) -> float:
    """Maximum of a piecewise polynomial over ``[a, b]`` (endpoints and interior critical points)."""
    cand = [a, b]
    crit = pp.derivative().roots(extrapolate=False)
    crit = crit[np.isfinite(crit)]
    cand.extend(crit[(crit > a) & (crit < b)].tolist())
    inner = pp.x[(pp.x > a) & (pp.x < b)]
    cand.extend(inner.tolist())
    vals = pp(np.array(cand), extrapolate=True)
    return float(np.nanmax(vals))
