"""Three-component mixture design crossed with two binary processing variables,
and the blended quadratic surrogate fitted to its responses.

Surrogate (no processing-variable main effects)::

    y = sum_j b_j x_j + sum_{j<j'} b_jj' x_j x_j' + sum_k sum_j g_kj z_k x_j + d_12 z_1 z_2

Main effects ``g_k`` are recovered afterwards from the sum-to-zero identity
``sum_j (g_kj + g_k) = 0``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionMismatch, InputError, RankDeficient, UnsupportedDimension

DEFAULT_LEVELS = ((1, 0), (0, 1), (0, 0))
CAPTION_LEVELS = ((1, 0), (0, 1), (1, 1))
BASE_LEVEL = (1, 1)


@dataclass(frozen=True)
class DesignRun:
    run: int
    x: tuple
    z: tuple
    rep: int


@dataclass(frozen=True)
class MixtureDesign:
    runs: tuple
    m: int = 3
    h: int = 2
    min_prop: float = 0.01

    def __post_init__(self):
        for r in self.runs:
            if len(r.x) != self.m or len(r.z) != self.h:
                raise DimensionMismatch(f"run {r.run}: wrong number of components")
            if abs(sum(r.x) - 1) > 1e-12:
                raise InputError(f"run {r.run}: proportions sum to {sum(r.x)}")
            if min(r.x) < self.min_prop - 1e-15:
                raise InputError(f"run {r.run}: proportion below {self.min_prop}")
            if any(v not in (0, 1) for v in r.z):
                raise InputError(f"run {r.run}: processing variables must be 0/1")

    @property
    def n_runs(self) -> int:
        return len({r.run for r in self.runs})

    def X(self) -> np.ndarray:
        return np.array([r.x for r in self.runs], dtype=float)

    def Z(self) -> np.ndarray:
        return np.array([r.z for r in self.runs], dtype=float)


def base_blends(min_prop: float = 0.01) -> list:
    """Vertex-adjacent, edge-midpoint and centroid blends, in table order."""
    lo = min_prop
    hi = 1 - 2 * lo
    mid = (1 - lo) / 2
    third = 1 / 3
    return [
        (lo, lo, hi), (lo, hi, lo), (hi, lo, lo),
        (lo, mid, mid), (mid, lo, mid), (mid, mid, lo),
        (third, third, third),
    ]


def gen_mixture_design(
    m: int = 3,
    h: int = 2,
    min_prop: float = 0.01,
    replicates: int = 2,
    levels=DEFAULT_LEVELS,
) -> MixtureDesign:
    """Runs 1-7 at ``z = (1, 1)``, then the seven blends crossed with each entry of ``levels``.

    The default ``levels`` complete the 2x2 factorial so every surrogate term is
    estimable; :data:`CAPTION_LEVELS` repeats (1, 1) instead, which aliases
    ``z_1 z_2`` with the process-by-blend terms.
    """
    if m != 3 or h != 2:
        raise UnsupportedDimension(f"only m = 3, h = 2 is supported, got m = {m}, h = {h}")
    if replicates < 1:
        raise InputError("replicates must be >= 1")
    if not 0 < min_prop < 1 / 3:
        raise InputError("min_prop must lie in (0, 1/3)")
    blends = base_blends(min_prop)
    runs = []
    run = 0
    for z in (BASE_LEVEL, *[tuple(l) for l in levels]):
        for x in blends:
            run += 1
            for rep in range(1, replicates + 1):
                runs.append(DesignRun(run, x, tuple(int(v) for v in z), rep))
    return MixtureDesign(tuple(runs), m, h, min_prop)


TERM_NAMES = (
    "b1", "b2", "b3", "b12", "b13", "b23",
    "g11", "g12", "g13", "g21", "g22", "g23", "d12",
)


def model_matrix(X, Z) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if X.shape[1] != 3 or Z.shape[1] != 2 or X.shape[0] != Z.shape[0]:
        raise DimensionMismatch("expected n x 3 proportions and n x 2 processing variables")
    cols = [X[:, 0], X[:, 1], X[:, 2], X[:, 0] * X[:, 1], X[:, 0] * X[:, 2], X[:, 1] * X[:, 2]]
    for k in range(2):
        cols.extend(Z[:, k] * X[:, j] for j in range(3))
    cols.append(Z[:, 0] * Z[:, 1])
    return np.column_stack(cols)


@dataclass(frozen=True)
class SurrogateFit:
    coef: np.ndarray  # in TERM_NAMES order
    gamma_main: np.ndarray  # recovered g_k
    sigma_eps2: float
    n: int

    @property
    def beta(self):
        return self.coef[:3]

    @property
    def beta_pair(self):
        return self.coef[3:6]

    @property
    def gamma(self):
        return self.coef[6:12].reshape(2, 3)

    @property
    def delta(self):
        return float(self.coef[12])

    def constraint_residual(self) -> np.ndarray:
        return np.sum(self.gamma + self.gamma_main[:, None], axis=1)

    def predict(self, X, Z) -> np.ndarray:
        return model_matrix(X, Z) @ self.coef

    def to_dict(self) -> dict:
        d = {name: float(v) for name, v in zip(TERM_NAMES, self.coef)}
        d["g1"], d["g2"] = (float(v) for v in self.gamma_main)
        d["sigma_eps2"] = self.sigma_eps2
        d["n"] = self.n
        return d


def _aliased_terms(M) -> list:
    """Terms whose column lies in the span of the earlier ones."""
    out = []
    keep = []
    for j in range(M.shape[1]):
        cand = keep + [j]
        if np.linalg.matrix_rank(M[:, cand]) < len(cand):
            out.append(TERM_NAMES[j])
        else:
            keep.append(j)
    return out


def fit_surrogate(design: MixtureDesign, responses) -> SurrogateFit:
    """Least squares on the 13 surrogate columns, replicates pooled."""
    y = np.asarray(responses, dtype=float)
    if y.shape != (len(design.runs),):
        raise DimensionMismatch(f"expected {len(design.runs)} responses, got {y.shape}")
    M = model_matrix(design.X(), design.Z())
    rank = np.linalg.matrix_rank(M)
    if rank < M.shape[1]:
        aliased = _aliased_terms(M)
        raise RankDeficient(f"design does not support all terms; aliased: {', '.join(aliased)}", aliased)
    Q, R = np.linalg.qr(M)
    coef = np.linalg.solve(R, Q.T @ y)
    resid = y - M @ coef
    dof = M.shape[0] - M.shape[1]
    s2 = float(resid @ resid / dof) if dof > 0 else float("nan")
    gamma = coef[6:12].reshape(2, 3)
    gamma_main = -gamma.mean(axis=1)
    return SurrogateFit(coef, gamma_main, s2, len(y))


def simplex_lattice(resolution: int, min_prop: float = 0.01) -> np.ndarray:
    """Barycentric points ``(i, j, k) / resolution`` with every coordinate at least ``min_prop``."""
    if resolution < 10:
        raise InputError("resolution must be >= 10")
    pts = []
    lo = Fraction(min_prop).limit_denominator(10**9)
    for i in range(resolution + 1):
        for j in range(resolution + 1 - i):
            k = resolution - i - j
            if min(i, j, k) >= lo * resolution:
                pts.append((i / resolution, j / resolution, k / resolution))
    return np.array(pts)


def predict_simplex_grid(fit: SurrogateFit, z, resolution: int, min_prop: float = 0.01):
    """``(points, yhat)`` on the lattice for processing levels ``z``; yhat is not clamped."""
    pts = simplex_lattice(resolution, min_prop)
    Z = np.tile(np.asarray(z, dtype=float), (pts.shape[0], 1))
    return pts, fit.predict(pts, Z)


def write_design_csv(design: MixtureDesign, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "x1", "x2", "x3", "z1", "z2", "rep"])
        for r in design.runs:
            w.writerow([r.run, *map(repr, r.x), *r.z, r.rep])


def read_design_csv(path, min_prop: float = 0.01) -> MixtureDesign:
    runs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            runs.append(DesignRun(
                int(row["run"]),
                (float(row["x1"]), float(row["x2"]), float(row["x3"])),
                (int(row["z1"]), int(row["z2"])),
                int(row["rep"]),
            ))
    return MixtureDesign(tuple(runs), min_prop=min_prop)


def read_responses_csv(path, design: MixtureDesign) -> np.ndarray:
    got = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            got[(int(row["run"]), int(row["rep"]))] = float(row["y"])
    try:
        return np.array([got[(r.run, r.rep)] for r in design.runs])
    except KeyError as e:
        raise InputError(f"no response for run/rep {e.args[0]}") from None


def write_grid_csv(points, yhat, path) -> None:
    """Plot data; predictions are clamped to [0, 1] here only."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "x3", "yhat"])
        for p, v in zip(points, np.clip(yhat, 0.0, 1.0)):
            w.writerow([*map(repr, map(float, p)), repr(float(v))])


def level_combinations(h: int = 2):
    return list(itertools.product((0, 1), repeat=h))
