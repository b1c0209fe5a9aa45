"""Mahalanobis confidence scores from a pooled-covariance LDA fit, and the
closed-form minimal L2 perturbation that flips a linear classifier."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .errors import (
    DimensionMismatch,
    EmptyClass,
    InputError,
    SingularCovariance,
    TooFewScores,
    ZeroWeight,
)

EPS_FLIP = 1e-9
RIDGE_REL = 1e-6


@dataclass(frozen=True)
class LdaEstimate:
    labels: tuple
    means: np.ndarray  # (k, d)
    pooled_cov: np.ndarray  # (d, d), divisor n
    counts: tuple
    chol: np.ndarray  # lower Cholesky factor of pooled_cov
    ridge: float = 0.0

    @property
    def ridge_applied(self) -> bool:
        return self.ridge > 0

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "means": self.means.tolist(),
            "pooled_cov": self.pooled_cov.tolist(),
            "counts": list(self.counts),
            "ridge": self.ridge,
            "ridge_applied": self.ridge_applied,
        }


def fit_lda(features, labels) -> LdaEstimate:
    """Class means and the pooled within-class covariance (divisor ``n``).

    A ridge ``eps * I`` with ``eps = 1e-6 * trace / d`` is added when the
    pooled covariance is not numerically positive definite.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(labels)
    n, d = X.shape
    if d < 1 or y.shape != (n,):
        raise DimensionMismatch("features must be n x d with one label per row")
    classes = tuple(sorted(set(y.tolist()), key=str))
    if not classes:
        raise EmptyClass("no classes")
    if n < len(classes) + 1:
        raise InputError(f"need at least k + 1 = {len(classes) + 1} rows, got {n}")
    means, counts = [], []
    S = np.zeros((d, d))
    for c in classes:
        Xc = X[y == c]
        if Xc.shape[0] == 0:
            raise EmptyClass(f"class {c} is empty")
        mu = Xc.mean(axis=0)
        R = Xc - mu
        S += R.T @ R
        means.append(mu)
        counts.append(int(Xc.shape[0]))
    S = (S + S.T) / (2 * n)
    ridge = 0.0
    w = np.linalg.eigvalsh(S)
    if w.min() <= 1e-10 * max(w.max(), 0.0) or w.max() <= 0:
        tr = np.trace(S)
        ridge = RIDGE_REL * tr / d if tr > 0 else RIDGE_REL
        S = S + ridge * np.eye(d)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise SingularCovariance("pooled covariance is singular even after the ridge") from None
    return LdaEstimate(tuple(classes), np.array(means), S, tuple(counts), L, ridge)


def _as_rows(est: LdaEstimate, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != est.dim:
        raise DimensionMismatch(f"expected {est.dim} features, got {X.shape[1]}")
    return X, single


def class_distances(est: LdaEstimate, x) -> np.ndarray:
    """Squared Mahalanobis distances to every class mean, shape (n, k)."""
    X, _ = _as_rows(est, x)
    diff = X[:, None, :] - est.means[None, :, :]
    sol = linalg.solve_triangular(est.chol, diff.reshape(-1, est.dim).T, lower=True)
    return np.sum(sol**2, axis=0).reshape(X.shape[0], -1)


def confidence_score(est: LdaEstimate, x):
    """``max_j -(x - mu_j)' Sigma^{-1} (x - mu_j)``; a scalar for one row, an array for several."""
    X, single = _as_rows(est, x)
    s = -class_distances(est, X).min(axis=1)
    return float(s[0]) if single else s


def ood_flag(est: LdaEstimate, x, threshold: float):
    """``"ood"`` when the score falls strictly below ``threshold``."""
    s = confidence_score(est, x)
    if np.ndim(s) == 0:
        return "ood" if s < threshold else "in_distribution"
    return np.where(s < threshold, "ood", "in_distribution")


def calibrate_threshold(est: LdaEstimate | None, in_dist_scores, target_fpr: float) -> float:
    """Threshold whose empirical false-positive rate on ``in_dist_scores`` is ``target_fpr``.

    Flags are ``score < threshold``. ``target_fpr = 0`` returns the minimum
    score less a relative slack so nothing is flagged; ``target_fpr = 1``
    returns the maximum score, which flags everything except the maximum
    itself (ties at the threshold are never flagged).
    """
    s = np.sort(np.asarray(in_dist_scores, dtype=float))
    if s.size < 100:
        raise TooFewScores(f"need at least 100 in-distribution scores, got {s.size}")
    if not 0 <= target_fpr <= 1:
        raise InputError("target_fpr must lie in [0, 1]")
    if target_fpr == 0:
        return float(s[0] - 1e-12 * max(1.0, abs(s[0])))
    k = int(np.ceil(target_fpr * s.size))
    return float(s[min(k, s.size - 1)])


def roc_sweep(in_scores, ood_scores):
    """``(thresholds, fpr, tpr)`` with ood as the positive class, flagged when ``score < threshold``."""
    a = np.asarray(in_scores, dtype=float)
    b = np.asarray(ood_scores, dtype=float)
    thr = np.unique(np.concatenate([a, b, [np.inf]]))
    a_s, b_s = np.sort(a), np.sort(b)
    fpr = np.searchsorted(a_s, thr, side="left") / a.size
    tpr = np.searchsorted(b_s, thr, side="left") / b.size
    thr = np.concatenate([[-np.inf], thr])
    return thr, np.concatenate([[0.0], fpr]), np.concatenate([[0.0], tpr])


def auc(in_scores, ood_scores) -> float:
    """P(ood score < in-distribution score) with ties counted as one half."""
    a = np.sort(np.asarray(in_scores, dtype=float))
    b = np.asarray(ood_scores, dtype=float)
    below = np.searchsorted(a, b, side="right")
    ties = below - np.searchsorted(a, b, side="left")
    return float(np.sum(a.size - below + 0.5 * ties) / (a.size * b.size))


@dataclass(frozen=True)
class LinearClassifier:
    w: np.ndarray
    b: float

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))
        if not np.linalg.norm(w) > 0:
            raise ZeroWeight("classifier weight vector must be nonzero")

    def decision(self, x):
        return np.asarray(x, dtype=float) @ self.w + self.b

    def predict(self, x):
        return np.sign(self.decision(x))


class Perturbation(NamedTuple):
    r: np.ndarray
    x_star: np.ndarray
    on_boundary: bool


def min_adversarial_perturbation(clf: LinearClassifier, x, eps_flip: float = EPS_FLIP) -> Perturbation:
    """Smallest L2 step ``r`` with ``sign(w'(x + r) + b) != sign(w'x + b)``.

    ``r = -(w'x + b) / |w|^2 * w * (1 + eps_flip)``. When ``x`` already sits
    on the hyperplane, ``r = eps_flip * w / |w|`` and ``on_boundary`` is set.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != clf.w.shape:
        raise DimensionMismatch(f"x has shape {x.shape}, w has {clf.w.shape}")
    w = clf.w
    ww = w @ w
    g = float(x @ w + clf.b)
    if g == 0.0:
        r = eps_flip * w / np.sqrt(ww)
        return Perturbation(r, x + r, True)
    r = -(g / ww) * w * (1 + eps_flip)
    x_star = x + r
    # rounding can leave x_star on the original side for tiny eps_flip
    k = 0
    while np.sign(x_star @ w + clf.b) == np.sign(g) and k < 60:
        r = r * (1 + max(eps_flip, 1e-15) * 2**k)
        x_star = x + r
        k += 1
    return Perturbation(r, x_star, False)
