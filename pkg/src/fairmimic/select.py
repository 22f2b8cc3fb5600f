"""LASSO feature selection with cross-validation, plus Spearman correlation.

The solver is plain cyclic coordinate descent with soft-thresholding on the
objective (1/2n)||y - b0 - F w||^2 + penalty * ||w||_1; the intercept is
handled by centering and is never penalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .exceptions import ConvergenceError

MAX_SWEEPS = 10_000
COEF_TOL = 1e-7


def _soft_threshold(z: float, threshold: float) -> float:
    if z > threshold:
        return z - threshold
    if z < -threshold:
        return z + threshold
    return 0.0


def penalty_max(features, target) -> float:
    """Smallest penalty at which every coefficient is exactly zero."""
    F = np.asarray(features, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    yc = y - y.mean()
    Fc = F - F.mean(axis=0)
    return float(np.max(np.abs(Fc.T @ yc)) / F.shape[0])


def lasso_fit(features, target, penalty_weight: float, w0=None, trace=None):
    """Cyclic coordinate descent for the LASSO.

    Parameters
    ----------
    features : (n, q) array
    target : (n,) array
    penalty_weight : float, >= 0
    w0 : optional warm-start coefficients.
    trace : optional list; if given, the objective value after each sweep is
        appended (used to check that sweeps never increase the objective).

    Returns
    -------
    (coefficients, intercept)

    Raises
    ------
    ConvergenceError
        If the maximum coefficient change is still above 1e-7 after 10^4
        sweeps.
    """
    F = np.asarray(features, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if F.ndim != 2 or y.ndim != 1 or F.shape[0] != y.shape[0]:
        raise ValueError("features must be n x q and target length n")
    if penalty_weight < 0:
        raise ValueError("penalty_weight must be nonnegative")
    n, q = F.shape
    f_mean = F.mean(axis=0)
    y_mean = y.mean()
    Fc = F - f_mean
    yc = y - y_mean
    norms = (Fc * Fc).mean(axis=0)  # (1/n) ||F_j||^2 of the centered columns

    w = np.zeros(q) if w0 is None else np.asarray(w0, dtype=np.float64).copy()
    r = yc - Fc @ w
    for _ in range(MAX_SWEEPS):
        max_change = 0.0
        for j in range(q):
            if norms[j] == 0.0:
                continue
            old = w[j]
            z = (Fc[:, j] @ r) / n + norms[j] * old
            new = _soft_threshold(z, penalty_weight) / norms[j]
            if new != old:
                r -= (new - old) * Fc[:, j]
                w[j] = new
                max_change = max(max_change, abs(new - old))
        if trace is not None:
            obj = 0.5 * float(r @ r) / n + penalty_weight * float(np.abs(w).sum())
            trace.append(obj)
        if max_change < COEF_TOL:
            intercept = float(y_mean - f_mean @ w)
            return w, intercept
    raise ConvergenceError(
        f"coordinate descent did not converge in {MAX_SWEEPS} sweeps"
    )


def default_penalty_grid(features, target, n_points: int = 100, ratio: float = 1e-3):
    """Log-spaced descending grid from penalty_max down to ratio * penalty_max."""
    pmax = penalty_max(features, target)
    if pmax == 0.0:
        raise ValueError("target is uncorrelated with every feature; empty grid")
    return np.geomspace(pmax, ratio * pmax, n_points)


@dataclass(frozen=True)
class LassoPath:
    """Solution path over a descending penalty grid with CV error."""

    penalties: np.ndarray
    coefs: np.ndarray  # (grid, q), fitted on the full data
    intercepts: np.ndarray
    cv_mse: np.ndarray
    cv_se: np.ndarray
    chosen_index: int
    chosen_penalty: float
    active_set: tuple  # indices of nonzero coefficients at the chosen penalty
    feature_names: tuple | None
    rule: str

    @property
    def chosen_coefs(self) -> np.ndarray:
        return self.coefs[self.chosen_index]

    @property
    def chosen_intercept(self) -> float:
        return float(self.intercepts[self.chosen_index])

    def active_names(self):
        if self.feature_names is None:
            return tuple(str(j) for j in self.active_set)
        return tuple(self.feature_names[j] for j in self.active_set)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "rule": self.rule,
            "penalties": self.penalties.tolist(),
            "coefs": self.coefs.tolist(),
            "intercepts": self.intercepts.tolist(),
            "cv_mse": self.cv_mse.tolist(),
            "cv_se": self.cv_se.tolist(),
            "chosen_index": self.chosen_index,
            "chosen_penalty": self.chosen_penalty,
            "active_set": list(self.active_set),
            "feature_names": None if self.feature_names is None else list(self.feature_names),
        }

    def to_role_fragment(self) -> dict:
        """Role-config fragment declaring the selected features as covariates."""
        return {"roles": {name: "covariate" for name in self.active_names()}}


def _fit_path(F, y, grid):
    q = F.shape[1]
    coefs = np.empty((len(grid), q))
    intercepts = np.empty(len(grid))
    w = np.zeros(q)
    for i, pen in enumerate(grid):  # descending grid, warm starts
        w, b0 = lasso_fit(F, y, pen, w0=w)
        coefs[i] = w
        intercepts[i] = b0
    return coefs, intercepts


def cv_select(
    features,
    target,
    k_folds: int = 10,
    penalty_grid=None,
    seed: int = 0,
    rule: str = "min",
    feature_names=None,
) -> LassoPath:
    """K-fold cross-validated LASSO path and penalty choice.

    The penalty minimizing CV MSE is chosen (``rule="min"``); ``rule="1se"``
    instead picks the largest penalty within one standard error of the
    minimum.  Fold assignment is a seeded permutation, so the result is
    deterministic given the seed.
    """
    F = np.asarray(features, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    n = F.shape[0]
    if k_folds < 2:
        raise ValueError("k_folds must be at least 2")
    if k_folds > n:
        raise ValueError(f"{k_folds} folds over {n} rows leaves folds smaller than 1 row")
    if rule not in ("min", "1se"):
        raise ValueError("rule must be 'min' or '1se'")
    if penalty_grid is None:
        grid = default_penalty_grid(F, y)
    else:
        grid = np.asarray(penalty_grid, dtype=np.float64)
        if np.any(np.diff(grid) > 0):
            raise ValueError("penalty_grid must be descending")

    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k_folds)

    fold_mse = np.empty((k_folds, len(grid)))
    for f, val_idx in enumerate(folds):
        mask = np.ones(n, dtype=bool)
        mask[val_idx] = False
        coefs, intercepts = _fit_path(F[mask], y[mask], grid)
        preds = F[val_idx] @ coefs.T + intercepts[None, :]
        fold_mse[f] = ((preds - y[val_idx, None]) ** 2).mean(axis=0)

    cv_mse = fold_mse.mean(axis=0)
    cv_se = fold_mse.std(axis=0, ddof=1) / np.sqrt(k_folds)

    best = int(np.argmin(cv_mse))
    if rule == "1se":
        limit = cv_mse[best] + cv_se[best]
        chosen = next(i for i in range(len(grid)) if cv_mse[i] <= limit)
    else:
        chosen = best

    coefs, intercepts = _fit_path(F, y, grid)
    active = tuple(int(j) for j in np.flatnonzero(coefs[chosen]))
    return LassoPath(
        penalties=grid,
        coefs=coefs,
        intercepts=intercepts,
        cv_mse=cv_mse,
        cv_se=cv_se,
        chosen_index=chosen,
        chosen_penalty=float(grid[chosen]),
        active_set=active,
        feature_names=None if feature_names is None else tuple(feature_names),
        rule=rule,
    )


def spearman(a, b) -> float:
    """Spearman rank correlation: Pearson correlation of midranked values."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be equal-length vectors")
    if a.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    ra = rankdata(a, method="average")
    rb = rankdata(b, method="average")
    if np.all(ra == ra[0]) or np.all(rb == rb[0]):
        raise ValueError("spearman undefined for zero-variance input")
    return float(np.corrcoef(ra, rb)[0, 1])
