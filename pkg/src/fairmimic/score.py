"""Risk scores from a fitted model and percentile-threshold decisions.

The fair score blocks the sensitive-attribute path by evaluating the
structural equation with the sensitive attribute pinned at a reference
level for every row, so two people with the same covariates get exactly the
same score no matter their group.  The naive score leaves the path open and
serves as the comparison baseline in audits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import NotPositiveDefiniteError
from .model import MimicModel, _check_regressors, _cond_cov, _extract_arrays


def fair_score(model: MimicModel, covariates, reference_level=None) -> np.ndarray:
    """Blocked-path risk score beta' x + gamma * s_ref for every row.

    The rows' own sensitive values play no part, which makes the score
    counterfactually invariant by construction.  ``reference_level``
    defaults to the group coded 0.
    """
    if reference_level is None:
        reference_level = model.reference_level
    code = model.level_code(reference_level)
    X, _ = _check_regressors(model, covariates, np.zeros(np.shape(covariates)[0]))
    return X @ model.struct_coefs + model.sens_coef * code


def naive_score(model: MimicModel, covariates, sensitive) -> np.ndarray:
    """Open-path risk score beta' x + gamma * s using each row's own group."""
    s = as_codes(model, sensitive)
    X, s = _check_regressors(model, covariates, s)
    return X @ model.struct_coefs + model.sens_coef * s


def as_codes(model: MimicModel, sensitive) -> np.ndarray:
    """Map an array of labels or numeric codes onto {0, 1} codes."""
    arr = np.asarray(sensitive)
    if arr.dtype.kind in "fiub":
        return arr.astype(np.float64)
    return np.array([model.level_code(v) for v in arr], dtype=np.float64)


def nearest_rank_percentile(values, percentile: float) -> float:
    """Smallest sample value with at least ``percentile`` percent of the
    sample at or below it."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot take a percentile of an empty sample")
    if not 0.0 < percentile < 100.0:
        raise ValueError("percentile must be strictly between 0 and 100")
    rank = math.ceil(percentile * values.size / 100.0)
    return float(np.sort(values)[rank - 1])


def decide(scores, percentile: float, reference_scores=None):
    """Threshold scores at the nearest-rank percentile of a reference set.

    Returns ``(decisions, threshold_value)``; a decision is 1 exactly when
    the score is strictly greater than the threshold.  The reference set
    (training scores) defaults to ``scores`` itself.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("scores must be nonempty")
    ref = scores if reference_scores is None else reference_scores
    threshold = nearest_rank_percentile(ref, percentile)
    return (scores > threshold).astype(np.int64), threshold


def factor_score(model: MimicModel, data) -> np.ndarray:
    """Posterior mean of the latent variable given indicators, covariates
    and group (regression factor scores); diagnostic use only."""
    Y, X, s = _extract_arrays(model, data)
    lam, psi = model.loadings, model.latent_var
    sigma = _cond_cov(lam, psi, model.resid_vars)
    try:
        c, low = cho_factor(sigma, lower=True)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("posterior covariance is singular") from None
    m = X @ model.struct_coefs + model.sens_coef * s
    mu = (
        model.intercepts[None, :]
        + m[:, None] * lam[None, :]
        + s[:, None] * model.dif_offsets[None, :]
    )
    weights = psi * cho_solve((c, low), lam)
    return m + (Y - mu) @ weights


@dataclass(frozen=True)
class ScoreSet:
    """Per-row fair and naive scores plus threshold decisions."""

    row_ids: tuple
    fair: np.ndarray
    naive: np.ndarray
    decision: np.ndarray
    threshold_value: float
    threshold_percentile: float
    reference_level: str
    decided_on: str = "fair"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row_id", "fair_score", "naive_score", "decision"])
            for rid, f, nv, d in zip(self.row_ids, self.fair, self.naive, self.decision):
                writer.writerow([rid, repr(float(f)), repr(float(nv)), int(d)])

    def summary_dict(self) -> dict:
        return {
            "threshold_value": self.threshold_value,
            "threshold_percentile": self.threshold_percentile,
            "reference_level": self.reference_level,
            "decided_on": self.decided_on,
            "n": len(self.row_ids),
            "n_selected": int(self.decision.sum()),
        }


def score_dataset(
    model: MimicModel,
    data,
    percentile: float = 55.0,
    reference_level=None,
    reference_scores=None,
    decided_on: str = "fair",
) -> ScoreSet:
    """Score every row of a dataset and apply the percentile decision rule.

    ``reference_scores`` (training-set scores) define the threshold; they
    default to the scores of ``data`` itself.  Decisions are taken on the
    fair score unless ``decided_on="naive"``.
    """
    if decided_on not in ("fair", "naive"):
        raise ValueError("decided_on must be 'fair' or 'naive'")
    if reference_level is None:
        reference_level = model.reference_level
    X = data.covariate_matrix(model.covariate_names)
    fair = fair_score(model, X, reference_level)
    naive = naive_score(model, X, data.sensitive_codes())
    chosen = fair if decided_on == "fair" else naive
    decisions, threshold = decide(chosen, percentile, reference_scores)
    return ScoreSet(
        row_ids=data.row_ids(),
        fair=fair,
        naive=naive,
        decision=decisions,
        threshold_value=threshold,
        threshold_percentile=float(percentile),
        reference_level=str(reference_level),
        decided_on=decided_on,
    )
