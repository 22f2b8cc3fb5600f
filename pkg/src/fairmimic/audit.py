"""Fairness diagnostics: selection-rate parity, conditional parity curves
over score percentiles, positive predictive value parity, and the
counterfactual-invariance check."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import MimicModel
from .score import fair_score, naive_score


def _group_labels(sensitive):
    arr = np.asarray(sensitive)
    return np.array([str(v) for v in arr], dtype=object)


@dataclass(frozen=True)
class ParityReport:
    """Per-group selection rates and the largest pairwise gap."""

    rate_by_group: dict
    parity_gap: float
    n_by_group: dict

    def to_dict(self) -> dict:
        return {
            "rate_by_group": dict(self.rate_by_group),
            "parity_gap": self.parity_gap,
            "n_by_group": dict(self.n_by_group),
        }


def statistical_parity(decisions, sensitive, levels=None) -> ParityReport:
    """Selection rate P(d=1 | group) per group and the max pairwise gap."""
    d = np.asarray(decisions)
    if d.size == 0:
        raise ValueError("decisions must be nonempty")
    if not np.isin(d, (0, 1)).all():
        raise ValueError("decisions must be binary 0/1")
    groups = _group_labels(sensitive)
    if groups.shape[0] != d.shape[0]:
        raise ValueError("decisions and sensitive must have equal length")
    levels = sorted(set(groups)) if levels is None else [str(v) for v in levels]
    rates, counts = {}, {}
    for g in levels:
        mask = groups == g
        n_g = int(mask.sum())
        if n_g == 0:
            raise ValueError(f"group {g!r} has zero rows")
        counts[g] = n_g
        rates[g] = float(d[mask].mean())
    vals = list(rates.values())
    return ParityReport(
        rate_by_group=rates,
        parity_gap=float(max(vals) - min(vals)),
        n_by_group=counts,
    )


@dataclass(frozen=True)
class CurveBin:
    percentile_low: float
    percentile_high: float
    group: str
    mean: float | None
    count: int


@dataclass(frozen=True)
class ConditionalParityCurve:
    """Mean proxy value per score-percentile bin and group.

    ``gap_by_bin`` holds, per bin, the cross-group difference of mean proxy
    values (second group minus first for two groups, max minus min
    otherwise); ``None`` marks bins where some group is empty.
    ``mean_abs_gap`` is the count-weighted mean absolute per-bin gap, the
    scalar parity summary.
    """

    bins: tuple
    gap_by_bin: tuple
    groups: tuple
    n_bins: int
    mean_abs_gap: float

    def to_rows(self):
        return [
            (b.percentile_low, b.percentile_high, b.group, b.mean, b.count)
            for b in self.bins
        ]

    def to_dict(self) -> dict:
        return {
            "groups": list(self.groups),
            "n_bins": self.n_bins,
            "mean_abs_gap": self.mean_abs_gap,
            "gap_by_bin": list(self.gap_by_bin),
            "bins": [
                {
                    "percentile_low": b.percentile_low,
                    "percentile_high": b.percentile_high,
                    "group": b.group,
                    "mean": b.mean,
                    "count": b.count,
                }
                for b in self.bins
            ],
        }

    def write_csv(self, path, score_type=None) -> None:
        """Tidy CSV (bin bounds, group, mean, count) for external plotting."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["percentile_low", "percentile_high", "group", "mean_proxy", "count"]
            if score_type is not None:
                header = ["score_type"] + header
            writer.writerow(header)
            for row in self.to_rows():
                out = list(row)
                out[3] = "" if out[3] is None else repr(float(out[3]))
                if score_type is not None:
                    out = [score_type] + out
                writer.writerow(out)


def conditional_parity_curve(scores, sensitive, proxy_values, n_bins: int = 10) -> ConditionalParityCurve:
    """Bucket rows into equal-width score-percentile bins and compare the
    mean proxy value across groups within each bin.

    Percentile rank is the fraction of scores at or below a row's score, so
    the bins partition (0, 100].  Empty group-bins are reported with count 0
    and a null mean; bins where any group is empty contribute no gap.
    """
    scores = np.asarray(scores, dtype=np.float64)
    proxy = np.asarray(proxy_values, dtype=np.float64)
    groups = _group_labels(sensitive)
    n = scores.shape[0]
    if n == 0:
        raise ValueError("scores must be nonempty")
    if proxy.shape[0] != n or groups.shape[0] != n:
        raise ValueError("scores, sensitive and proxy_values must have equal length")
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")

    # count of scores <= own score; ties share the upper count
    order = np.sort(scores)
    counts_leq = np.searchsorted(order, scores, side="right")
    bin_idx = (counts_leq * n_bins + n - 1) // n - 1  # ceil(count * k / n) - 1

    levels = sorted(set(groups))
    edges = [(100.0 * b / n_bins, 100.0 * (b + 1) / n_bins) for b in range(n_bins)]
    bins = []
    gaps = []
    weights = []
    for b in range(n_bins):
        in_bin = bin_idx == b
        means = {}
        for g in levels:
            sel = in_bin & (groups == g)
            cnt = int(sel.sum())
            mean = float(proxy[sel].mean()) if cnt else None
            means[g] = (mean, cnt)
            bins.append(
                CurveBin(
                    percentile_low=edges[b][0],
                    percentile_high=edges[b][1],
                    group=g,
                    mean=mean,
                    count=cnt,
                )
            )
        if any(m is None for m, _ in means.values()):
            gaps.append(None)
            continue
        vals = [m for m, _ in means.values()]
        if len(levels) == 2:
            gap = vals[1] - vals[0]
        else:
            gap = max(vals) - min(vals)
        gaps.append(float(gap))
        weights.append((b, sum(c for _, c in means.values())))

    if weights:
        total = sum(w for _, w in weights)
        mean_abs = sum(abs(gaps[b]) * w for b, w in weights) / total
    else:
        mean_abs = float("nan")
    return ConditionalParityCurve(
        bins=tuple(bins),
        gap_by_bin=tuple(gaps),
        groups=tuple(levels),
        n_bins=n_bins,
        mean_abs_gap=float(mean_abs),
    )


@dataclass(frozen=True)
class PpvReport:
    """Positive predictive value per group; groups without positive
    decisions are flagged rather than silently dropped."""

    ppv_by_group: dict
    parity_gap: float | None
    n_positive_by_group: dict
    undefined_groups: tuple

    def to_dict(self) -> dict:
        return {
            "ppv_by_group": dict(self.ppv_by_group),
            "parity_gap": self.parity_gap,
            "n_positive_by_group": dict(self.n_positive_by_group),
            "undefined_groups": list(self.undefined_groups),
        }


def predictive_parity(decisions, outcome_binary, sensitive) -> PpvReport:
    """P(outcome=1 | d=1, group) per group and the max pairwise gap.

    The caller supplies the binarized outcome (for a continuous latent there
    is no intrinsic positive class)."""
    d = np.asarray(decisions)
    y = np.asarray(outcome_binary)
    groups = _group_labels(sensitive)
    if not (d.shape == y.shape == groups.shape):
        raise ValueError("decisions, outcome and sensitive must have equal length")
    if not np.isin(d, (0, 1)).all() or not np.isin(y, (0, 1)).all():
        raise ValueError("decisions and outcome must be binary 0/1")
    ppv, npos = {}, {}
    undefined = []
    for g in sorted(set(groups)):
        sel = (groups == g) & (d == 1)
        npos[g] = int(sel.sum())
        if npos[g] == 0:
            ppv[g] = None
            undefined.append(g)
        else:
            ppv[g] = float(y[sel].mean())
    defined = [v for v in ppv.values() if v is not None]
    gap = float(max(defined) - min(defined)) if len(defined) >= 2 else None
    return PpvReport(
        ppv_by_group=ppv,
        parity_gap=gap,
        n_positive_by_group=npos,
        undefined_groups=tuple(undefined),
    )


def counterfactual_check(model: MimicModel, covariates, reference_level=None, score: str = "fair") -> float:
    """Largest per-row score discrepancy across interventions on the group.

    Scores every row once per declared sensitive level, with the level
    forced on all rows, and returns max_i (max_level - min_level).  For the
    fair score this is exactly 0; for the naive score it equals |gamma|
    times the coding span.
    """
    if score not in ("fair", "naive"):
        raise ValueError("score must be 'fair' or 'naive'")
    per_level = []
    for level in sorted(model.sensitive_coding):
        if score == "fair":
            per_level.append(fair_score(model, covariates, reference_level))
        else:
            forced = np.full(np.shape(covariates)[0], model.level_code(level))
            per_level.append(naive_score(model, covariates, forced))
    stacked = np.stack(per_level)
    return float(np.max(stacked.max(axis=0) - stacked.min(axis=0)))
