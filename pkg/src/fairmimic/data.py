"""Dataset ingestion, transforms, splitting, and the synthetic generator.

A :class:`Dataset` is a column-major table in which every column carries a
role: ``indicator`` (error-prone proxy of the latent target), ``covariate``,
``sensitive`` (exactly one, binary), ``id`` or ``ignore``.  Indicator and
covariate columns are float64; the sensitive and id columns are kept as the
string labels read from disk so that CSV round trips are exact.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .exceptions import DataValidationError
from .model import MimicModel

ROLES = ("indicator", "covariate", "sensitive", "id", "ignore")

_NUMERIC_ROLES = ("indicator", "covariate")


@dataclass(frozen=True)
class Dataset:
    """Column-role-tagged table.

    ``values`` maps column name to a numpy array: float64 for indicator and
    covariate columns, ``str`` arrays for sensitive/id/ignore columns.
    ``sensitive_coding`` maps the two sensitive labels to {0, 1}.
    """

    column_order: tuple
    roles: dict
    values: dict
    sensitive_coding: dict
    log_scale: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "column_order", tuple(self.column_order))
        object.__setattr__(self, "log_scale", frozenset(self.log_scale))
        _validate_dataset(self)

    @property
    def n(self) -> int:
        return len(next(iter(self.values.values())))

    @property
    def indicator_names(self):
        return tuple(c for c in self.column_order if self.roles[c] == "indicator")

    @property
    def covariate_names(self):
        return tuple(c for c in self.column_order if self.roles[c] == "covariate")

    @property
    def sensitive_name(self) -> str:
        return next(c for c in self.column_order if self.roles[c] == "sensitive")

    @property
    def id_name(self):
        for c in self.column_order:
            if self.roles[c] == "id":
                return c
        return None

    def column(self, name: str) -> np.ndarray:
        return self.values[name]

    def indicator_matrix(self, names=None) -> np.ndarray:
        names = self.indicator_names if names is None else tuple(names)
        self._require(names, "indicator")
        return np.column_stack([self.values[c] for c in names])

    def covariate_matrix(self, names=None) -> np.ndarray:
        names = self.covariate_names if names is None else tuple(names)
        self._require(names, "covariate")
        if not names:
            return np.empty((self.n, 0))
        return np.column_stack([self.values[c] for c in names])

    def _require(self, names, role):
        for c in names:
            if self.roles.get(c) != role:
                raise DataValidationError(f"column {c!r} is not a {role} column")

    def sensitive_labels(self) -> np.ndarray:
        return self.values[self.sensitive_name]

    def sensitive_codes(self) -> np.ndarray:
        coding = self.sensitive_coding
        return np.array([coding[lbl] for lbl in self.sensitive_labels()], dtype=np.float64)

    def row_ids(self) -> tuple:
        if self.id_name is not None:
            return tuple(self.values[self.id_name])
        return tuple(str(i) for i in range(self.n))

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(
            column_order=self.column_order,
            roles=dict(self.roles),
            values={c: v[indices].copy() for c, v in self.values.items()},
            sensitive_coding=dict(self.sensitive_coding),
            log_scale=self.log_scale,
        )

    def replace_columns(self, new_values: dict, log_scale=None) -> "Dataset":
        values = {c: (new_values[c] if c in new_values else v) for c, v in self.values.items()}
        return Dataset(
            column_order=self.column_order,
            roles=dict(self.roles),
            values=values,
            sensitive_coding=dict(self.sensitive_coding),
            log_scale=self.log_scale if log_scale is None else log_scale,
        )

    def fingerprint(self) -> str:
        """SHA-256 over a canonical text serialization of the table and its
        role metadata; used to check that two fits saw the same data."""
        h = hashlib.sha256()
        meta = {
            "columns": list(self.column_order),
            "roles": {c: self.roles[c] for c in self.column_order},
            "coding": dict(sorted(self.sensitive_coding.items())),
            "log_scale": sorted(self.log_scale),
        }
        h.update(json.dumps(meta, sort_keys=True).encode())
        for c in self.column_order:
            col = self.values[c]
            if col.dtype == np.float64:
                h.update(col.tobytes())
            else:
                h.update("\x1f".join(str(v) for v in col).encode())
        return h.hexdigest()


def _validate_dataset(ds: Dataset):
    if set(ds.roles) != set(ds.column_order):
        raise DataValidationError("roles must cover exactly the table columns")
    for c, r in ds.roles.items():
        if r not in ROLES:
            raise DataValidationError(f"unknown role {r!r} for column {c!r}")
    lengths = {len(v) for v in ds.values.values()}
    if len(lengths) != 1:
        raise DataValidationError("all columns must have the same length")
    sens = [c for c in ds.column_order if ds.roles[c] == "sensitive"]
    if len(sens) != 1:
        raise DataValidationError(f"need exactly one sensitive column, got {len(sens)}")
    if len(ds.indicator_names) < 2:
        raise DataValidationError(
            "a measurement model needs at least 2 indicator columns"
        )
    labels = set(ds.values[sens[0]])
    if labels != set(ds.sensitive_coding):
        missing = labels - set(ds.sensitive_coding)
        if missing:
            raise DataValidationError(
                f"sensitive labels without a code: {sorted(missing)}"
            )
    if sorted(ds.sensitive_coding.values()) != [0, 1]:
        raise DataValidationError("sensitive_coding must map two levels to {0, 1}")
    for c in ds.column_order:
        if ds.roles[c] in _NUMERIC_ROLES:
            col = ds.values[c]
            if col.dtype != np.float64:
                raise DataValidationError(f"column {c!r} must be float64")
            if not np.all(np.isfinite(col)):
                raise DataValidationError(f"column {c!r} has non-finite values")


# ---------------------------------------------------------------------------
# CSV in/out
# ---------------------------------------------------------------------------


def load_csv(path, role_config: dict) -> Dataset:
    """Read a headered CSV into a validated :class:`Dataset`.

    ``role_config`` is a mapping with a required ``"roles"`` entry
    (column name -> role) and optional ``"sensitive_coding"`` and
    ``"log_scale"`` entries.  Every column in the file must be assigned a
    role.  Rows with missing cells are rejected: the error names the first
    offending row and column and reports how many rows are affected.
    """
    roles = dict(role_config["roles"])
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file, header row required") from None
        rows = list(reader)

    unknown = set(roles) - set(header)
    if unknown:
        raise DataValidationError(f"role_config names unknown columns: {sorted(unknown)}")
    unassigned = set(header) - set(roles)
    if unassigned:
        raise DataValidationError(f"columns without a role: {sorted(unassigned)}")

    n = len(rows)
    bad = [i for i, row in enumerate(rows) if len(row) != len(header) or "" in row]
    if bad:
        i = bad[0]
        row = rows[i]
        if len(row) != len(header):
            detail = f"row {i + 2} has {len(row)} fields, expected {len(header)}"
        else:
            col = header[row.index("")]
            detail = f"row {i + 2}, column {col!r} is empty"
        raise DataValidationError(
            f"{path}: {detail}; {len(bad)} of {n} rows have missing values"
        )

    values = {}
    for j, name in enumerate(header):
        raw = [row[j] for row in rows]
        if roles[name] in _NUMERIC_ROLES:
            try:
                values[name] = np.array([float(v) for v in raw], dtype=np.float64)
            except ValueError:
                offender = next(v for v in raw if not _is_float(v))
                raise DataValidationError(
                    f"{path}: column {name!r} has non-numeric cell {offender!r}"
                ) from None
        else:
            values[name] = np.array(raw, dtype=object)

    sens_cols = [c for c in header if roles[c] == "sensitive"]
    if len(sens_cols) != 1:
        raise DataValidationError(f"need exactly one sensitive column, got {len(sens_cols)}")
    labels = sorted(set(values[sens_cols[0]]))
    if len(labels) != 2:
        raise DataValidationError(
            f"sensitive column {sens_cols[0]!r} must have exactly 2 levels, got {labels}"
        )
    coding = role_config.get("sensitive_coding")
    if coding is None:
        coding = {labels[0]: 0, labels[1]: 1}
    coding = {str(k): int(v) for k, v in coding.items()}

    return Dataset(
        column_order=tuple(header),
        roles=roles,
        values=values,
        sensitive_coding=coding,
        log_scale=frozenset(role_config.get("log_scale", ())),
    )


def _is_float(v: str) -> bool:
    try:
        float(v)
        return True
    except ValueError:
        return False


def write_csv(data: Dataset, path) -> None:
    """Write the dataset as RFC-4180 CSV; floats use shortest round-trip
    formatting so that load_csv reproduces them bit-exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(data.column_order)
        cols = []
        for c in data.column_order:
            v = data.values[c]
            if v.dtype == np.float64:
                cols.append([repr(float(x)) for x in v])
            else:
                cols.append([str(x) for x in v])
        for row in zip(*cols):
            writer.writerow(row)


def role_config_of(data: Dataset) -> dict:
    return {
        "roles": {c: data.roles[c] for c in data.column_order},
        "sensitive_coding": dict(data.sensitive_coding),
        "log_scale": sorted(data.log_scale),
    }


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransformRecord:
    """Frozen transform statistics, fitted on the training split and reused
    verbatim on any later split (no leakage of test statistics)."""

    log1p: tuple
    standardize: dict  # column -> (mean, std)

    def apply(self, data: Dataset) -> Dataset:
        missing = [c for c in (*self.log1p, *self.standardize) if c not in data.values]
        if missing:
            raise DataValidationError(f"transform record names absent columns: {missing}")
        new = {}
        for c in self.log1p:
            col = data.values[c]
            if np.any(col < 0):
                raise DataValidationError(f"column {c!r} has negative values, cannot log1p")
            new[c] = np.log1p(col)
        for c, (mean, std) in self.standardize.items():
            base = new.get(c, data.values[c])
            new[c] = (base - mean) / std
        flags = data.log_scale | {c for c in self.log1p if data.roles[c] == "indicator"}
        return data.replace_columns(new, log_scale=flags)

    def to_dict(self) -> dict:
        return {
            "log1p": list(self.log1p),
            "standardize": {c: {"mean": m, "std": s} for c, (m, s) in self.standardize.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformRecord":
        return cls(
            log1p=tuple(d.get("log1p", ())),
            standardize={
                c: (v["mean"], v["std"]) for c, v in d.get("standardize", {}).items()
            },
        )


def transform(data: Dataset, log1p=(), standardize=()):
    """Apply ln(1+x) and standardization, recording the statistics.

    Returns ``(transformed, record)``.  Standardization statistics are
    computed on ``data`` after any log1p step; apply ``record`` to a test
    split instead of calling transform on it.
    """
    log1p = tuple(log1p)
    standardize = tuple(standardize)
    for c in log1p + standardize:
        if data.roles.get(c) not in _NUMERIC_ROLES:
            raise DataValidationError(f"cannot transform non-numeric column {c!r}")
    stats = {}
    logged = {}
    for c in log1p:
        col = data.values[c]
        if np.any(col < 0):
            raise DataValidationError(f"column {c!r} has negative values, cannot log1p")
        logged[c] = np.log1p(col)
    for c in standardize:
        col = logged.get(c, data.values[c])
        mean = float(col.mean())
        std = float(col.std(ddof=0))
        if std == 0.0:
            raise DataValidationError(f"column {c!r} is constant, cannot standardize")
        stats[c] = (mean, std)
    record = TransformRecord(log1p=log1p, standardize=stats)
    return record.apply(data), record


# ---------------------------------------------------------------------------
# Train/test split
# ---------------------------------------------------------------------------


def split(data: Dataset, train_frac: float, seed: int):
    """Seeded disjoint row partition into (train, test)."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must be strictly between 0 and 1")
    n = data.n
    # floor of frac*n; the nudge keeps products like 0.7*n from rounding
    # down one row when the float product lands just below an integer
    k = int(train_frac * n + 1e-9)
    if k == 0 or k == n:
        raise ValueError(f"split of {n} rows at {train_frac} leaves an empty part")
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:k])
    test_idx = np.sort(perm[k:])
    return data.subset(train_idx), data.subset(test_idx)


# ---------------------------------------------------------------------------
# Synthetic data generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimSpec:
    """Specification for the synthetic-data harness.

    The generating process matches the MIMIC model: group membership is
    Bernoulli(group_prob), covariates are standard normal, the latent is the
    structural equation plus N(0, psi) noise, and indicators add loadings,
    dif offsets and N(0, theta_j) noise.

    Two optional realism knobs (both default to "off") extend the base
    process for fairness-audit studies:

    * ``group_shift``: per-covariate mean shift added for rows with group
      code 1, inducing the covariate/group correlation seen in observational
      data.
    * ``cross_loadings``: p x q matrix of direct covariate-to-indicator
      effects bypassing the latent variable (proxy-idiosyncratic structure).
    """

    n: int
    model: MimicModel
    group_prob: float
    seed: int
    group_shift: np.ndarray | None = None
    cross_loadings: np.ndarray | None = None
    sensitive_column: str = "group"
    id_column: str = "id"

    def __post_init__(self):
        if not 0.0 < self.group_prob < 1.0:
            raise ValueError("group_prob must be strictly between 0 and 1")
        if self.n <= 0:
            raise ValueError("n must be positive")
        if self.group_shift is not None:
            gs = np.asarray(self.group_shift, dtype=np.float64)
            if gs.shape != (self.model.n_covariates,):
                raise ValueError("group_shift must have one entry per covariate")
            object.__setattr__(self, "group_shift", gs)
        if self.cross_loadings is not None:
            cl = np.asarray(self.cross_loadings, dtype=np.float64)
            if cl.shape != (self.model.n_indicators, self.model.n_covariates):
                raise ValueError("cross_loadings must be p x q")
            object.__setattr__(self, "cross_loadings", cl)

    def to_dict(self) -> dict:
        d = {
            "schema_version": 1,
            "n": self.n,
            "group_prob": self.group_prob,
            "seed": self.seed,
            "model": self.model.to_dict(),
            "sensitive_column": self.sensitive_column,
            "id_column": self.id_column,
        }
        if self.group_shift is not None:
            d["group_shift"] = self.group_shift.tolist()
        if self.cross_loadings is not None:
            d["cross_loadings"] = self.cross_loadings.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimSpec":
        return cls(
            n=d["n"],
            model=MimicModel.from_dict(d["model"]),
            group_prob=d["group_prob"],
            seed=d["seed"],
            group_shift=d.get("group_shift"),
            cross_loadings=d.get("cross_loadings"),
            sensitive_column=d.get("sensitive_column", "group"),
            id_column=d.get("id_column", "id"),
        )


def _gauss(rng, size):
    # Inverse-CDF transform of 53-bit uniforms from PCG64.  The uniforms are
    # (k + 0.5) * 2^-53 with k drawn as integers, so they lie strictly inside
    # (0, 1) and the output stream is reproducible bit-for-bit from the seed.
    u = (rng.integers(0, 1 << 53, size=size).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def simulate(spec: SimSpec):
    """Draw a dataset from the generating model.

    Returns ``(dataset, latent)`` with the true latent value per row.  Draw
    order is fixed (group, covariates, latent noise, indicator noise) so a
    given seed always produces the identical table.
    """
    model = spec.model
    n, p, q = spec.n, model.n_indicators, model.n_covariates
    rng = np.random.default_rng(spec.seed)

    s = (rng.random(n) < spec.group_prob).astype(np.float64)
    X = _gauss(rng, (n, q))
    if spec.group_shift is not None:
        X = X + s[:, None] * spec.group_shift[None, :]
    zeta = _gauss(rng, n) * np.sqrt(model.latent_var)
    eps = _gauss(rng, (n, p)) * np.sqrt(model.resid_vars)[None, :]

    eta = X @ model.struct_coefs + model.sens_coef * s + zeta
    Y = (
        model.intercepts[None, :]
        + eta[:, None] * model.loadings[None, :]
        + s[:, None] * model.dif_offsets[None, :]
        + eps
    )
    if spec.cross_loadings is not None:
        Y = Y + X @ spec.cross_loadings.T

    code_to_label = {v: k for k, v in model.sensitive_coding.items()}
    labels = np.array([code_to_label[int(v)] for v in s], dtype=object)

    column_order = (
        (spec.id_column, spec.sensitive_column)
        + tuple(model.covariate_names)
        + tuple(model.indicator_names)
    )
    roles = {spec.id_column: "id", spec.sensitive_column: "sensitive"}
    roles.update({c: "covariate" for c in model.covariate_names})
    roles.update({c: "indicator" for c in model.indicator_names})
    values = {
        spec.id_column: np.array([str(i) for i in range(n)], dtype=object),
        spec.sensitive_column: labels,
    }
    for j, c in enumerate(model.covariate_names):
        values[c] = X[:, j].copy()
    for j, c in enumerate(model.indicator_names):
        values[c] = Y[:, j].copy()

    dataset = Dataset(
        column_order=column_order,
        roles=roles,
        values=values,
        sensitive_coding=dict(model.sensitive_coding),
    )
    return dataset, eta
