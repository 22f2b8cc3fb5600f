"""Linear-Gaussian MIMIC measurement model.

A single latent variable is measured by p observed indicators and regressed
on q exogenous covariates plus a binary sensitive attribute:

    eta_i = beta' x_i + gamma * s_i + zeta_i,      zeta_i ~ N(0, psi)
    y_ij  = nu_j + lambda_j * eta_i + delta_j * s_i + eps_ij,
                                                   eps_ij ~ N(0, theta_j)

Conditional on (x_i, s_i) the indicator vector is Gaussian with mean
``nu + lambda * (beta' x_i + gamma * s_i) + delta * s_i`` and covariance
``psi * lambda lambda' + diag(theta)``, identical across rows.  The first
loading is pinned to 1 for identification, so the latent variable carries
the scale of the first indicator.  Residual variances and the latent
variance are optimized on the log scale, which keeps them positive without
constrained optimization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import NotPositiveDefiniteError, SchemaVersionError

MODEL_SCHEMA_VERSION = 1

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MimicModel:
    """Parameter container for the MIMIC model.

    Attributes
    ----------
    loadings : (p,) array
        Indicator loadings lambda; ``loadings[0]`` is always exactly 1 and
        is never a free parameter.
    intercepts : (p,) array
        Indicator intercepts nu, in indicator units.
    struct_coefs : (q,) array
        Structural regression coefficients beta of the latent variable on
        the covariates.
    sens_coef : float
        Structural coefficient gamma of the latent variable on the
        sensitive attribute.
    dif_offsets : (p,) array
        Per-indicator group offsets delta (differential item functioning).
        Entries where ``free_mask`` is False are constrained to exactly 0.
    resid_vars : (p,) array
        Indicator residual variances theta, all strictly positive.
    latent_var : float
        Residual variance psi of the latent variable, strictly positive.
    free_mask : (p,) bool array
        Which dif_offsets entries are free parameters.
    indicator_names, covariate_names : tuple of str
        Column names used to align the model with a dataset.
    sensitive_coding : dict
        Maps sensitive-attribute level labels to the numeric codes
        {0, 1}; the level coded 0 is the reference group.
    """

    loadings: np.ndarray
    intercepts: np.ndarray
    struct_coefs: np.ndarray
    sens_coef: float
    dif_offsets: np.ndarray
    resid_vars: np.ndarray
    latent_var: float
    free_mask: np.ndarray
    indicator_names: tuple
    covariate_names: tuple
    sensitive_coding: dict

    def __post_init__(self):
        arr = lambda v, dt=np.float64: np.array(v, dtype=dt, copy=True)
        object.__setattr__(self, "loadings", arr(self.loadings))
        object.__setattr__(self, "intercepts", arr(self.intercepts))
        object.__setattr__(self, "struct_coefs", arr(self.struct_coefs))
        object.__setattr__(self, "sens_coef", float(self.sens_coef))
        object.__setattr__(self, "dif_offsets", arr(self.dif_offsets))
        object.__setattr__(self, "resid_vars", arr(self.resid_vars))
        object.__setattr__(self, "latent_var", float(self.latent_var))
        object.__setattr__(self, "free_mask", arr(self.free_mask, np.bool_))
        object.__setattr__(self, "indicator_names", tuple(self.indicator_names))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(
            self,
            "sensitive_coding",
            {str(k): int(v) for k, v in self.sensitive_coding.items()},
        )

        p = self.loadings.shape[0]
        q = self.struct_coefs.shape[0]
        if self.loadings.ndim != 1 or p < 2:
            raise ValueError("loadings must be a vector with at least 2 entries")
        for name, vec in (
            ("intercepts", self.intercepts),
            ("dif_offsets", self.dif_offsets),
            ("resid_vars", self.resid_vars),
            ("free_mask", self.free_mask),
        ):
            if vec.shape != (p,):
                raise ValueError(f"{name} must have length {p}, got {vec.shape}")
        if len(self.indicator_names) != p:
            raise ValueError("indicator_names must match the number of loadings")
        if len(self.covariate_names) != q:
            raise ValueError("covariate_names must match struct_coefs")
        if self.loadings[0] != 1.0:
            raise ValueError("loadings[0] must be exactly 1 (identification)")
        if np.any(self.resid_vars <= 0.0):
            raise ValueError("resid_vars must all be strictly positive")
        if self.latent_var <= 0.0:
            raise ValueError("latent_var must be strictly positive")
        if np.any(self.dif_offsets[~self.free_mask] != 0.0):
            raise ValueError("constrained dif_offsets entries must be exactly 0")
        codes = sorted(self.sensitive_coding.values())
        if codes != [0, 1]:
            raise ValueError("sensitive_coding must map exactly two levels to {0, 1}")
        for a in (
            self.loadings,
            self.intercepts,
            self.struct_coefs,
            self.dif_offsets,
            self.resid_vars,
            self.free_mask,
        ):
            a.flags.writeable = False

    @property
    def n_indicators(self):
        return self.loadings.shape[0]

    @property
    def n_covariates(self):
        return self.struct_coefs.shape[0]

    @property
    def reference_level(self):
        """Label of the group coded 0."""
        return next(k for k, v in self.sensitive_coding.items() if v == 0)

    def level_code(self, level) -> float:
        try:
            return float(self.sensitive_coding[str(level)])
        except KeyError:
            raise ValueError(
                f"unknown sensitive level {level!r}; "
                f"declared levels: {sorted(self.sensitive_coding)}"
            ) from None

    def with_values(self, **changes) -> "MimicModel":
        """Return a copy with the given fields replaced."""
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "loadings": self.loadings.tolist(),
            "intercepts": self.intercepts.tolist(),
            "struct_coefs": self.struct_coefs.tolist(),
            "sens_coef": self.sens_coef,
            "dif_offsets": self.dif_offsets.tolist(),
            "resid_vars": self.resid_vars.tolist(),
            "latent_var": self.latent_var,
            "free_mask": [bool(b) for b in self.free_mask],
            "indicator_names": list(self.indicator_names),
            "covariate_names": list(self.covariate_names),
            "sensitive_coding": dict(self.sensitive_coding),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MimicModel":
        version = d.get("schema_version")
        if version != MODEL_SCHEMA_VERSION:
            raise SchemaVersionError(
                f"model schema_version {version!r} is not supported "
                f"(expected {MODEL_SCHEMA_VERSION})"
            )
        return cls(
            loadings=d["loadings"],
            intercepts=d["intercepts"],
            struct_coefs=d["struct_coefs"],
            sens_coef=d["sens_coef"],
            dif_offsets=d["dif_offsets"],
            resid_vars=d["resid_vars"],
            latent_var=d["latent_var"],
            free_mask=d["free_mask"],
            indicator_names=d["indicator_names"],
            covariate_names=d["covariate_names"],
            sensitive_coding=d["sensitive_coding"],
        )


def template(
    indicator_names,
    covariate_names,
    sensitive_coding,
    free_dif=(),
) -> MimicModel:
    """Build a neutral model skeleton (unit loadings and variances, zero
    regression parameters) used as a fit specification.

    ``free_dif`` lists the indicator names whose dif offset is a free
    parameter; all others are constrained to 0.
    """
    indicator_names = tuple(indicator_names)
    p = len(indicator_names)
    q = len(covariate_names)
    unknown = set(free_dif) - set(indicator_names)
    if unknown:
        raise ValueError(f"free_dif names not among indicators: {sorted(unknown)}")
    mask = np.array([name in set(free_dif) for name in indicator_names])
    return MimicModel(
        loadings=np.ones(p),
        intercepts=np.zeros(p),
        struct_coefs=np.zeros(q),
        sens_coef=0.0,
        dif_offsets=np.zeros(p),
        resid_vars=np.ones(p),
        latent_var=1.0,
        free_mask=mask,
        indicator_names=indicator_names,
        covariate_names=tuple(covariate_names),
        sensitive_coding=sensitive_coding,
    )


def save_model(model: MimicModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n")


def load_model(path) -> MimicModel:
    return MimicModel.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Free-parameter vector
#
# Packing order: lambda[1:], nu, beta, gamma, delta[free], log theta, log psi.
# ---------------------------------------------------------------------------


def param_names(model: MimicModel):
    """Names of the free parameters in packing order."""
    ind = model.indicator_names
    names = [f"lambda[{n}]" for n in ind[1:]]
    names += [f"nu[{n}]" for n in ind]
    names += [f"beta[{c}]" for c in model.covariate_names]
    names.append("gamma")
    names += [f"delta[{n}]" for n, free in zip(ind, model.free_mask) if free]
    names += [f"log_theta[{n}]" for n in ind]
    names.append("log_psi")
    return tuple(names)


def n_free_params(model: MimicModel) -> int:
    p = model.n_indicators
    return (p - 1) + p + model.n_covariates + 1 + int(model.free_mask.sum()) + p + 1


def pack(model: MimicModel) -> np.ndarray:
    """Flatten the free parameters into a single vector."""
    return np.concatenate(
        [
            model.loadings[1:],
            model.intercepts,
            model.struct_coefs,
            [model.sens_coef],
            model.dif_offsets[model.free_mask],
            np.log(model.resid_vars),
            [np.log(model.latent_var)],
        ]
    )


def unpack(spec: MimicModel, x: np.ndarray) -> MimicModel:
    """Rebuild a model from a packed free-parameter vector, keeping the
    structure (names, free_mask, coding) of ``spec``."""
    p, q = spec.n_indicators, spec.n_covariates
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n_free_params(spec),):
        raise ValueError(f"expected {n_free_params(spec)} free parameters, got {x.shape}")
    parts = _split_packed(spec, x)
    lam = np.concatenate([[1.0], parts["lam_free"]])
    delta = np.zeros(p)
    delta[spec.free_mask] = parts["delta_free"]
    return spec.with_values(
        loadings=lam,
        intercepts=parts["nu"],
        struct_coefs=parts["beta"],
        sens_coef=float(parts["gamma"]),
        dif_offsets=delta,
        resid_vars=np.exp(parts["log_theta"]),
        latent_var=float(np.exp(parts["log_psi"])),
    )


def _split_packed(spec: MimicModel, x: np.ndarray) -> dict:
    p, q = spec.n_indicators, spec.n_covariates
    k = int(spec.free_mask.sum())
    pos = 0
    out = {}
    out["lam_free"] = x[pos : pos + p - 1]
    pos += p - 1
    out["nu"] = x[pos : pos + p]
    pos += p
    out["beta"] = x[pos : pos + q]
    pos += q
    out["gamma"] = x[pos]
    pos += 1
    out["delta_free"] = x[pos : pos + k]
    pos += k
    out["log_theta"] = x[pos : pos + p]
    pos += p
    out["log_psi"] = x[pos]
    return out


# ---------------------------------------------------------------------------
# Implied moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImpliedMoments:
    """Conditional moments of the indicators given covariates and group.

    ``cond_mean`` is n x p; ``cond_cov`` is the p x p covariance shared by
    every row (the model is homoscedastic conditional on the regressors).
    """

    cond_mean: np.ndarray
    cond_cov: np.ndarray


def _check_regressors(model, covariates, sensitive):
    X = np.asarray(covariates, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if model.n_covariates == 1 else X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != model.n_covariates:
        raise ValueError(
            f"covariates must be n x {model.n_covariates}, got shape {X.shape}"
        )
    s = np.asarray(sensitive, dtype=np.float64).reshape(-1)
    if s.shape[0] != X.shape[0]:
        raise ValueError(
            f"sensitive has {s.shape[0]} rows but covariates have {X.shape[0]}"
        )
    return X, s


def _cond_cov(lam, psi, theta):
    sigma = psi * np.outer(lam, lam)
    sigma[np.diag_indices_from(sigma)] += theta
    return sigma


def _cond_mean(nu, lam, beta, gamma, delta, X, s):
    m = X @ beta + gamma * s
    return nu[None, :] + m[:, None] * lam[None, :] + s[:, None] * delta[None, :]


def implied_moments(model: MimicModel, covariates, sensitive) -> ImpliedMoments:
    """Compute the model-implied conditional mean matrix and covariance.

    Parameters
    ----------
    model : MimicModel
    covariates : (n, q) array
    sensitive : (n,) array of numeric codes (reference group 0, other 1).

    Raises
    ------
    ValueError
        On dimension mismatch.
    NotPositiveDefiniteError
        If the implied covariance fails a Cholesky factorization, which
        signals invalid variance parameters.
    """
    X, s = _check_regressors(model, covariates, sensitive)
    sigma = _cond_cov(model.loadings, model.latent_var, model.resid_vars)
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            "implied indicator covariance is not positive definite"
        ) from None
    mu = _cond_mean(
        model.intercepts,
        model.loadings,
        model.struct_coefs,
        model.sens_coef,
        model.dif_offsets,
        X,
        s,
    )
    return ImpliedMoments(cond_mean=mu, cond_cov=sigma)


# ---------------------------------------------------------------------------
# Log-likelihood and analytic gradient
# ---------------------------------------------------------------------------


def _loglik_terms(lam, nu, beta, gamma, delta, theta, psi, Y, X, s):
    """Shared pieces for the likelihood and its gradient.

    Returns (loglik, R, U, w, Sinv, m) where R are residuals, U = R Sigma^-1,
    w = U lam and m is the structural mean per row.
    """
    n, p = Y.shape
    m = X @ beta + gamma * s
    R = Y - nu[None, :] - m[:, None] * lam[None, :] - s[:, None] * delta[None, :]
    sigma = _cond_cov(lam, psi, theta)
    try:
        c, low = cho_factor(sigma, lower=True)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            "implied indicator covariance is singular"
        ) from None
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    Sinv = cho_solve((c, low), np.eye(p))
    U = R @ Sinv
    quad = float(np.einsum("ij,ij->", R, U))
    ll = -0.5 * (n * (p * LOG_2PI + logdet) + quad)
    return ll, R, U, U @ lam, Sinv, m


def _ll_value(x, spec, Y, X, s):
    parts = _split_packed(spec, x)
    lam = np.concatenate([[1.0], parts["lam_free"]])
    delta = np.zeros(spec.n_indicators)
    delta[spec.free_mask] = parts["delta_free"]
    theta = np.exp(parts["log_theta"])
    psi = float(np.exp(parts["log_psi"]))
    ll, *_ = _loglik_terms(
        lam, parts["nu"], parts["beta"], float(parts["gamma"]), delta, theta, psi, Y, X, s
    )
    return ll


def _ll_and_grad(x, spec, Y, X, s):
    """Log-likelihood and gradient with respect to the packed parameters."""
    n, p = Y.shape
    parts = _split_packed(spec, x)
    lam = np.concatenate([[1.0], parts["lam_free"]])
    delta = np.zeros(p)
    delta[spec.free_mask] = parts["delta_free"]
    theta = np.exp(parts["log_theta"])
    psi = float(np.exp(parts["log_psi"]))
    ll, R, U, w, Sinv, m = _loglik_terms(
        lam, parts["nu"], parts["beta"], float(parts["gamma"]), delta, theta, psi, Y, X, s
    )
    sinv_lam = Sinv @ lam
    # Loadings enter both the mean (lam * m) and the covariance (psi lam lam').
    g_lam = U.T @ (m + psi * w) - n * psi * sinv_lam
    g_nu = U.sum(axis=0)
    g_beta = X.T @ w
    g_gamma = float(s @ w)
    g_delta = U.T @ s
    g_theta = 0.5 * (U * U).sum(axis=0) - 0.5 * n * np.diag(Sinv)
    g_psi = 0.5 * float(w @ w) - 0.5 * n * float(lam @ sinv_lam)
    grad = np.concatenate(
        [
            g_lam[1:],
            g_nu,
            g_beta,
            [g_gamma],
            g_delta[spec.free_mask],
            g_theta * theta,  # chain rule to the log scale
            [g_psi * psi],
        ]
    )
    return ll, grad


def _extract_arrays(model: MimicModel, data):
    Y = data.indicator_matrix(model.indicator_names)
    X = data.covariate_matrix(model.covariate_names)
    s = data.sensitive_codes()
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(X)) and np.all(np.isfinite(s))):
        raise ValueError("data contains missing or non-finite values")
    return Y, X, s


def log_likelihood(model: MimicModel, data) -> float:
    """Conditional Gaussian log-likelihood of the indicators, summed over
    rows; covariates and the sensitive attribute are treated as fixed."""
    Y, X, s = _extract_arrays(model, data)
    ll, *_ = _loglik_terms(
        model.loadings,
        model.intercepts,
        model.struct_coefs,
        model.sens_coef,
        model.dif_offsets,
        model.resid_vars,
        model.latent_var,
        Y,
        X,
        s,
    )
    return ll


def log_likelihood_grad(model: MimicModel, data) -> np.ndarray:
    """Gradient of :func:`log_likelihood` with respect to the packed free
    parameters (variances on the log scale); see :func:`param_names` for
    the coordinate order."""
    Y, X, s = _extract_arrays(model, data)
    _, grad = _ll_and_grad(pack(model), model, Y, X, s)
    return grad
