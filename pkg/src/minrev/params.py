"""Model parameters, validation, and the one-factor noise covariance.

The model evolves a C-component series kappa by

    kappa[t+1, c] - kappa[t, c] = mu[c] + zeta[c] * (kappa[t, c] - kappa[t-1, c])
                                  + sigma[c] * Z[t+1, c]
                                  + lam[c] * (min_c kappa[t, c] - kappa[t, c])

with Gaussian innovations Z[t, c] = rho[c] * W[t, 0] + sqrt(1 - rho[c]^2) * W[t, c]
built from i.i.d. standard normal factors W, so Corr(Z_c, Z_d) = rho_c * rho_d.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from minrev.errors import DomainError

__all__ = [
    "ModelParams",
    "SharingScheme",
    "State",
    "validate_params",
    "noise_covariance",
    "effective_spread_s",
    "n_free_parameters",
    "params_to_json",
    "params_from_json",
]


def _as_vector(value, C: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(C, float(arr))
    if arr.shape != (C,):
        raise DomainError(f"{name} must be a scalar or length-{C} vector, got shape {arr.shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SharingScheme:
    """Which coefficients are common to all populations.

    sigma and rho are always population-specific; only mu, zeta, and lambda
    may be shared.  ``lambda_fixed_zero`` pins lambda to 0 for every
    population and removes it from the parameter count.
    """

    mu_shared: bool = True
    lambda_shared: bool = True
    zeta_shared: bool = True
    lambda_fixed_zero: bool = False

    def to_dict(self) -> dict:
        return {
            "mu_shared": self.mu_shared,
            "lambda_shared": self.lambda_shared,
            "zeta_shared": self.zeta_shared,
            "lambda_fixed_zero": self.lambda_fixed_zero,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SharingScheme":
        return cls(**{k: bool(d[k]) for k in ("mu_shared", "lambda_shared", "zeta_shared", "lambda_fixed_zero") if k in d})


@dataclass(frozen=True)
class ModelParams:
    """Per-population coefficients (mu, zeta, lambda, sigma, rho).

    ``lam`` is the minimum-reversion strength (``lambda`` in serialized
    form; the Python keyword forces the shorter attribute name).  Scalars
    broadcast to all populations; pass ``C`` explicitly when every
    coefficient is scalar.  Instances are immutable.
    """

    mu: np.ndarray
    zeta: np.ndarray
    lam: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    sharing: SharingScheme = field(default_factory=SharingScheme)
    C: int | None = None

    def __post_init__(self):
        vectors = [np.atleast_1d(np.asarray(v, dtype=float)) for v in (self.mu, self.zeta, self.lam, self.sigma, self.rho)]
        C = max(v.shape[0] for v in vectors) if self.C is None else int(self.C)
        object.__setattr__(self, "C", C)
        for name, value in zip(("mu", "zeta", "lam", "sigma", "rho"), (self.mu, self.zeta, self.lam, self.sigma, self.rho)):
            object.__setattr__(self, name, _as_vector(value, C, name))


@dataclass(frozen=True)
class State:
    """Current and previous kappa vectors plus the time index.

    ``kappa_prev`` feeds the AR(1)-on-differences term; for a process
    started at rest use :meth:`at_rest` so that term vanishes on the
    first step.
    """

    kappa: np.ndarray
    kappa_prev: np.ndarray
    t: int = 0

    def __post_init__(self):
        kappa = np.asarray(self.kappa, dtype=float).copy()
        prev = np.asarray(self.kappa_prev, dtype=float).copy()
        if kappa.ndim != 1 or prev.shape != kappa.shape:
            raise DomainError(f"state vectors must be 1-D with equal length, got {kappa.shape} and {prev.shape}")
        if not (np.all(np.isfinite(kappa)) and np.all(np.isfinite(prev))):
            raise DomainError("state vectors must be finite")
        kappa.setflags(write=False)
        prev.setflags(write=False)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "kappa_prev", prev)

    @classmethod
    def at_rest(cls, kappa, t: int = 0) -> "State":
        kappa = np.asarray(kappa, dtype=float)
        return cls(kappa=kappa, kappa_prev=kappa, t=t)

    @property
    def C(self) -> int:
        return self.kappa.shape[0]


def validate_params(params: ModelParams, *, estimation_box: bool = False) -> ModelParams:
    """Check parameter domains, returning ``params`` unchanged if valid.

    The strict domains are lambda in [0, 1), zeta in [0, 1), sigma > 0,
    rho in (-1, 1), and at least two populations.  ``estimation_box=True``
    widens zeta to (-1, 1): fitted series regularly show negative
    autoregression on differences, and any |zeta| < 1 is dynamically
    stable, so estimation and simulation of fitted models use the wider
    box.

    Raises
    ------
    DomainError
        Naming the offending field and bound.
    """
    if params.C < 2:
        raise DomainError(f"model needs at least 2 populations, got C={params.C}")
    for name in ("mu", "zeta", "lam", "sigma", "rho"):
        if not np.all(np.isfinite(getattr(params, name))):
            raise DomainError(f"{name} must be finite")
    if np.any(params.lam < 0.0) or np.any(params.lam >= 1.0):
        raise DomainError("lambda must lie in [0,1)")
    zeta_lo = -1.0 if estimation_box else 0.0
    if np.any(params.zeta < zeta_lo) or np.any(params.zeta >= 1.0) or (estimation_box and np.any(params.zeta <= -1.0)):
        box = "(-1,1)" if estimation_box else "[0,1)"
        raise DomainError(f"zeta must lie in {box}")
    if np.any(params.sigma <= 0.0):
        raise DomainError("sigma must be positive")
    if np.any(np.abs(params.rho) >= 1.0):
        raise DomainError("rho must lie in (-1,1)")
    if params.sharing.lambda_fixed_zero and np.any(params.lam != 0.0):
        raise DomainError("sharing scheme fixes lambda to zero but lambda is nonzero")
    return params


def noise_covariance(params: ModelParams) -> np.ndarray:
    """Covariance of the per-step innovations sigma_c * Z_c.

    Sigma_ii = sigma_i^2 and Sigma_ij = sigma_i sigma_j rho_i rho_j for
    i != j.  The one-factor structure plus a strictly positive diagonal
    residual (|rho_c| < 1) makes the matrix symmetric positive definite.
    """
    sr = params.sigma * params.rho
    cov = np.outer(sr, sr)
    np.fill_diagonal(cov, params.sigma**2)
    return cov


def effective_spread_s(sigma1: float, sigma2: float, rho: float) -> float:
    """Standard deviation of sigma1*Z1 - sigma2*Z2 for unit normals with Corr(Z1, Z2) = rho.

    ``rho`` is the pairwise correlation of the two noise terms, i.e.
    rho_1 * rho_2 under the one-factor construction.
    """
    if sigma1 <= 0.0 or sigma2 <= 0.0:
        raise DomainError("sigma must be positive")
    if not -1.0 < rho < 1.0:
        raise DomainError("rho must lie in (-1,1)")
    return float(np.sqrt(sigma1**2 + sigma2**2 - 2.0 * rho * sigma1 * sigma2))


def n_free_parameters(sharing: SharingScheme, C: int) -> int:
    """Parameter count K entering the BIC.

    K = (#free mu) + (#free zeta) + (#free lambda) + C sigmas + C rhos,
    where a shared coefficient counts once and a lambda fixed at zero
    counts zero.
    """
    if C < 2:
        raise DomainError(f"C must be >= 2, got {C}")
    k = 1 if sharing.mu_shared else C
    k += 1 if sharing.zeta_shared else C
    if not sharing.lambda_fixed_zero:
        k += 1 if sharing.lambda_shared else C
    return k + 2 * C


def params_to_json(params: ModelParams, indent: int | None = 2) -> str:
    """Serialize parameters to a JSON document with explicit field names."""
    doc = {
        "mu": params.mu.tolist(),
        "zeta": params.zeta.tolist(),
        "lambda": params.lam.tolist(),
        "sigma": params.sigma.tolist(),
        "rho": params.rho.tolist(),
        "sharing": params.sharing.to_dict(),
    }
    return json.dumps(doc, indent=indent)


def params_from_json(text: str) -> ModelParams:
    """Parse parameters serialized by :func:`params_to_json`."""
    doc = json.loads(text)
    missing = [k for k in ("mu", "zeta", "lambda", "sigma", "rho") if k not in doc]
    if missing:
        raise DomainError(f"parameter document is missing fields: {', '.join(missing)}")
    sharing = SharingScheme.from_dict(doc.get("sharing", {}))
    return ModelParams(
        mu=doc["mu"],
        zeta=doc["zeta"],
        lam=doc["lambda"],
        sigma=doc["sigma"],
        rho=doc["rho"],
        sharing=sharing,
    )
