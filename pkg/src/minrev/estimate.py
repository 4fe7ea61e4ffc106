"""Gaussian maximum likelihood for the minimum-reversion time-series model.

Observations are a (T, C) panel of kappa values.  The T-2 increment
vectors that admit both the AR term and the reversion regressor carry the
likelihood: with eta[t, c] = mu_c + zeta_c * dkappa[t, c]
+ lam_c * (m_t - kappa[t, c]) and Sigma the one-factor innovation
covariance,

    logL = -((T-2) * (log|Sigma| + C log 2 pi) + sum_t r_t' Sigma^(-1) r_t) / 2

where r_(t+1) = dkappa[t+1] - eta[t].  The BIC penalty uses
n = C * T, the total number of panel observations.

zeta is optimized over (-1, 1) rather than the simulation domain [0, 1):
fitted mortality panels routinely need negative autoregression on
differences.  rho enters Sigma only through pairwise products, so the rho
vector is identified up to a global sign flip; fitted vectors are
normalized to a nonnegative sum.  For C = 2 only the product rho_1 rho_2
is identified at all.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.special import expit, logit

from minrev.errors import ConvergenceError, DataError, DegenerateError, DomainError
from minrev.params import (
    ModelParams,
    SharingScheme,
    n_free_parameters,
    noise_covariance,
    validate_params,
)

__all__ = [
    "KappaPanel",
    "FitConfig",
    "FitResult",
    "ModelComparison",
    "Ar1PairCheck",
    "conditional_mean",
    "log_likelihood",
    "log_likelihood_gradient",
    "bic",
    "fit_mle",
    "compare_models",
    "pairwise_ar1_check",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KappaPanel:
    """Complete (T, C) panel of kappa observations with year and population labels."""

    values: np.ndarray
    years: np.ndarray
    populations: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        years = np.asarray(self.years, dtype=int).copy()
        populations = tuple(str(p) for p in self.populations)
        if values.ndim != 2:
            raise DataError(f"panel values must be 2-D (years x populations), got shape {values.shape}")
        T, C = values.shape
        if T < 3:
            raise DataError(f"panel needs at least 3 years, got {T}")
        if years.shape != (T,) or len(populations) != C:
            raise DataError("label lengths do not match the value matrix")
        if np.any(np.diff(years) != 1):
            raise DataError("years must be consecutive")
        if not np.all(np.isfinite(values)):
            raise DataError("panel contains missing or non-finite entries")
        values.setflags(write=False)
        years.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "populations", populations)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def C(self) -> int:
        return self.values.shape[1]

    def to_csv(self, fileobj) -> None:
        """Long-form CSV (year, population, kappa); floats written with repr for exact round trips."""
        writer = csv.writer(fileobj)
        writer.writerow(["year", "population", "kappa"])
        for i, year in enumerate(self.years):
            for j, pop in enumerate(self.populations):
                writer.writerow([int(year), pop, repr(float(self.values[i, j]))])


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings: sharing scheme, relative logL tolerance, multistarts."""

    sharing: SharingScheme = field(default_factory=SharingScheme)
    tol: float = 1e-8
    max_iter: int = 500
    multistarts: int = 5
    seed: int = 0
    raise_on_failure: bool = False

    def __post_init__(self):
        if self.tol <= 0.0:
            raise DomainError("tolerance must be positive")
        if self.max_iter < 1 or self.multistarts < 1:
            raise DomainError("max_iter and multistarts must be >= 1")


@dataclass(frozen=True)
class FitResult:
    """Fitted parameters plus goodness-of-fit and convergence diagnostics."""

    params: ModelParams
    logL: float
    K: int
    BIC: float
    n: int
    converged: bool
    iterations: int
    grad_norm: float
    start_logLs: tuple

    def to_dict(self) -> dict:
        return {
            "params": {
                "mu": self.params.mu.tolist(),
                "zeta": self.params.zeta.tolist(),
                "lambda": self.params.lam.tolist(),
                "sigma": self.params.sigma.tolist(),
                "rho": self.params.rho.tolist(),
                "sharing": self.params.sharing.to_dict(),
            },
            "logL": self.logL,
            "K": self.K,
            "BIC": self.BIC,
            "n": self.n,
            "converged": self.converged,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "start_logLs": list(self.start_logLs),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _residual_terms(values: np.ndarray, params: ModelParams):
    """Residuals r_(t+1) = dk[t+1] - eta[t] plus the eta regressors."""
    dk = np.diff(values, axis=0)
    m = values.min(axis=1)
    lag_dk = dk[:-1]
    gap = m[1:-1, None] - values[1:-1]
    eta = params.mu + params.zeta * lag_dk + params.lam * gap
    resid = dk[1:] - eta
    return resid, lag_dk, gap


def _panel_values(panel) -> np.ndarray:
    values = panel.values if isinstance(panel, KappaPanel) else np.asarray(panel, dtype=float)
    if values.ndim != 2 or values.shape[0] < 3:
        raise DataError(f"need a (T>=3, C) value matrix, got shape {values.shape}")
    return values


def conditional_mean(panel, params: ModelParams, t: int) -> np.ndarray:
    """One-step conditional mean of the next increment vector, at year label ``t``.

    ``t`` must admit a difference, i.e. lie strictly after the first panel year.
    """
    values = _panel_values(panel)
    if isinstance(panel, KappaPanel):
        idx = np.flatnonzero(panel.years == t)
        if idx.size == 0:
            raise IndexError(f"year {t} not in panel")
        j = int(idx[0])
    else:
        j = int(t)
        if j < 0 or j >= values.shape[0]:
            raise IndexError(f"row {t} out of range")
    if j < 1:
        raise IndexError(f"t={t} has no preceding observation for the difference term")
    dk_t = values[j] - values[j - 1]
    m_t = values[j].min()
    return params.mu + params.zeta * dk_t + params.lam * (m_t - values[j])


def log_likelihood(panel, params: ModelParams) -> float:
    """Exact Gaussian log-likelihood of the T-2 increment vectors."""
    validate_params(params, estimation_box=True)
    values = _panel_values(panel)
    resid, _, _ = _residual_terms(values, params)
    N, C = resid.shape
    cov = noise_covariance(params)
    cho = cho_factor(cov, lower=True)
    logdet = 2.0 * np.log(np.diag(cho[0])).sum()
    quad = float(np.sum(cho_solve(cho, resid.T) * resid.T))
    return -0.5 * (N * (logdet + C * _LOG_2PI) + quad)


def log_likelihood_gradient(panel, params: ModelParams):
    """Log-likelihood and its gradient with respect to the raw per-population coefficients.

    Returns ``(logL, grads)`` where ``grads`` maps each of
    mu/zeta/lam/sigma/rho to a length-C array.
    """
    validate_params(params, estimation_box=True)
    values = _panel_values(panel)
    resid, lag_dk, gap = _residual_terms(values, params)
    N, C = resid.shape
    cov = noise_covariance(params)
    cho = cho_factor(cov, lower=True)
    logdet = 2.0 * np.log(np.diag(cho[0])).sum()
    Q = cho_solve(cho, resid.T).T
    quad = float(np.sum(Q * resid))
    logL = -0.5 * (N * (logdet + C * _LOG_2PI) + quad)

    g_mu = Q.sum(axis=0)
    g_zeta = (Q * lag_dk).sum(axis=0)
    g_lam = (Q * gap).sum(axis=0)

    S = resid.T @ resid
    cov_inv = cho_solve(cho, np.eye(C))
    G = 0.5 * (cov_inv @ S @ cov_inv - N * cov_inv)
    sr = params.sigma * params.rho
    off = G @ sr - np.diag(G) * sr  # sum_{j != c} G[c, j] sigma_j rho_j
    g_sigma = 2.0 * np.diag(G) * params.sigma + 2.0 * params.rho * off
    g_rho = 2.0 * params.sigma * off
    return logL, {"mu": g_mu, "zeta": g_zeta, "lam": g_lam, "sigma": g_sigma, "rho": g_rho}


def bic(logL: float, K: int, n: int) -> float:
    """Bayesian information criterion K log(n) - 2 logL; lower is better."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if K < 0:
        raise DomainError(f"K must be >= 0, got {K}")
    return K * math.log(n) - 2.0 * logL


# ---------------------------------------------------------------------------
# Parameter packing: maps between raw coefficients and the unconstrained
# optimizer vector.  Layout: [mu block][zeta block][lam block][log sigma][atanh rho].

_ZETA_BOUND = 8.0   # tanh(8) keeps zeta, rho strictly inside (-1, 1)
_LAM_BOUNDS = (-16.0, 8.0)
_SIG_BOUNDS = (-23.0, 11.0)


class _Packing:
    def __init__(self, sharing: SharingScheme, C: int):
        self.sharing = sharing
        self.C = C
        sizes = [
            1 if sharing.mu_shared else C,
            1 if sharing.zeta_shared else C,
            0 if sharing.lambda_fixed_zero else (1 if sharing.lambda_shared else C),
            C,
            C,
        ]
        edges = np.concatenate([[0], np.cumsum(sizes)])
        self.sl = [slice(int(edges[i]), int(edges[i + 1])) for i in range(5)]
        self.size = int(edges[-1])

    def bounds(self) -> list:
        b: list = [(None, None)] * (self.sl[0].stop - self.sl[0].start)
        b += [(-_ZETA_BOUND, _ZETA_BOUND)] * (self.sl[1].stop - self.sl[1].start)
        b += [_LAM_BOUNDS] * (self.sl[2].stop - self.sl[2].start)
        b += [_SIG_BOUNDS] * self.C
        b += [(-_ZETA_BOUND, _ZETA_BOUND)] * self.C
        return b

    def _expand(self, block: np.ndarray) -> np.ndarray:
        return np.full(self.C, block[0]) if block.size == 1 else block

    def unpack(self, u: np.ndarray, sharing: SharingScheme) -> ModelParams:
        mu = self._expand(u[self.sl[0]])
        zeta = np.tanh(self._expand(u[self.sl[1]]))
        if sharing.lambda_fixed_zero:
            lam = np.zeros(self.C)
        else:
            lam = expit(self._expand(u[self.sl[2]]))
        sigma = np.exp(u[self.sl[3]])
        rho = np.tanh(u[self.sl[4]])
        return ModelParams(mu=mu, zeta=zeta, lam=lam, sigma=sigma, rho=rho, sharing=sharing)

    def pack(self, mu, zeta, lam, sigma, rho) -> np.ndarray:
        def head(block, shared):
            block = np.atleast_1d(np.asarray(block, dtype=float))
            return block[:1] if shared else np.broadcast_to(block, (self.C,))

        parts = [
            head(mu, self.sharing.mu_shared),
            np.arctanh(head(zeta, self.sharing.zeta_shared)),
        ]
        if not self.sharing.lambda_fixed_zero:
            parts.append(logit(head(lam, self.sharing.lambda_shared)))
        parts += [
            np.log(np.broadcast_to(np.atleast_1d(sigma), (self.C,))),
            np.arctanh(np.broadcast_to(np.atleast_1d(rho), (self.C,))),
        ]
        u = np.concatenate(parts)
        lo = np.array([b[0] if b[0] is not None else -np.inf for b in self.bounds()])
        hi = np.array([b[1] if b[1] is not None else np.inf for b in self.bounds()])
        return np.clip(u, lo, hi)

    def fold_gradient(self, u: np.ndarray, params: ModelParams, grads: dict) -> np.ndarray:
        out = np.empty(self.size)

        def reduce(block_slice, g):
            n = block_slice.stop - block_slice.start
            out[block_slice] = g.sum() if n == 1 else g

        reduce(self.sl[0], grads["mu"])
        reduce(self.sl[1], grads["zeta"] * (1.0 - params.zeta**2))
        if not self.sharing.lambda_fixed_zero:
            reduce(self.sl[2], grads["lam"] * params.lam * (1.0 - params.lam))
        out[self.sl[3]] = grads["sigma"] * params.sigma
        out[self.sl[4]] = grads["rho"] * (1.0 - params.rho**2)
        return out


def _moment_start(values: np.ndarray, packing: _Packing) -> np.ndarray:
    """Method-of-moments initial point in the transformed space."""
    dk = np.diff(values, axis=0)
    C = values.shape[1]
    mu0 = dk.mean(axis=0)
    sigma0 = np.maximum(dk.std(axis=0, ddof=1), 1e-8)
    centered = dk - mu0
    denom = (centered**2).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ac1 = np.where(denom > 0, (centered[1:] * dk[:-1]).sum(axis=0) / np.where(denom > 0, denom, 1.0), 0.0)
    zeta0 = np.clip(np.nan_to_num(ac1), -0.8, 0.8)
    if packing.sharing.mu_shared:
        mu0 = np.full(C, mu0.mean())
    if packing.sharing.zeta_shared:
        zeta0 = np.full(C, zeta0.mean())
    try:
        corr = np.corrcoef(dk.T)
        ev1 = float(np.linalg.eigvalsh(np.nan_to_num(corr))[-1])
        share = (ev1 - 1.0) / max(C - 1, 1)
    except np.linalg.LinAlgError:
        share = 0.25
    rho0 = np.full(C, math.sqrt(float(np.clip(share, 1e-4, 0.9))))
    return packing.pack(mu0, zeta0, 0.05, sigma0, rho0)


def fit_mle(panel, config: FitConfig | None = None) -> FitResult:
    """Maximize the Gaussian log-likelihood under the sharing scheme.

    Quasi-Newton (L-BFGS-B) with the analytic gradient on a smooth
    reparameterization (log sigma, logistic lambda, atanh zeta and rho),
    started from method-of-moments values plus deterministically jittered
    multistarts.  Returns the best optimum; with
    ``config.raise_on_failure`` a :class:`ConvergenceError` is raised when
    no start converges, otherwise the best point is returned with
    ``converged=False``.
    """
    config = config or FitConfig()
    values = _panel_values(panel)
    T, C = values.shape
    packing = _Packing(config.sharing, C)
    u0 = _moment_start(values, packing)

    def objective(u):
        params = packing.unpack(u, config.sharing)
        logL, grads = log_likelihood_gradient(values, params)
        return -logL, -packing.fold_gradient(u, params, grads)

    jitter_scale = np.zeros(packing.size)
    dk_scale = float(np.median(np.diff(values, axis=0).std(axis=0, ddof=1))) or 1.0
    jitter_scale[packing.sl[0]] = 0.5 * dk_scale
    jitter_scale[packing.sl[1]] = 0.5
    jitter_scale[packing.sl[2]] = 1.0
    jitter_scale[packing.sl[3]] = 0.3
    jitter_scale[packing.sl[4]] = 0.5

    best = None
    start_logLs = []
    for i in range(config.multistarts):
        if i == 0:
            u_start = u0
        else:
            rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(i,)))
            u_start = u0 + rng.standard_normal(packing.size) * jitter_scale
            lo = np.array([b[0] if b[0] is not None else -np.inf for b in packing.bounds()])
            hi = np.array([b[1] if b[1] is not None else np.inf for b in packing.bounds()])
            u_start = np.clip(u_start, lo, hi)
        # L-BFGS-B's own relative-reduction test can fire on a stalled line
        # search (the logistic coordinates flatten when saturated), so it
        # runs with a much tighter internal ftol and the configured
        # tolerance governs the restart loop instead.
        res = None
        for _ in range(4):
            prev = None if res is None else res.fun
            res = minimize(
                objective, u_start if res is None else res.x, jac=True,
                method="L-BFGS-B", bounds=packing.bounds(),
                options={"ftol": config.tol * 1e-4, "gtol": 1e-10, "maxiter": config.max_iter},
            )
            if prev is not None and prev - res.fun <= config.tol * max(1.0, abs(res.fun)):
                break
        start_logLs.append(-float(res.fun))
        if best is None or res.fun < best.fun:
            best = res
    assert best is not None
    if not best.success and config.raise_on_failure:
        raise ConvergenceError(f"no start converged: {best.message}", trace=start_logLs)

    params = packing.unpack(best.x, config.sharing)
    if params.rho.sum() < 0.0:  # sign convention; Sigma only sees pairwise products
        params = replace(params, rho=-params.rho)
    logL = -float(best.fun)
    K = n_free_parameters(config.sharing, C)
    n = C * T
    return FitResult(
        params=params,
        logL=logL,
        K=K,
        BIC=bic(logL, K, n),
        n=n,
        converged=bool(best.success),
        iterations=int(best.nit),
        grad_norm=float(np.max(np.abs(best.jac))),
        start_logLs=tuple(start_logLs),
    )


@dataclass(frozen=True)
class ModelComparison:
    """Side-by-side fits with and without the reversion term."""

    labels: tuple
    fits: tuple
    preferred: str

    _COLUMNS = ("model", "logL", "K", "BIC", "mu_hat", "lambda_hat", "zeta_hat", "sigma_bar", "rho_bar")

    @staticmethod
    def _row(label: str, fit: FitResult) -> dict:
        p = fit.params
        return {
            "model": label,
            "logL": fit.logL,
            "K": fit.K,
            "BIC": fit.BIC,
            # Shared coefficients are reported directly; unshared ones as means.
            "mu_hat": float(p.mu[0] if p.sharing.mu_shared else p.mu.mean()),
            "lambda_hat": float(p.lam[0] if p.sharing.lambda_shared or p.sharing.lambda_fixed_zero else p.lam.mean()),
            "zeta_hat": float(p.zeta[0] if p.sharing.zeta_shared else p.zeta.mean()),
            "sigma_bar": float(np.sqrt(np.mean(p.sigma**2))),
            "rho_bar": float(p.rho.mean()),
        }

    def rows(self) -> list:
        return [self._row(label, fit) for label, fit in zip(self.labels, self.fits)]

    def to_csv(self, fileobj) -> None:
        writer = csv.DictWriter(fileobj, fieldnames=self._COLUMNS)
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})

    def to_dict(self) -> dict:
        return {"rows": self.rows(), "preferred": self.preferred}

    def fit(self, label: str) -> FitResult:
        return self.fits[self.labels.index(label)]


def compare_models(panel, config: FitConfig | None = None) -> ModelComparison:
    """Fit the nested (lambda = 0) and lambda-free models under identical sharing.

    When the configured scheme already fixes lambda to zero only that
    single fit is produced.
    """
    config = config or FitConfig()
    schemes = [("lambda=0", replace(config.sharing, lambda_fixed_zero=True))]
    if not config.sharing.lambda_fixed_zero:
        schemes.append(("lambda_free", replace(config.sharing, lambda_fixed_zero=False)))
    labels = []
    fits = []
    for label, sharing in schemes:
        labels.append(label)
        fits.append(fit_mle(panel, replace(config, sharing=sharing)))
    preferred = labels[int(np.argmin([f.BIC for f in fits]))]
    return ModelComparison(labels=tuple(labels), fits=tuple(fits), preferred=preferred)


@dataclass(frozen=True)
class Ar1PairCheck:
    """Least-squares AR(1) coefficients of kappa differences against a reference population."""

    populations: tuple
    reference: str
    coefficients: np.ndarray
    standard_errors: np.ndarray


def pairwise_ar1_check(panel, c_star: int = 0) -> Ar1PairCheck:
    """AR(1) coefficient of kappa[:, c] - kappa[:, c_star] for each c != c_star.

    Under a common reversion strength lam (and no autoregression) each
    difference series is AR(1) with coefficient 1 - lam; with lam = 0 the
    differences are random walks (unit root).  The regression includes an
    intercept; results are invariant under adding a constant to both series.
    """
    values = _panel_values(panel)
    T, C = values.shape
    if not 0 <= c_star < C:
        raise DomainError(f"reference population index {c_star} out of range for C={C}")
    labels = panel.populations if isinstance(panel, KappaPanel) else tuple(f"pop_{c + 1}" for c in range(C))
    coefs = []
    ses = []
    pops = []
    for c in range(C):
        if c == c_star:
            continue
        y = values[:, c] - values[:, c_star]
        if np.ptp(y) == 0.0:
            raise DegenerateError(f"difference series for population {labels[c]} is constant")
        x, resp = y[:-1], y[1:]
        xc = x - x.mean()
        sxx = float(xc @ xc)
        if sxx == 0.0:
            raise DegenerateError(f"lagged difference series for population {labels[c]} is constant")
        slope = float(xc @ resp) / sxx
        fitted = resp.mean() + slope * xc
        dof = x.size - 2
        s2 = float(((resp - fitted) ** 2).sum()) / dof
        coefs.append(slope)
        ses.append(math.sqrt(s2 / sxx))
        pops.append(labels[c])
    return Ar1PairCheck(
        populations=tuple(pops),
        reference=str(labels[c_star]),
        coefficients=np.asarray(coefs),
        standard_errors=np.asarray(ses),
    )
