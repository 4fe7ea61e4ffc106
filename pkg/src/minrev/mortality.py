"""Poisson common-age-effect mortality model.

Death counts D[x, t, c] are Poisson with mean E[x, t, c] * exp(alpha_x
+ beta_x * kappa[t, c]): age effects are common to all populations, so the
period effects kappa are comparable across populations.  The
parameterization is only identified up to an affine rescaling; imposing
alpha = 0 and beta = 1 at a reference age makes kappa[t, c] the fitted log
mortality rate at that age.

Fitting is by cyclic Newton sweeps on the Poisson score (alpha block, kappa
block, beta block), each guarded by step halving so the log-likelihood
never decreases, until the relative deviance change drops below tolerance.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from minrev.errors import ConvergenceError, DataError, DegenerateError, DomainError, ShapeError
from minrev.estimate import KappaPanel

__all__ = [
    "MortalityDataset",
    "CAEParams",
    "poisson_log_likelihood",
    "deviance",
    "fit_cae",
    "apply_identification",
    "fitted_rates",
    "fitted_log_rates",
    "extract_period_effects",
]


@dataclass(frozen=True)
class MortalityDataset:
    """Death counts and central exposures over age x year x population.

    HMD splits deaths across Lexis triangles, so fractional counts are
    accepted.  Cells with zero exposure are excluded from the likelihood
    (zero-death cells are kept; they still carry information).
    """

    deaths: np.ndarray
    exposures: np.ndarray
    ages: np.ndarray
    years: np.ndarray
    populations: tuple

    def __post_init__(self):
        deaths = np.asarray(self.deaths, dtype=float).copy()
        exposures = np.asarray(self.exposures, dtype=float).copy()
        ages = np.asarray(self.ages, dtype=int).copy()
        years = np.asarray(self.years, dtype=int).copy()
        populations = tuple(str(p) for p in self.populations)
        if deaths.shape != exposures.shape:
            raise ShapeError(f"deaths {deaths.shape} and exposures {exposures.shape} differ")
        if deaths.ndim != 3:
            raise ShapeError(f"expected (ages, years, populations) arrays, got shape {deaths.shape}")
        if deaths.shape != (ages.size, years.size, len(populations)):
            raise ShapeError("label lengths do not match the data arrays")
        if np.any(deaths < 0) or np.any(exposures < 0) or not np.all(np.isfinite(deaths)) or not np.all(np.isfinite(exposures)):
            raise DataError("deaths and exposures must be finite and non-negative")
        if np.any((exposures == 0) & (deaths > 0)):
            bad = int(((exposures == 0) & (deaths > 0)).sum())
            warnings.warn(f"{bad} cells have deaths but zero exposure; they are excluded from the likelihood")
        for arr in (deaths, exposures, ages, years):
            arr.setflags(write=False)
        object.__setattr__(self, "deaths", deaths)
        object.__setattr__(self, "exposures", exposures)
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "populations", populations)

    @property
    def mask(self) -> np.ndarray:
        """True for cells that enter the likelihood (positive exposure)."""
        return self.exposures > 0


@dataclass(frozen=True)
class CAEParams:
    """Age effects alpha, beta over ages and period effects kappa over (year, population)."""

    alpha: np.ndarray
    beta: np.ndarray
    kappa: np.ndarray
    x_r: int
    ages: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float).copy()
        beta = np.asarray(self.beta, dtype=float).copy()
        kappa = np.asarray(self.kappa, dtype=float).copy()
        ages = np.asarray(self.ages, dtype=int).copy()
        if alpha.shape != beta.shape or alpha.ndim != 1 or kappa.ndim != 2:
            raise ShapeError("alpha/beta must be 1-D of equal length and kappa 2-D")
        if ages.shape != alpha.shape:
            raise ShapeError("ages must match alpha/beta length")
        if int(self.x_r) not in ages:
            raise DomainError(f"reference age {self.x_r} not among the modeled ages")
        for arr in (alpha, beta, kappa, ages):
            arr.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "x_r", int(self.x_r))

    @property
    def reference_index(self) -> int:
        return int(np.flatnonzero(self.ages == self.x_r)[0])

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(
            {
                "alpha": self.alpha.tolist(),
                "beta": self.beta.tolist(),
                "kappa": self.kappa.tolist(),
                "x_r": self.x_r,
                "ages": self.ages.tolist(),
            },
            indent=indent,
        )

    @classmethod
    def from_json(cls, text: str) -> "CAEParams":
        doc = json.loads(text)
        return cls(alpha=doc["alpha"], beta=doc["beta"], kappa=doc["kappa"], x_r=doc["x_r"], ages=doc["ages"])


def fitted_log_rates(params: CAEParams) -> np.ndarray:
    """log rate array alpha_x + beta_x * kappa[t, c], shape (ages, years, populations)."""
    return params.alpha[:, None, None] + params.beta[:, None, None] * params.kappa[None, :, :]


def fitted_rates(params: CAEParams) -> np.ndarray:
    """Hazard rates exp(alpha_x + beta_x * kappa[t, c]); strictly positive."""
    return np.exp(fitted_log_rates(params))


def _check_shapes(params: CAEParams, data: MortalityDataset) -> None:
    expected = (params.alpha.size, params.kappa.shape[0], params.kappa.shape[1])
    if data.deaths.shape != expected:
        raise ShapeError(f"data shape {data.deaths.shape} does not match parameter shape {expected}")


def poisson_log_likelihood(params: CAEParams, data: MortalityDataset) -> float:
    """Poisson log-likelihood over positive-exposure cells, dropping the log D! constant.

    Per cell: D * (log E + alpha_x + beta_x kappa) - E * exp(alpha_x + beta_x kappa).
    """
    _check_shapes(params, data)
    eta = fitted_log_rates(params)
    mask = data.mask
    E = data.exposures[mask]
    D = data.deaths[mask]
    eta = eta[mask]
    with np.errstate(divide="ignore", invalid="ignore"):
        d_term = np.where(D > 0, D * np.log(E, where=E > 0, out=np.zeros_like(E)), 0.0)
    return float((d_term + D * eta - E * np.exp(eta)).sum())


def deviance(params: CAEParams, data: MortalityDataset) -> float:
    """Poisson deviance against the saturated model (rate D/E per cell)."""
    _check_shapes(params, data)
    mask = data.mask
    E = data.exposures[mask]
    D = data.deaths[mask]
    fit = E * np.exp(fitted_log_rates(params)[mask])
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.where(D > 0, D * np.log(np.where(D > 0, D, 1.0) / fit), 0.0)
    return float(2.0 * (log_ratio - (D - fit)).sum())


def apply_identification(params: CAEParams) -> CAEParams:
    """Rescale to alpha = 0 and beta = 1 at the reference age, preserving all fitted rates.

    With K1 = alpha[x_r] and K2 = beta[x_r] the transformation is
    alpha - (K1/K2) beta, beta / K2, K1 + K2 * kappa.
    """
    i = params.reference_index
    k1 = float(params.alpha[i])
    k2 = float(params.beta[i])
    if k2 == 0.0:
        raise DegenerateError(f"beta at reference age {params.x_r} is zero; cannot identify")
    alpha = params.alpha - (k1 / k2) * params.beta
    beta = params.beta / k2
    kappa = k1 + k2 * params.kappa
    # Pin the constrained entries bit-exactly; float division can leave 1 ulp.
    alpha = alpha.copy()
    beta = beta.copy()
    alpha[i] = 0.0
    beta[i] = 1.0
    return replace(params, alpha=alpha, beta=beta, kappa=kappa)


def _guarded_update(data, params, field, delta, llh_old, max_halvings=30):
    """Apply a Newton block step, halving until the likelihood does not decrease.

    The comparison allows a few ulps of slack: near the optimum the Newton
    contraction steps move the likelihood by less than its floating-point
    resolution, and they must still be applied for the score to keep
    shrinking.  A step that decreases the likelihood by more than that is
    halved, and dropped entirely if halving never helps.
    """
    slack = 8.0 * np.finfo(float).eps * max(1.0, abs(llh_old))
    for _ in range(max_halvings):
        candidate = replace(params, **{field: getattr(params, field) + delta})
        llh_new = poisson_log_likelihood(candidate, data)
        if llh_new >= llh_old - slack:
            return candidate, llh_new
        delta = 0.5 * delta
    return params, llh_old


def fit_cae(data: MortalityDataset, x_r: int = 70, tol: float = 1e-10,
            max_iter: int = 5000, return_history: bool = False):
    """Maximum likelihood fit of the common-age-effect model.

    Every age needs at least one positive-exposure cell, and likewise every
    (year, population) column.  Cyclic Newton sweeps update the alpha block,
    the kappa block, and the beta block in turn (each parameter's score and
    curvature touch disjoint cells, so a block updates jointly); sweeps stop
    when the relative deviance change falls below ``tol``.  The returned
    parameters are identified (alpha = 0, beta = 1 at ``x_r``).

    With ``return_history`` a list of per-sweep log-likelihood values is
    returned alongside the parameters.
    """
    mask = data.mask
    if not np.all(mask.any(axis=(1, 2))):
        bad = data.ages[~mask.any(axis=(1, 2))]
        raise DataError(f"ages with no positive-exposure cells: {bad.tolist()}")
    if not np.all(mask.any(axis=0)):
        raise DataError("some (year, population) columns have no positive-exposure cells")
    if int(x_r) not in data.ages:
        raise DomainError(f"reference age {x_r} not among the data ages {data.ages.min()}..{data.ages.max()}")

    E = np.where(mask, data.exposures, 0.0)
    D = np.where(mask, data.deaths, 0.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        crude = D.sum(axis=(1, 2)) / np.maximum(E.sum(axis=(1, 2)), 1e-300)
    alpha = np.log(np.maximum(crude, 1e-8))
    params = CAEParams(
        alpha=alpha,
        beta=np.ones(data.ages.size),
        kappa=np.zeros((data.years.size, len(data.populations))),
        x_r=int(x_r),
        ages=data.ages,
    )

    llh = poisson_log_likelihood(params, data)
    history = [llh]
    dev_old = deviance(params, data)
    converged = False
    for _ in range(max_iter):
        # alpha block: score_x = sum(D - fit), curvature_x = -sum(fit) over (t, c)
        fit = E * np.exp(fitted_log_rates(params))
        delta = (D - fit).sum(axis=(1, 2)) / np.maximum(fit.sum(axis=(1, 2)), 1e-300)
        params, llh = _guarded_update(data, params, "alpha", delta, llh)

        # kappa block: score_tc = sum_x beta (D - fit), curvature_tc = -sum_x beta^2 fit
        fit = E * np.exp(fitted_log_rates(params))
        beta_col = params.beta[:, None, None]
        num = (beta_col * (D - fit)).sum(axis=0)
        den = np.maximum((beta_col**2 * fit).sum(axis=0), 1e-300)
        params, llh = _guarded_update(data, params, "kappa", num / den, llh)

        # beta block: score_x = sum_tc kappa (D - fit), curvature_x = -sum_tc kappa^2 fit
        fit = E * np.exp(fitted_log_rates(params))
        kap = params.kappa[None, :, :]
        num = (kap * (D - fit)).sum(axis=(1, 2))
        den = np.maximum((kap**2 * fit).sum(axis=(1, 2)), 1e-300)
        params, llh = _guarded_update(data, params, "beta", num / den, llh)

        history.append(llh)
        dev_new = deviance(params, data)
        if abs(dev_new - dev_old) <= tol * max(1.0, abs(dev_old)):
            converged = True
            break
        dev_old = dev_new
    if not converged:
        raise ConvergenceError(
            f"common-age-effect fit did not converge in {max_iter} sweeps", trace=history
        )
    identified = apply_identification(params)
    return (identified, history) if return_history else identified


def extract_period_effects(params: CAEParams, years, populations) -> KappaPanel:
    """Package the fitted period effects as a panel for the time-series fit."""
    return KappaPanel(values=params.kappa, years=years, populations=populations)
