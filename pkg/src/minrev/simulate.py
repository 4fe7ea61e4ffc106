"""Exact simulation of the minimum-reversion dynamics.

Paths are generated with a counter-based seeding scheme: the generator for
path ``p`` is derived purely from (base seed, p), so ensembles are
bit-identical for a fixed seed regardless of block partitioning or worker
count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from minrev import backend
from minrev.errors import DomainError, UnsupportedError
from minrev.gaussian import norm_logcdf
from minrev.params import ModelParams, State, validate_params

__all__ = [
    "SimConfig",
    "PathEnsemble",
    "ExtremalPath",
    "draw_noise",
    "step",
    "simulate_paths",
    "extremal_path",
    "min_decrease_probability",
    "ensemble_summary",
    "ensemble_to_csv",
]

# Noise blocks are capped at ~64 MB so arbitrarily long horizons stream.
_BLOCK_TARGET_BYTES = 64 * 2**20


@dataclass(frozen=True)
class SimConfig:
    """Simulation run description: horizon (steps), path count, seed, start."""

    horizon: int
    n_paths: int
    seed: int
    initial: State

    def __post_init__(self):
        if self.horizon < 0:
            raise DomainError(f"horizon must be >= 0, got {self.horizon}")
        if self.n_paths < 1:
            raise DomainError(f"n_paths must be >= 1, got {self.n_paths}")


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated trajectories, shape (n_paths, horizon+1, C), with provenance."""

    values: np.ndarray
    config: SimConfig
    params: ModelParams

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def C(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class ExtremalPath:
    """Componentwise minimum/maximum series with 1-based argmin/argmax indices."""

    m: np.ndarray
    M: np.ndarray
    argmin: np.ndarray
    argmax: np.ndarray


def path_seed_sequence(seed, path_index: int) -> np.random.SeedSequence:
    """Counter-based per-path seed: a pure function of (seed, path index)."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + (path_index,))
    return np.random.SeedSequence(entropy=seed, spawn_key=(path_index,))


def draw_noise(params: ModelParams, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Draw correlated innovation vectors Z (one-factor Gaussian structure).

    Returns shape (C,) for ``n=None``, else (n, C).  Each component is
    standard normal marginally with Corr(Z_c, Z_d) = rho_c * rho_d.
    """
    size = 1 if n is None else n
    w = rng.standard_normal((size, params.C + 1))
    z = params.rho * w[:, :1] + np.sqrt(1.0 - params.rho**2) * w[:, 1:]
    return z[0] if n is None else z


def step(state: State, params: ModelParams, z: np.ndarray) -> State:
    """Advance one time step given the innovation vector ``z``."""
    z = np.asarray(z, dtype=float)
    if z.shape != (state.C,):
        raise DomainError(f"z must have shape ({state.C},), got {z.shape}")
    k = state.kappa
    m = k.min()
    k_next = k + params.mu + params.zeta * (k - state.kappa_prev) + params.sigma * z + params.lam * (m - k)
    return State(kappa=k_next, kappa_prev=k, t=state.t + 1)


def _block_size(horizon: int, C: int, n_paths: int) -> int:
    per_path = max(1, horizon * (C + 1) * 8)
    return int(np.clip(_BLOCK_TARGET_BYTES // per_path, 16, max(16, n_paths)))


def _make_noise_block(seed, paths: range, horizon: int, C: int) -> np.ndarray:
    w = np.empty((len(paths), horizon, C + 1))
    for i, p in enumerate(paths):
        rng = np.random.default_rng(path_seed_sequence(seed, p))
        w[i] = rng.standard_normal((horizon, C + 1))
    return w


def _run_blocks(task, n_paths: int, block: int, workers: int) -> None:
    starts = range(0, n_paths, block)
    if workers <= 1:
        for s in starts:
            task(s, min(s + block, n_paths))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(task, s, min(s + block, n_paths)) for s in starts]
            for f in futures:
                f.result()


def simulate_paths(config: SimConfig, params: ModelParams, workers: int = 1) -> PathEnsemble:
    """Simulate the full ensemble, a pure function of (config, params).

    ``workers`` only bounds thread parallelism over path blocks; the result
    is bit-identical for any value.
    """
    validate_params(params, estimation_box=True)
    initial = config.initial
    if initial.C != params.C:
        raise DomainError(f"initial state has C={initial.C}, params have C={params.C}")
    H, C = config.horizon, params.C
    out = np.empty((config.n_paths, H + 1, C))
    sqrt1mr2 = np.sqrt(1.0 - params.rho**2)

    def task(lo: int, hi: int) -> None:
        w = _make_noise_block(config.seed, range(lo, hi), H, C)
        backend.fill_paths(
            w, initial.kappa, initial.kappa_prev,
            params.mu, params.zeta, params.lam, params.sigma,
            params.rho, sqrt1mr2, out[lo:hi],
        )

    _run_blocks(task, config.n_paths, _block_size(H, C, config.n_paths), workers)
    out.setflags(write=False)
    return PathEnsemble(values=out, config=config, params=params)


def extremal_stats_streaming(params: ModelParams, initial: State, horizon: int, burn_in: int,
                             n_paths: int, seed, workers: int = 1) -> np.ndarray:
    """Per-path extremal summaries without storing trajectories.

    Returns an (n_paths, 5) array of
    (m at burn_in, m at midpoint, m at horizon, spread sum over the first
    post-burn-in half, spread sum over the second half), where spread is
    M_t - m_t and the midpoint splits (burn_in, horizon] in two.
    """
    validate_params(params, estimation_box=True)
    if not 0 <= burn_in < horizon:
        raise DomainError(f"need 0 <= burn_in < horizon, got {burn_in} vs {horizon}")
    H, C = horizon, params.C
    mid = burn_in + (H - burn_in) // 2
    stats = np.empty((n_paths, 5))
    sqrt1mr2 = np.sqrt(1.0 - params.rho**2)

    def task(lo: int, hi: int) -> None:
        w = _make_noise_block(seed, range(lo, hi), H, C)
        backend.extremal_stats(
            w, initial.kappa, initial.kappa_prev,
            params.mu, params.zeta, params.lam, params.sigma,
            params.rho, sqrt1mr2, burn_in, mid, stats[lo:hi],
        )

    _run_blocks(task, n_paths, _block_size(H, C, n_paths), workers)
    return stats


def extremal_path(values: np.ndarray) -> ExtremalPath:
    """Componentwise minimum/maximum of a path (T, C) or ensemble (P, T, C).

    Ties break to the lowest population index; returned indices are 1-based.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim not in (2, 3):
        raise DomainError(f"expected a (T, C) path or (P, T, C) ensemble, got shape {values.shape}")
    axis = values.ndim - 1
    return ExtremalPath(
        m=values.min(axis=axis),
        M=values.max(axis=axis),
        argmin=values.argmin(axis=axis) + 1,
        argmax=values.argmax(axis=axis) + 1,
    )


def min_decrease_probability(state: State, params: ModelParams, a: float) -> float:
    """P(min_c kappa[t+1, c] <= a | current state), closed form.

    Valid only for mu = zeta = 0 and rho = 0 (independent innovations),
    where the next minimum exceeds ``a`` iff every component does:

        P = 1 - prod_c Phi(((1 - lam_c) kappa_c - a + lam_c m) / sigma_c)

    Phi is evaluated through the complementary error function (absolute
    accuracy well below 1e-12); the product is accumulated in log space.
    """
    validate_params(params)
    if np.any(params.rho != 0.0) or np.any(params.mu != 0.0) or np.any(params.zeta != 0.0):
        raise UnsupportedError(
            "closed form requires mu = zeta = 0 and rho = 0; use Monte Carlo "
            "estimation (simulate_paths) for the general case"
        )
    if state.C != params.C:
        raise DomainError(f"state has C={state.C}, params have C={params.C}")
    m = state.kappa.min()
    args = ((1.0 - params.lam) * state.kappa - a + params.lam * m) / params.sigma
    return float(-np.expm1(norm_logcdf(args).sum()))


def ensemble_summary(ensemble: PathEnsemble, quantiles=(0.05, 0.5, 0.95)) -> dict:
    """Cross-path mean/quantile fans of kappa, the minimum, maximum, and spread."""
    values = ensemble.values
    ext = extremal_path(values)
    spread = ext.M - ext.m

    def fan(arr: np.ndarray) -> dict:
        out = {"mean": arr.mean(axis=0).tolist()}
        for q in quantiles:
            out[f"q{int(round(100 * q)):02d}"] = np.quantile(arr, q, axis=0).tolist()
        return out

    return {
        "t": list(range(values.shape[1])),
        "kappa": {f"pop_{c + 1}": fan(values[:, :, c]) for c in range(ensemble.C)},
        "m": fan(ext.m),
        "M": fan(ext.M),
        "spread": fan(spread),
        "terminal_spread_mean": float(spread[:, -1].mean()),
    }


def ensemble_to_csv(ensemble: PathEnsemble, fileobj) -> None:
    """Write the ensemble in long form with columns (path, t, c, kappa); c is 1-based."""
    writer = csv.writer(fileobj)
    writer.writerow(["path", "t", "c", "kappa"])
    values = ensemble.values
    for p in range(values.shape[0]):
        for t in range(values.shape[1]):
            row = values[p, t]
            for c in range(values.shape[2]):
                writer.writerow([p, t, c + 1, repr(float(row[c]))])
