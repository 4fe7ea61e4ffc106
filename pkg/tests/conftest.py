import numpy as np
import pytest

from minrev.mortality import CAEParams, fitted_rates
from minrev.params import ModelParams, State
from minrev.simulate import SimConfig, simulate_paths


def hmd_text(years, ages, values, country="XXX", open_row=False):
    """Render a synthetic HMD 1x1 table; ``values[i, j]`` maps to (age i, year j).

    The female and male columns both carry the value; total carries twice it.
    """
    lines = [f"{country}, synthetic data (period 1x1),\tLast modified: 01 Jan 2020;", ""]
    lines.append("  Year          Age             Female            Male           Total")
    for j, year in enumerate(years):
        for i, age in enumerate(ages):
            v = values[i, j]
            lines.append(f"  {year}          {age}            {v:.2f}         {v:.2f}        {2 * v:.2f}")
        if open_row:
            lines.append(f"  {year}          110+            0.50         .        0.50")
    return "\n".join(lines) + "\n"


def make_cae_truth(rng, ages, n_years, n_pops, kappa0=-0.8, drift=-0.03, x_r=None):
    """Common-age-effect truth with enough period variation to pin the age effects."""
    ages = np.asarray(ages)
    X = len(ages)
    if x_r is None:
        x_r = 70 if 70 in ages else int(ages[X // 2])
    alpha = 0.06 * (ages - x_r) + rng.normal(0, 0.02, X)
    beta = 1.05 - 0.006 * (ages - x_r) + rng.normal(0, 0.02, X)
    kappa = kappa0 + np.cumsum(rng.normal(drift, 0.012, (n_years, n_pops)), axis=0)
    kappa = kappa + rng.normal(0, 0.15, (1, n_pops))
    return CAEParams(alpha=alpha, beta=beta, kappa=kappa, x_r=x_r, ages=ages)


def poisson_counts(rng, truth, exposure):
    rates = fitted_rates(truth)
    E = np.full(rates.shape, float(exposure))
    return rng.poisson(rates * E).astype(float), E


def simulate_panel(params: ModelParams, T: int, seed: int, start=None):
    """One simulated (T, C) kappa path started at rest."""
    start = np.zeros(params.C) if start is None else np.asarray(start, dtype=float)
    cfg = SimConfig(horizon=T - 1, n_paths=1, seed=seed, initial=State.at_rest(start))
    return simulate_paths(cfg, params).values[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
