import numpy as np
import pytest

from minrev.errors import DomainError, UnsupportedError
from minrev.gaussian import norm_cdf
from minrev.params import ModelParams, State
from minrev.simulate import (
    SimConfig,
    draw_noise,
    ensemble_summary,
    extremal_path,
    min_decrease_probability,
    simulate_paths,
    step,
)


def table_params(C, lam, sigma=1.0, rho=0.0, mu=0.0, zeta=0.0):
    return ModelParams(mu=mu, zeta=zeta, lam=lam, sigma=sigma, rho=rho, C=C)


class TestDrawNoise:
    def test_independent_when_rho_zero(self):
        rng = np.random.default_rng(0)
        z = draw_noise(table_params(3, 0.0), rng, n=100_000)
        corr = np.corrcoef(z.T)
        off = corr[~np.eye(3, dtype=bool)]
        assert np.all(np.abs(off) < 3.0 / np.sqrt(100_000))

    def test_near_unit_loading(self):
        eps = 1e-3
        rng = np.random.default_rng(1)
        z = draw_noise(table_params(2, 0.0, rho=1.0 - eps), rng, n=100_000)
        corr = np.corrcoef(z.T)[0, 1]
        assert corr == pytest.approx((1.0 - eps) ** 2, abs=3.0 / np.sqrt(100_000))

    def test_unit_marginal_variance_for_any_rho(self):
        rng = np.random.default_rng(2)
        n = 100_000
        z = draw_noise(table_params(3, 0.0, rho=[0.9, -0.4, 0.2]), rng, n=n)
        var = z.var(axis=0, ddof=1)
        se = np.sqrt(2.0 / (n - 1))
        assert np.all(np.abs(var - 1.0) < 3 * se)

    def test_single_draw_shape(self):
        z = draw_noise(table_params(4, 0.1), np.random.default_rng(3))
        assert z.shape == (4,)


def scalar_step_reference(kappa, kappa_prev, mu, zeta, lam, sigma, z):
    """Independent scalar re-implementation of one update."""
    m = min(kappa)
    out = []
    for c in range(len(kappa)):
        out.append(
            kappa[c]
            + mu[c]
            + zeta[c] * (kappa[c] - kappa_prev[c])
            + sigma[c] * z[c]
            + lam[c] * (m - kappa[c])
        )
    return np.array(out)


class TestStep:
    def test_all_zero_increments(self):
        s = State.at_rest([1.0, -2.0])
        out = step(s, table_params(2, 0.0), np.zeros(2))
        assert np.array_equal(out.kappa, s.kappa)
        assert out.t == 1

    def test_reversion_pulls_toward_minimum(self):
        s = State.at_rest([0.0, 2.0])
        out = step(s, table_params(2, 0.5), np.zeros(2))
        assert np.allclose(out.kappa, [0.0, 1.0])
        assert np.array_equal(out.kappa_prev, s.kappa)

    def test_three_component_hand_case(self):
        s = State.at_rest([1.0, 2.0, 4.0])
        out = step(s, table_params(3, 0.25, mu=0.1), np.zeros(3))
        assert np.allclose(out.kappa, [1.1, 1.85, 3.35], atol=1e-15)

    def test_matches_scalar_reference(self, rng):
        for _ in range(25):
            C = rng.integers(2, 6)
            kappa = rng.normal(0, 2, C)
            prev = rng.normal(0, 2, C)
            p = ModelParams(
                mu=rng.normal(0, 0.1, C), zeta=rng.uniform(0, 0.9, C), lam=rng.uniform(0, 0.9, C),
                sigma=rng.uniform(0.1, 2, C), rho=rng.uniform(-0.9, 0.9, C),
            )
            z = rng.standard_normal(C)
            expected = scalar_step_reference(kappa, prev, p.mu, p.zeta, p.lam, p.sigma, z)
            got = step(State(kappa=kappa, kappa_prev=prev), p, z)
            assert np.allclose(got.kappa, expected, rtol=1e-14)


class TestSimulatePaths:
    def test_worker_count_does_not_change_results(self):
        cfg = SimConfig(horizon=40, n_paths=300, seed=9, initial=State.at_rest([0.0, 1.0, 2.0]))
        p = table_params(3, 0.1, rho=0.4, mu=-0.01)
        a = simulate_paths(cfg, p, workers=1)
        b = simulate_paths(cfg, p, workers=4)
        assert np.array_equal(a.values, b.values)

    def test_same_seed_same_ensemble(self):
        cfg = SimConfig(horizon=20, n_paths=50, seed=77, initial=State.at_rest([0.0, 0.0]))
        p = table_params(2, 0.2)
        assert np.array_equal(simulate_paths(cfg, p).values, simulate_paths(cfg, p).values)

    def test_first_slice_is_initial_state(self):
        init = State.at_rest([3.0, -1.0])
        cfg = SimConfig(horizon=5, n_paths=10, seed=1, initial=init)
        ens = simulate_paths(cfg, table_params(2, 0.3))
        assert np.array_equal(ens.values[:, 0, :], np.tile(init.kappa, (10, 1)))
        assert np.all(np.isfinite(ens.values))

    def test_zero_horizon(self):
        cfg = SimConfig(horizon=0, n_paths=4, seed=1, initial=State.at_rest([1.0, 2.0]))
        ens = simulate_paths(cfg, table_params(2, 0.1))
        assert ens.values.shape == (4, 1, 2)

    def test_random_walk_variance(self):
        # With no drift, AR, or reversion each component is a Gaussian walk.
        T, n = 100, 4000
        sigma = np.array([1.0, 0.5])
        cfg = SimConfig(horizon=T, n_paths=n, seed=5, initial=State.at_rest([0.0, 0.0]))
        ens = simulate_paths(cfg, table_params(2, 0.0, sigma=sigma))
        var = ens.values[:, -1, :].var(axis=0, ddof=1)
        target = T * sigma**2
        se = target * np.sqrt(2.0 / (n - 1))
        assert np.all(np.abs(var - target) < 3 * se)

    def test_long_run_spread_matches_closed_form(self):
        # Two populations, lam = 0.05: expected stationary max-min gap 3.6137.
        n = 4000
        cfg = SimConfig(horizon=900, n_paths=n, seed=42, initial=State.at_rest([0.0, 0.0]))
        ens = simulate_paths(cfg, table_params(2, 0.05))
        ext = extremal_path(ens.values)
        spread_T = ext.M[:, -1] - ext.m[:, -1]
        se = spread_T.std(ddof=1) / np.sqrt(n)
        assert abs(spread_T.mean() - 3.6137) < 3 * se

    def test_negative_zeta_accepted(self):
        cfg = SimConfig(horizon=10, n_paths=5, seed=2, initial=State.at_rest([0.0, 0.0]))
        ens = simulate_paths(cfg, table_params(2, 0.1, zeta=-0.3))
        assert np.all(np.isfinite(ens.values))

    def test_dimension_mismatch_rejected(self):
        cfg = SimConfig(horizon=10, n_paths=5, seed=2, initial=State.at_rest([0.0, 0.0]))
        with pytest.raises(DomainError, match="C="):
            simulate_paths(cfg, table_params(3, 0.1))

    def test_bad_config_rejected(self):
        with pytest.raises(DomainError):
            SimConfig(horizon=-1, n_paths=5, seed=0, initial=State.at_rest([0.0, 0.0]))
        with pytest.raises(DomainError):
            SimConfig(horizon=5, n_paths=0, seed=0, initial=State.at_rest([0.0, 0.0]))


class TestExtremalPath:
    def test_single_time_slice(self):
        path = np.array([[3.0, 1.0, 2.0]])
        ext = extremal_path(path)
        assert ext.m[0] == 1.0
        assert ext.argmin[0] == 2  # 1-based
        assert ext.M[0] == 3.0
        assert ext.argmax[0] == 1

    def test_identical_paths_min_equals_max(self):
        path = np.full((7, 2), 1.5)
        ext = extremal_path(path)
        assert np.array_equal(ext.m, ext.M)
        assert np.all(ext.argmin == 1)  # ties break to the lowest index

    def test_envelope_bounds_every_component(self, rng):
        values = rng.normal(size=(20, 15, 4))
        ext = extremal_path(values)
        assert np.all(ext.m[:, :, None] <= values + 1e-15)
        assert np.all(values <= ext.M[:, :, None] + 1e-15)
        take = np.take_along_axis(values, (ext.argmin - 1)[:, :, None], axis=2)[:, :, 0]
        assert np.array_equal(take, ext.m)


class TestMinDecreaseProbability:
    def test_all_components_at_minimum(self):
        p = table_params(2, 0.3)
        assert min_decrease_probability(State.at_rest([0.0, 0.0]), p, 0.0) == pytest.approx(0.75)

    def test_two_component_formula_value(self):
        p = table_params(2, 0.0)
        got = min_decrease_probability(State.at_rest([0.0, 1.0]), p, 0.0)
        assert got == pytest.approx(1.0 - 0.5 * norm_cdf(1.0), abs=1e-12)
        assert got == pytest.approx(0.579328, abs=5e-7)

    def test_monte_carlo_cross_check(self):
        # One-step empirical frequency of {min <= a} vs the closed form.
        rng = np.random.default_rng(8)
        n = 1_000_000
        p = table_params(2, 0.0)
        state = State.at_rest([0.0, 1.0])
        z = rng.standard_normal((n, 2))
        nxt = state.kappa + z  # lam = 0, sigma = 1
        freq = (nxt.min(axis=1) <= 0.0).mean()
        prob = min_decrease_probability(state, p, 0.0)
        se = np.sqrt(prob * (1 - prob) / n)
        assert abs(freq - prob) < 4 * se

    def test_randomized_states_match_one_step_frequency(self):
        rng = np.random.default_rng(11)
        n = 100_000
        for _ in range(4):
            C = int(rng.integers(2, 5))
            lam = float(rng.uniform(0.0, 0.5))
            sigma = rng.uniform(0.5, 2.0, C)
            kappa = rng.normal(0.0, 1.0, C)
            a = float(kappa.min() + rng.normal(0, 0.5))
            p = ModelParams(mu=0.0, zeta=0.0, lam=lam, sigma=sigma, rho=0.0, C=C)
            state = State.at_rest(kappa)
            m = kappa.min()
            z = rng.standard_normal((n, C))
            nxt = kappa + sigma * z + lam * (m - kappa)
            freq = (nxt.min(axis=1) <= a).mean()
            prob = min_decrease_probability(state, p, a)
            se = np.sqrt(max(prob * (1 - prob), 1e-12) / n)
            assert abs(freq - prob) < 4 * se

    def test_downward_movement_bounds(self, rng):
        # At a = m_t the probability always lies in (1/2, 1 - 2^-C].
        for _ in range(20):
            C = int(rng.integers(2, 6))
            lam = float(rng.uniform(0.0, 0.9))
            kappa = rng.normal(0.0, 2.0, C)
            p = ModelParams(mu=0.0, zeta=0.0, lam=lam, sigma=rng.uniform(0.3, 2.0, C), rho=0.0, C=C)
            prob = min_decrease_probability(State.at_rest(kappa), p, float(kappa.min()))
            assert 0.5 < prob <= 1.0 - 2.0 ** (-C) + 1e-12

    def test_maximal_when_components_equal(self, rng):
        p = table_params(3, 0.2)
        equal = min_decrease_probability(State.at_rest([1.0, 1.0, 1.0]), p, 1.0)
        assert equal == pytest.approx(1.0 - 2.0**-3, abs=1e-12)
        for _ in range(10):
            bump = np.abs(rng.normal(0, 1, 3))
            bump[0] = 0.0
            kappa = 1.0 + bump
            perturbed = min_decrease_probability(State.at_rest(kappa), p, float(kappa.min()))
            assert perturbed <= equal + 1e-12

    def test_downward_frequency_exceeds_half_with_reversion(self):
        rng = np.random.default_rng(21)
        n = 100_000
        for kappa in ([0.0, 0.5], [1.0, 1.0, 3.0], [-2.0, 0.0, 1.0, 4.0]):
            kappa = np.array(kappa)
            C = kappa.size
            lam = 0.15
            m = kappa.min()
            z = rng.standard_normal((n, C))
            nxt = kappa + z + lam * (m - kappa)
            assert (nxt.min(axis=1) <= m).mean() > 0.5

    def test_unsupported_configurations(self):
        state = State.at_rest([0.0, 1.0])
        with pytest.raises(UnsupportedError, match="Monte Carlo"):
            min_decrease_probability(state, table_params(2, 0.1, rho=0.5), 0.0)
        with pytest.raises(UnsupportedError):
            min_decrease_probability(state, table_params(2, 0.1, mu=0.1), 0.0)
        with pytest.raises(UnsupportedError):
            min_decrease_probability(state, table_params(2, 0.1, zeta=0.5), 0.0)


class TestEnsembleSummary:
    def test_summary_structure_and_fan_ordering(self):
        cfg = SimConfig(horizon=15, n_paths=200, seed=3, initial=State.at_rest([0.0, 0.0]))
        ens = simulate_paths(cfg, table_params(2, 0.1))
        summary = ensemble_summary(ens)
        assert summary["t"] == list(range(16))
        assert set(summary["kappa"]) == {"pop_1", "pop_2"}
        m = summary["m"]
        assert np.all(np.asarray(m["q05"]) <= np.asarray(m["q50"]) + 1e-12)
        assert np.all(np.asarray(m["q50"]) <= np.asarray(m["q95"]) + 1e-12)
        assert summary["terminal_spread_mean"] >= 0.0
