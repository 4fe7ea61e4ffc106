import json

import numpy as np
import pytest

from minrev.cli import main
from minrev.mortality import CAEParams, fitted_rates
from minrev.params import ModelParams, State
from minrev.simulate import SimConfig, simulate_paths
from tests.conftest import hmd_text


@pytest.fixture(scope="module")
def hmd_dir(tmp_path_factory):
    """Two-country HMD fixture generated from a reversion-driven mortality truth."""
    root = tmp_path_factory.mktemp("hmd")
    rng = np.random.default_rng(99)
    ages = np.arange(50, 91)
    T = 60
    years = np.arange(1950, 1950 + T)
    pops = ("AAA", "BBB", "CCC", "DDD")
    ts_true = ModelParams(mu=-0.025, zeta=0.0, lam=0.1, sigma=0.02, rho=0.5, C=len(pops))
    kap = simulate_paths(
        SimConfig(horizon=T - 1, n_paths=1, seed=12, initial=State.at_rest(np.full(len(pops), -1.0))),
        ts_true,
    ).values[0]
    truth = CAEParams(alpha=0.07 * (ages - 70), beta=1.0 + 0.004 * (70 - ages), kappa=kap, x_r=70, ages=ages)
    E = np.full((len(ages), T, len(pops)), 5e5)
    D = rng.poisson(fitted_rates(truth) * E).astype(float)
    for k, country in enumerate(pops):
        (root / f"{country}_deaths.txt").write_text(hmd_text(years, ages, D[:, :, k], country))
        (root / f"{country}_expo.txt").write_text(hmd_text(years, ages, E[:, :, k], country))
    return root, pops, years, ages


def run(*argv):
    return main([str(a) for a in argv])


class TestPipeline:
    def test_ingest_fit_cae_compare(self, hmd_dir, tmp_path):
        root, pops, years, ages = hmd_dir
        ingest_dir = tmp_path / "ingest"
        code = run(
            "ingest",
            "--deaths", *[root / f"{c}_deaths.txt" for c in pops],
            "--exposures", *[root / f"{c}_expo.txt" for c in pops],
            "--countries", *pops,
            "--sex", "female",
            "--ages", ages.min(), ages.max(),
            "--years", years.min(), years.max(),
            "--out", ingest_dir,
        )
        assert code == 0
        assert (ingest_dir / "dataset.csv").exists()
        manifest = json.loads((ingest_dir / "manifest.json").read_text())
        assert manifest["command"] == "ingest"
        assert "config_sha256" in manifest

        cae_dir = tmp_path / "cae"
        assert run("fit-cae", "--data", ingest_dir / "dataset.csv", "--xr", 70, "--out", cae_dir) == 0
        cae = json.loads((cae_dir / "cae_params.json").read_text())
        i70 = cae["ages"].index(70)
        assert cae["alpha"][i70] == 0.0
        assert cae["beta"][i70] == 1.0
        age_lines = (cae_dir / "age_effects.csv").read_text().strip().splitlines()
        assert age_lines[0] == "x,alpha,beta"
        assert len(age_lines) == 1 + len(ages)

        cmp_dir = tmp_path / "cmp"
        assert run("compare-bic", "--kappa", cae_dir / "period_effects.csv", "--seed", 1, "--out", cmp_dir) == 0
        doc = json.loads((cmp_dir / "comparison.json").read_text())
        assert doc["preferred"] == "lambda_free"
        rows = {r["model"]: r for r in doc["rows"]}
        assert rows["lambda_free"]["BIC"] < rows["lambda=0"]["BIC"]
        assert rows["lambda_free"]["K"] == rows["lambda=0"]["K"] + 1
        lines = (cmp_dir / "comparison.csv").read_text().strip().splitlines()
        assert lines[0] == "model,logL,K,BIC,mu_hat,lambda_hat,zeta_hat,sigma_bar,rho_bar"

        fit_dir = tmp_path / "fit"
        assert run("fit-ts", "--kappa", cae_dir / "period_effects.csv", "--seed", 0, "--out", fit_dir) == 0
        fit = json.loads((fit_dir / "fit.json").read_text())
        assert fit["converged"] is True
        assert fit["BIC"] == pytest.approx(fit["K"] * np.log(fit["n"]) - 2 * fit["logL"])

    def test_lambda_zero_flag_gives_single_row(self, hmd_dir, tmp_path):
        root, pops, years, ages = hmd_dir
        ingest_dir = tmp_path / "i"
        run(
            "ingest",
            "--deaths", *[root / f"{c}_deaths.txt" for c in pops],
            "--exposures", *[root / f"{c}_expo.txt" for c in pops],
            "--countries", *pops,
            "--ages", ages.min(), ages.max(),
            "--years", years.min(), years.max(),
            "--out", ingest_dir,
        )
        cae_dir = tmp_path / "c"
        run("fit-cae", "--data", ingest_dir / "dataset.csv", "--out", cae_dir)
        cmp_dir = tmp_path / "z"
        assert run("compare-bic", "--kappa", cae_dir / "period_effects.csv",
                   "--lambda-zero", "--out", cmp_dir) == 0
        doc = json.loads((cmp_dir / "comparison.json").read_text())
        assert [r["model"] for r in doc["rows"]] == ["lambda=0"]


class TestSimulateCommand:
    PARAMS = {"mu": [0.0, 0.0], "zeta": [0.0, 0.0], "lambda": [0.1, 0.1],
              "sigma": [1.0, 1.0], "rho": [0.0, 0.0]}

    def write_params(self, tmp_path, lam):
        doc = dict(self.PARAMS, **{"lambda": [lam, lam]})
        path = tmp_path / f"params_{lam}.json"
        path.write_text(json.dumps(doc))
        return path

    def test_fixed_seed_reproduces_files(self, tmp_path):
        params = self.write_params(tmp_path, 0.1)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert run("simulate", "--params", params, "--horizon", 30, "--n-paths", 50,
                       "--seed", 7, "--out", out) == 0
        assert (out1 / "ensemble.csv").read_text() == (out2 / "ensemble.csv").read_text()
        assert (out1 / "summary.json").read_text() == (out2 / "summary.json").read_text()

    def test_reversion_shrinks_terminal_spread(self, tmp_path):
        spreads = {}
        for lam in (0.0, 0.3):
            params = self.write_params(tmp_path, lam)
            out = tmp_path / f"run{lam}"
            assert run("simulate", "--params", params, "--horizon", 120, "--n-paths", 300,
                       "--seed", 3, "--out", out) == 0
            spreads[lam] = json.loads((out / "summary.json").read_text())["terminal_spread_mean"]
        assert spreads[0.3] < spreads[0.0]

    def test_zero_horizon_outputs_initial_state_only(self, tmp_path):
        params = self.write_params(tmp_path, 0.1)
        out = tmp_path / "h0"
        assert run("simulate", "--params", params, "--horizon", 0, "--n-paths", 3,
                   "--initial", 1.5, 2.5, "--out", out) == 0
        lines = (out / "ensemble.csv").read_text().strip().splitlines()
        assert lines[1:] == ["0,0,1,1.5", "0,0,2,2.5", "1,0,1,1.5", "1,0,2,2.5", "2,0,1,1.5", "2,0,2,2.5"]

    def test_threads_do_not_change_output(self, tmp_path):
        params = self.write_params(tmp_path, 0.2)
        outs = []
        for threads in (1, 2):
            out = tmp_path / f"t{threads}"
            assert run("simulate", "--params", params, "--horizon", 25, "--n-paths", 64,
                       "--seed", 5, "--threads", threads, "--out", out) == 0
            outs.append((out / "ensemble.csv").read_text())
        assert outs[0] == outs[1]

    def test_config_file_with_flag_override(self, tmp_path):
        params = self.write_params(tmp_path, 0.1)
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"params": str(params), "horizon": 10, "n_paths": 5, "seed": 2}))
        out = tmp_path / "cfg"
        assert run("simulate", "--config", config, "--n-paths", 8, "--out", out) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["n_paths"] == 8       # flag wins
        assert manifest["config"]["horizon"] == 10      # from config file
        assert manifest["seed"] == 2


class TestTablesCommand:
    def test_exact_columns_match_closed_forms(self, tmp_path):
        out = tmp_path / "tab"
        assert run("tables", "--lambda-grid", 0.05, 0.4, "--c-grid", 2,
                   "--n-paths", 800, "--seed", 2, "--out", out) == 0
        drift = (out / "table_drift.csv").read_text().strip().splitlines()
        assert drift[0] == "lambda,exact_C2,mc_C2,se_C2"
        assert float(drift[1].split(",")[1]) == pytest.approx(-0.0903, abs=5e-5)
        assert float(drift[2].split(",")[1]) == pytest.approx(-0.2821, abs=5e-5)
        spread = (out / "table_spread.csv").read_text().strip().splitlines()
        assert float(spread[1].split(",")[1]) == pytest.approx(3.6137, abs=5e-5)

    def test_se_column_widens_with_fewer_paths(self, tmp_path):
        ses = {}
        for n in (400, 3600):
            out = tmp_path / f"n{n}"
            assert run("tables", "--lambda-grid", 0.2, "--c-grid", 2,
                       "--n-paths", n, "--seed", 4, "--out", out) == 0
            doc = json.loads((out / "tables.json").read_text())
            ses[n] = doc["drift_se"][0][0]
        assert ses[400] > 2.0 * ses[3600]  # roughly 1/sqrt(n)


class TestAsymptoticsCommand:
    def test_point_evaluation(self, capsys):
        assert run("asymptotics", "--lambda", 0.05) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["drift"] == pytest.approx(-0.0903, abs=5e-5)
        assert doc["spread"] == pytest.approx(3.6137, abs=5e-5)


class TestExitCodes:
    def test_missing_input_file_is_config_error(self, tmp_path):
        assert run("simulate", "--params", tmp_path / "nope.json", "--out", tmp_path / "o") == 2

    def test_invalid_params_is_config_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"mu": [0, 0], "zeta": [0, 0], "lambda": [1.5, 0.1],
                                   "sigma": [1, 1], "rho": [0, 0]}))
        assert run("simulate", "--params", bad, "--out", tmp_path / "o") == 2

    def test_malformed_config_json(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        assert run("tables", "--config", cfg, "--out", tmp_path / "o") == 2

    def test_runtime_data_error_is_exit_three(self, tmp_path):
        # complete but too-short panel: a data problem found at run time
        kappa = tmp_path / "k.csv"
        kappa.write_text("year,population,kappa\n2000,A,1.0\n2000,B,2.0\n2001,A,1.0\n2001,B,2.0\n")
        assert run("fit-ts", "--kappa", kappa, "--out", tmp_path / "o") == 3

    def test_gap_in_panel_is_exit_three(self, tmp_path):
        kappa = tmp_path / "k.csv"
        kappa.write_text("year,population,kappa\n2000,A,1.0\n2000,B,2.0\n2001,A,1.0\n")
        assert run("fit-ts", "--kappa", kappa, "--out", tmp_path / "o") == 3

    def test_missing_required_flag(self, tmp_path):
        assert run("fit-cae", "--out", tmp_path / "o") == 2
