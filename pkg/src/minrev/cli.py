"""Command-line pipeline: ingest, simulate, tables, asymptotics, fit-cae, fit-ts, compare-bic.

Every run takes an optional JSON config document plus flag overrides
(flags win), and every output directory receives a ``manifest.json``
holding the fully resolved config, its hash, the seed, and the package
version, which is sufficient to reproduce the outputs bit for bit.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

import minrev
from minrev import asymptotics, ingest
from minrev.errors import MinrevError
from minrev.estimate import FitConfig, compare_models, fit_mle
from minrev.mortality import extract_period_effects, fit_cae
from minrev.params import ModelParams, SharingScheme, State, params_from_json, validate_params
from minrev.simulate import PathEnsemble, SimConfig, ensemble_summary, ensemble_to_csv, simulate_paths

__all__ = ["main"]


class _ConfigError(Exception):
    """User-facing configuration problem (exit code 2)."""


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise _ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise _ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise _ConfigError(f"config file {path} must hold a JSON object")
    return doc


class _Required:
    def __repr__(self):
        return "<required>"


REQUIRED = _Required()


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults < config file < explicit flags into one dict."""
    cfg = dict(defaults)
    cfg.update(_load_config_file(getattr(args, "config", None)))
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    missing = [k for k, v in cfg.items() if v is REQUIRED]
    if missing:
        raise _ConfigError(f"missing required settings: {', '.join(missing)}")
    return cfg


def _write_manifest(outdir: Path, command: str, cfg: dict) -> None:
    canonical = json.dumps(cfg, sort_keys=True, default=str)
    manifest = {
        "command": command,
        "version": minrev.__version__,
        "seed": cfg.get("seed"),
        "config": json.loads(canonical),
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "kernel_backend": minrev.KERNEL_BACKEND,
    }
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_params(cfg: dict) -> ModelParams:
    if isinstance(cfg.get("params"), dict):
        text = json.dumps(cfg["params"])
    else:
        path = cfg.get("params")
        if not path:
            raise _ConfigError("model parameters required: pass --params FILE or a 'params' config object")
        try:
            text = Path(path).read_text(encoding="utf-8")
        except FileNotFoundError:
            raise _ConfigError(f"parameter file not found: {path}") from None
    try:
        params = params_from_json(text)
        validate_params(params, estimation_box=True)
    except (MinrevError, json.JSONDecodeError) as exc:
        raise _ConfigError(f"invalid model parameters: {exc}") from None
    return params


def _open_input(path: str):
    try:
        return open(path, encoding="utf-8", newline="")
    except FileNotFoundError:
        raise _ConfigError(f"input file not found: {path}") from None


# --------------------------------------------------------------------------- handlers


def _cmd_ingest(cfg: dict) -> None:
    countries = list(cfg["countries"])
    if len(cfg["deaths"]) != len(countries) or len(cfg["exposures"]) != len(countries):
        raise _ConfigError("--deaths and --exposures must list one file per country, in the same order")
    spec = ingest.DatasetSpec(
        countries=countries,
        sex=cfg["sex"],
        age_min=cfg["ages"][0],
        age_max=cfg["ages"][1],
        year_min=cfg["years"][0],
        year_max=cfg["years"][1],
    )
    deaths = {}
    exposures = {}
    for country, dpath, epath in zip(countries, cfg["deaths"], cfg["exposures"]):
        with _open_input(dpath) as fh:
            deaths[country] = ingest.parse_hmd(fh, kind="deaths", country=country)
        with _open_input(epath) as fh:
            exposures[country] = ingest.parse_hmd(fh, kind="exposures", country=country)
    dataset = ingest.assemble_dataset(deaths, exposures, spec)
    outdir = _outdir(cfg)
    with open(outdir / "dataset.csv", "w", encoding="utf-8", newline="") as fh:
        ingest.dataset_to_csv(dataset, fh)
    _write_manifest(outdir, "ingest", cfg)
    print(f"wrote {outdir / 'dataset.csv'}: {dataset.deaths.shape[0]} ages x "
          f"{dataset.deaths.shape[1]} years x {dataset.deaths.shape[2]} populations")


def _cmd_simulate(cfg: dict) -> None:
    params = _read_params(cfg)
    initial = cfg.get("initial")
    if initial is None:
        initial = [0.0] * params.C
    if len(initial) != params.C:
        raise _ConfigError(f"initial state has {len(initial)} entries, parameters have C={params.C}")
    sim_config = SimConfig(
        horizon=int(cfg["horizon"]),
        n_paths=int(cfg["n_paths"]),
        seed=int(cfg["seed"]),
        initial=State.at_rest(np.asarray(initial, dtype=float)),
    )
    ensemble = simulate_paths(sim_config, params, workers=int(cfg["threads"]))
    outdir = _outdir(cfg)
    with open(outdir / "ensemble.csv", "w", encoding="utf-8", newline="") as fh:
        ensemble_to_csv(ensemble, fh)
    with open(outdir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(ensemble_summary(ensemble), fh, indent=2)
    _write_manifest(outdir, "simulate", cfg)
    print(f"wrote {outdir / 'ensemble.csv'} and summary.json "
          f"({sim_config.n_paths} paths, horizon {sim_config.horizon})")


def _cmd_tables(cfg: dict) -> None:
    result = asymptotics.reproduce_tables(
        lambdas=[float(x) for x in cfg["lambda_grid"]],
        Cs=[int(x) for x in cfg["c_grid"]],
        n_paths=int(cfg["n_paths"]),
        seed=int(cfg["seed"]),
        workers=int(cfg["threads"]),
    )
    outdir = _outdir(cfg)
    with open(outdir / "table_drift.csv", "w", encoding="utf-8", newline="") as fh:
        result.drift_table_csv(fh)
    with open(outdir / "table_spread.csv", "w", encoding="utf-8", newline="") as fh:
        result.spread_table_csv(fh)
    with open(outdir / "tables.json", "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2)
    _write_manifest(outdir, "tables", cfg)
    print(f"wrote {outdir / 'table_drift.csv'} and table_spread.csv")


def _cmd_asymptotics(cfg: dict) -> None:
    lam = float(cfg["lam"])
    s = float(cfg["s"])
    mu = float(cfg["mu"])
    doc = {
        "lambda": lam,
        "s": s,
        "mu": mu,
        "drift": asymptotics.asymptotic_drift(mu, lam, s),
        "spread": asymptotics.asymptotic_spread(lam, s),
        "sigma_tilde": asymptotics.sigma_tilde(lam),
    }
    text = json.dumps(doc, indent=2)
    print(text)
    if cfg.get("out"):
        outdir = _outdir(cfg)
        (outdir / "asymptotics.json").write_text(text + "\n", encoding="utf-8")
        _write_manifest(outdir, "asymptotics", cfg)


def _cmd_fit_cae(cfg: dict) -> None:
    with _open_input(cfg["data"]) as fh:
        dataset = ingest.load_dataset_csv(fh)
    params = fit_cae(dataset, x_r=int(cfg["xr"]), tol=float(cfg["tol"]))
    panel = extract_period_effects(params, dataset.years, dataset.populations)
    outdir = _outdir(cfg)
    (outdir / "cae_params.json").write_text(params.to_json() + "\n", encoding="utf-8")
    with open(outdir / "age_effects.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("x,alpha,beta\n")
        for age, a, b in zip(params.ages, params.alpha, params.beta):
            fh.write(f"{int(age)},{a!r},{b!r}\n")
    with open(outdir / "period_effects.csv", "w", encoding="utf-8", newline="") as fh:
        panel.to_csv(fh)
    _write_manifest(outdir, "fit-cae", cfg)
    print(f"wrote {outdir / 'cae_params.json'}, age_effects.csv, period_effects.csv")


def _fit_config(cfg: dict) -> FitConfig:
    sharing = SharingScheme.from_dict(cfg.get("sharing", {}))
    if cfg.get("lambda_zero"):
        sharing = SharingScheme(
            mu_shared=sharing.mu_shared,
            lambda_shared=sharing.lambda_shared,
            zeta_shared=sharing.zeta_shared,
            lambda_fixed_zero=True,
        )
    return FitConfig(
        sharing=sharing,
        tol=float(cfg["tol"]),
        multistarts=int(cfg["multistarts"]),
        seed=int(cfg["seed"]),
    )


def _load_panel(cfg: dict):
    with _open_input(cfg["kappa"]) as fh:
        return ingest.load_kappa_csv(fh)


def _cmd_fit_ts(cfg: dict) -> None:
    panel = _load_panel(cfg)
    result = fit_mle(panel, _fit_config(cfg))
    outdir = _outdir(cfg)
    (outdir / "fit.json").write_text(result.to_json() + "\n", encoding="utf-8")
    _write_manifest(outdir, "fit-ts", cfg)
    print(f"wrote {outdir / 'fit.json'} (logL={result.logL:.4f}, BIC={result.BIC:.4f}, "
          f"converged={result.converged})")


def _cmd_compare_bic(cfg: dict) -> None:
    panel = _load_panel(cfg)
    comparison = compare_models(panel, _fit_config(cfg))
    outdir = _outdir(cfg)
    with open(outdir / "comparison.csv", "w", encoding="utf-8", newline="") as fh:
        comparison.to_csv(fh)
    with open(outdir / "comparison.json", "w", encoding="utf-8") as fh:
        json.dump(comparison.to_dict(), fh, indent=2)
    _write_manifest(outdir, "compare-bic", cfg)
    print(f"wrote {outdir / 'comparison.csv'}; preferred model: {comparison.preferred}")


# --------------------------------------------------------------------------- parser

_DEFAULTS = {
    "ingest": {"deaths": REQUIRED, "exposures": REQUIRED, "countries": REQUIRED, "sex": "female",
               "ages": [0, 95], "years": [1951, 2011], "out": REQUIRED},
    "simulate": {"params": REQUIRED, "horizon": 50, "n_paths": 1000, "seed": 0,
                 "initial": None, "threads": 1, "out": REQUIRED},
    "tables": {"lambda_grid": list(asymptotics.DEFAULT_LAMBDA_GRID),
               "c_grid": list(asymptotics.DEFAULT_C_GRID),
               "n_paths": 100_000, "seed": 0, "threads": 1, "out": REQUIRED},
    "asymptotics": {"lam": REQUIRED, "s": math.sqrt(2.0), "mu": 0.0, "out": ""},
    "fit-cae": {"data": REQUIRED, "xr": 70, "tol": 1e-10, "out": REQUIRED},
    "fit-ts": {"kappa": REQUIRED, "tol": 1e-8, "multistarts": 5, "seed": 0,
               "lambda_zero": False, "sharing": {}, "out": REQUIRED},
    "compare-bic": {"kappa": REQUIRED, "tol": 1e-8, "multistarts": 5, "seed": 0,
                    "lambda_zero": False, "sharing": {}, "out": REQUIRED},
}

_HANDLERS = {
    "ingest": _cmd_ingest,
    "simulate": _cmd_simulate,
    "tables": _cmd_tables,
    "asymptotics": _cmd_asymptotics,
    "fit-cae": _cmd_fit_cae,
    "fit-ts": _cmd_fit_ts,
    "compare-bic": _cmd_compare_bic,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minrev",
        description="Minimum-reversion time-series toolkit: simulation, asymptotic tables, "
                    "maximum-likelihood fits, and mortality data preparation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config document; explicit flags override its entries")
        p.add_argument("--out", help="output directory")
        return p

    p = add("ingest", "parse HMD deaths/exposures files into a dataset CSV")
    p.add_argument("--deaths", nargs="+", help="deaths files, one per country")
    p.add_argument("--exposures", nargs="+", help="exposures files, one per country")
    p.add_argument("--countries", nargs="+", help="country codes, same order as the files")
    p.add_argument("--sex", choices=["female", "male", "total"])
    p.add_argument("--ages", nargs=2, type=int, metavar=("MIN", "MAX"))
    p.add_argument("--years", nargs=2, type=int, metavar=("MIN", "MAX"))

    p = add("simulate", "simulate an ensemble and write CSV + summary JSON")
    p.add_argument("--params", help="model parameter JSON file")
    p.add_argument("--horizon", type=int)
    p.add_argument("--n-paths", dest="n_paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--initial", nargs="+", type=float, help="initial kappa vector (default zeros)")
    p.add_argument("--threads", type=int)

    p = add("tables", "reproduce the asymptotic drift/spread tables by Monte Carlo")
    p.add_argument("--lambda-grid", dest="lambda_grid", nargs="+", type=float)
    p.add_argument("--c-grid", dest="c_grid", nargs="+", type=int)
    p.add_argument("--n-paths", dest="n_paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)

    p = add("asymptotics", "evaluate the closed-form drift and spread at one point")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--mu", type=float)

    p = add("fit-cae", "fit the common-age-effect mortality model to a dataset CSV")
    p.add_argument("--data", help="dataset CSV from the ingest subcommand")
    p.add_argument("--xr", type=int, help="reference age (default 70)")
    p.add_argument("--tol", type=float)

    for name in ("fit-ts", "compare-bic"):
        p = add(name, "fit the time-series model to a kappa panel CSV"
                if name == "fit-ts" else "compare the fits with and without reversion by BIC")
        p.add_argument("--kappa", help="kappa panel CSV (year, population, kappa)")
        p.add_argument("--tol", type=float)
        p.add_argument("--multistarts", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--lambda-zero", dest="lambda_zero", action="store_const", const=True,
                       help="fix the reversion strength to zero")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args, _DEFAULTS[args.command])
    except _ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        _HANDLERS[args.command](cfg)
    except _ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MinrevError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
