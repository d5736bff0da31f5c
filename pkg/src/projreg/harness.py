"""Declarative experiment harness.

An experiment is one YAML file (see the grammar below).  Running it
produces a :class:`ResultTable` whose rows are one (method x grid point)
record with a fixed column set; every experiment kind emits the full set
(unused columns empty) so downstream parsers never branch on kind.
Identical config + seed reproduces identical bytes.

Config grammar
--------------
::

    name: fig3-left              # experiment id (stamped into rows)
    experiment: vary_p           # vary_p | vary_n | vary_k | attack_sweep
                                 #   | bv_split | bounds_overlay
    n: 64                        # fixed sample count (all kinds but vary_n)
    p: 75                        # fixed feature count (vary_n, vary_k,
                                 #   bv_split, bounds_overlay)
    grid: [8, 16, 24]            # swept values, strictly increasing
    covariance:                  # population covariance recipe
      kind: gapped               # isotropic | gapped | exp_decay
      gap_index: 16              #   | poly_decay | wishart_gapped
      ratio: 0.01                # kind-specific knobs: rate, exponent,
                                 #   ambient, rescale
    beta:
      kind: gaussian_iso         # gaussian_iso | aligned_constant
      snr: 16                    #   | misaligned_ramp | fixed
                                 # exactly one of snr / sigma; fixed kind
                                 #   takes values: [...]
    methods:                     # nonempty; order fixes row order
      - {name: ols}
      - {name: ridge, lam: 0.1}
      - {name: ridge_cv}         # lambda_grid: [...] optional
      - {name: pca_ols, k: 32}   # vary_k: k comes from the grid instead;
                                 #   k_max caps the grid per method
      - {name: oracle_pcr, k: 8}
      - {name: pls, k: 8}
      - {name: gaussian_proj, k: 8, weight_draws: 5}
      - {name: ortho_proj, k: 8, weight_draws: 5}
      - {name: ortho_ridge_cv, k: 8, weight_draws: 5}
      - {name: generative, k: 8} # max_iters, tol, restarts optional
      - {name: null}
      - {name: truth}
    mc: {trials: 16, n_test: 256}   # defaults shown
    seed: 0
    attack: {epsilon: 1.0, delta: 1.0e-6, alpha_mode: random}
                                 # attack_sweep only
    bounds: {t: 3.0, c: 1.0}     # bounds_overlay only

Sweep protocols
---------------
``vary_p`` (and ``attack_sweep``) build one ambient model -- dimension
``covariance.ambient`` for ``wishart_gapped``, else the largest grid
value -- and truncate its leading p x p block per grid point, so models
are nested and sigma is constant along the sweep.  ``vary_n`` and the
k-sweeps build the model once at the configured p.  Within a trial all
methods see the same training and test draws (common random numbers).
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .attack import AttackSpec, craft_poison
from .bounds import thm1_bounds
from .data_model import (
    BetaSpec,
    CovarianceSpec,
    DataModel,
    Dataset,
    build_model,
    sample,
    truncate_model,
)
from .estimators import (
    GenerativeOptions,
    _loocv_select,
    fit_generative,
    fit_ols,
    fit_oracle_pcr,
    fit_pca_ols,
    fit_pls,
    fit_random_projection,
    fit_ridge,
    null_and_truth_baselines,
    select_ridge_loocv,
)
from .risk import RiskReport, exact_conditional_risk

SCHEMA_VERSION = "1"

EXPERIMENT_KINDS = (
    "vary_p",
    "vary_n",
    "vary_k",
    "attack_sweep",
    "bv_split",
    "bounds_overlay",
)

METHOD_NAMES = (
    "ols",
    "ridge",
    "ridge_cv",
    "pca_ols",
    "oracle_pcr",
    "pls",
    "gaussian_proj",
    "ortho_proj",
    "ortho_ridge_cv",
    "generative",
    "null",
    "truth",
)

#: Methods whose projection dimension is data-bounded by min(n, p).
_K_CAPPED_BY_MIN_NP = ("pca_ols", "pls")

_K_METHODS = (
    "pca_ols",
    "oracle_pcr",
    "pls",
    "gaussian_proj",
    "ortho_proj",
    "ortho_ridge_cv",
    "generative",
)

COLUMNS = (
    "schema_version",
    "experiment",
    "method",
    "swept",
    "value",
    "n",
    "p",
    "k",
    "lam",
    "trials",
    "failed_trials",
    "mse",
    "mc_stderr",
    "bias_sq",
    "variance",
    "noise",
    "total",
    "bias_lower",
    "bias_upper",
    "var_lower",
    "var_upper",
    "bound_probability",
    "assumptions_ok",
    "epsilon",
    "delta",
    "h",
    "mse_clean",
    "mse_poisoned",
    "poison_ratio",
)

DEFAULT_LAMBDA_GRID = tuple(float(v) for v in np.logspace(-4, 2, 25))


class ConfigError(ValueError):
    """Config validation failure; the message carries the key path."""


@dataclass(frozen=True)
class MethodConfig:
    name: str
    k: int | None = None
    k_max: int | None = None
    lam: float | None = None
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    weight_draws: int = 1
    max_iters: int = 500
    tol: float = 1e-8
    restarts: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    experiment: str
    grid: tuple
    covariance: CovarianceSpec
    beta: BetaSpec
    methods: tuple
    n: int | None = None
    p: int | None = None
    trials: int = 16
    n_test: int = 256
    seed: int = 0
    attack_epsilon: float = 1.0
    attack_delta: float = 1e-6
    attack_alpha_mode: str = "random"
    bounds_t: float = 3.0
    bounds_c: float = 1.0


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _take(section: dict, path: str, allowed: set) -> None:
    unknown = set(section) - allowed
    _require(not unknown, f"{path}: unknown keys {sorted(unknown)}")


def _parse_methods(raw_methods, config_kind: str) -> tuple:
    _require(isinstance(raw_methods, list) and raw_methods, "methods: must be a nonempty list")
    allowed = {
        "name", "k", "k_max", "lam", "lambda_grid", "weight_draws",
        "max_iters", "tol", "restarts",
    }
    methods = []
    for i, entry in enumerate(raw_methods):
        path = f"methods[{i}]"
        _require(isinstance(entry, dict) and "name" in entry, f"{path}: needs a name")
        _take(entry, path, allowed)
        name = entry["name"]
        _require(name in METHOD_NAMES, f"{path}.name: unknown method {name!r}")
        kwargs = {}
        if "k" in entry:
            _require(config_kind not in ("vary_k", "bv_split", "bounds_overlay"),
                     f"{path}.k: fixed k is forbidden when the grid sweeps k")
            _require(isinstance(entry["k"], int) and entry["k"] >= 1,
                     f"{path}.k: must be a positive integer")
            kwargs["k"] = entry["k"]
        if "k_max" in entry:
            _require(isinstance(entry["k_max"], int) and entry["k_max"] >= 1,
                     f"{path}.k_max: must be a positive integer")
            kwargs["k_max"] = entry["k_max"]
        if "lam" in entry:
            _require(isinstance(entry["lam"], (int, float)) and entry["lam"] >= 0,
                     f"{path}.lam: must be a number >= 0")
            kwargs["lam"] = float(entry["lam"])
        if "lambda_grid" in entry:
            grid = entry["lambda_grid"]
            _require(isinstance(grid, list) and grid and all(
                isinstance(g, (int, float)) and g >= 0 for g in grid),
                f"{path}.lambda_grid: must be a nonempty list of numbers >= 0")
            kwargs["lambda_grid"] = tuple(float(g) for g in grid)
        for key, lo in (("weight_draws", 1), ("max_iters", 1), ("restarts", 1)):
            if key in entry:
                _require(isinstance(entry[key], int) and entry[key] >= lo,
                         f"{path}.{key}: must be an integer >= {lo}")
                kwargs[key] = entry[key]
        if "tol" in entry:
            _require(isinstance(entry["tol"], (int, float)) and entry["tol"] > 0,
                     f"{path}.tol: must be a positive number")
            kwargs["tol"] = float(entry["tol"])
        if name == "ridge":
            _require("lam" in entry, f"{path}: ridge needs an explicit lam")
        if name in _K_METHODS and config_kind not in ("vary_k", "bv_split", "bounds_overlay"):
            _require("k" in entry, f"{path}: {name} needs an explicit k")
        methods.append(MethodConfig(name=name, **kwargs))
    return tuple(methods)


def _parse_covariance(raw: dict) -> dict:
    _require(isinstance(raw, dict) and "kind" in raw, "covariance: needs a kind")
    allowed = {"kind", "gap_index", "ratio", "rate", "exponent", "ambient", "rescale"}
    _take(raw, "covariance", allowed)
    return dict(raw)


def _parse_beta(raw: dict) -> BetaSpec:
    _require(isinstance(raw, dict) and "kind" in raw, "beta: needs a kind")
    _take(raw, "beta", {"kind", "snr", "sigma", "values"})
    values = raw.get("values")
    if values is not None:
        values = tuple(float(v) for v in values)
    try:
        spec = BetaSpec(kind=raw["kind"], snr=raw.get("snr"), sigma=raw.get("sigma"),
                        values=values)
        spec.validate()
    except Exception as exc:
        raise ConfigError(f"beta: {exc}") from exc
    return spec


def validate_config(raw) -> ExperimentConfig:
    """Parse and validate a config (dict, YAML text, or path to a file).

    All invariants are checked here, defaults are filled (trials=16,
    n_test=256), and unknown keys anywhere are rejected with their path.
    """
    if isinstance(raw, (str, Path)):
        if isinstance(raw, Path):
            text = raw.read_text()
        elif "\n" not in raw and len(raw) < 1024 and Path(raw).exists():
            text = Path(raw).read_text()
        else:
            text = raw
        raw = yaml.safe_load(text)
    _require(isinstance(raw, dict), "config must be a mapping")
    allowed = {"name", "experiment", "n", "p", "grid", "covariance", "beta",
               "methods", "mc", "seed", "attack", "bounds"}
    _take(raw, "config", allowed)
    for key in ("name", "experiment", "grid", "covariance", "beta", "methods"):
        _require(key in raw, f"config: missing required key {key!r}")
    kind = raw["experiment"]
    _require(kind in EXPERIMENT_KINDS, f"experiment: unknown kind {kind!r}")

    grid = raw["grid"]
    _require(isinstance(grid, list) and grid, "grid: must be a nonempty list")
    _require(all(isinstance(g, int) and g >= 1 for g in grid),
             "grid: entries must be positive integers")
    _require(all(b > a for a, b in zip(grid, grid[1:])),
             "grid: entries must be strictly increasing (no duplicates)")

    n = raw.get("n")
    p = raw.get("p")
    if kind != "vary_n":
        _require(isinstance(n, int) and n >= 1, f"{kind}: needs a fixed n >= 1")
    else:
        _require(n is None, "vary_n: n comes from the grid; drop the n key")
    if kind in ("vary_n", "vary_k", "bv_split", "bounds_overlay"):
        _require(isinstance(p, int) and p >= 1, f"{kind}: needs a fixed p >= 1")
    else:
        _require(p is None, f"{kind}: p comes from the grid; drop the p key")

    cov_kwargs = _parse_covariance(raw["covariance"])
    beta_spec = _parse_beta(raw["beta"])
    methods = _parse_methods(raw["methods"], kind)

    mc = raw.get("mc") or {}
    _take(mc, "mc", {"trials", "n_test"})
    trials = mc.get("trials", 16)
    n_test = mc.get("n_test", 256)
    _require(isinstance(trials, int) and trials >= 1, "mc.trials: must be an integer >= 1")
    _require(isinstance(n_test, int) and n_test >= 1, "mc.n_test: must be an integer >= 1")

    seed = raw.get("seed", 0)
    _require(isinstance(seed, int), "seed: must be an integer")

    attack = raw.get("attack") or {}
    _take(attack, "attack", {"epsilon", "delta", "alpha_mode"})
    _require(kind == "attack_sweep" or not attack,
             "attack: only valid for attack_sweep experiments")
    bounds = raw.get("bounds") or {}
    _take(bounds, "bounds", {"t", "c"})
    _require(kind == "bounds_overlay" or not bounds,
             "bounds: only valid for bounds_overlay experiments")

    # Static projection-dimension caps, checked wherever both dims are known.
    if kind in ("vary_k", "bv_split", "bounds_overlay"):
        cap_np = min(n, p)
        for i, m in enumerate(methods):
            cap = cap_np if m.name in _K_CAPPED_BY_MIN_NP else (
                p if m.name == "oracle_pcr" else None)
            if cap is None:
                continue
            effective = m.k_max if m.k_max is not None else max(grid)
            _require(
                effective <= cap,
                f"methods[{i}]: {m.name} cannot take k > {cap} here; "
                f"cap the grid with k_max",
            )
    else:
        for i, m in enumerate(methods):
            if m.k is None:
                continue
            if m.name in _K_CAPPED_BY_MIN_NP and n is not None and m.k > n:
                raise ConfigError(
                    f"methods[{i}]: {m.name} with k = {m.k} exceeds n = {n}"
                )

    try:
        cov_probe = CovarianceSpec(p=max(grid) if p is None else p, **cov_kwargs)
        cov_probe.validate()
    except Exception as exc:
        raise ConfigError(f"covariance: {exc}") from exc

    ambient = cov_kwargs.get("ambient")
    if kind in ("vary_p", "attack_sweep") and cov_kwargs["kind"] == "wishart_gapped":
        _require(ambient is None or ambient >= max(grid),
                 "covariance.ambient: must cover the largest swept p")

    return ExperimentConfig(
        name=str(raw["name"]),
        experiment=kind,
        grid=tuple(grid),
        covariance=CovarianceSpec(p=0, **cov_kwargs),  # p filled per sweep
        beta=beta_spec,
        methods=methods,
        n=n,
        p=p,
        trials=trials,
        n_test=n_test,
        seed=seed,
        attack_epsilon=float(attack.get("epsilon", 1.0)),
        attack_delta=float(attack.get("delta", 1e-6)),
        attack_alpha_mode=str(attack.get("alpha_mode", "random")),
        bounds_t=float(bounds.get("t", 3.0)),
        bounds_c=float(bounds.get("c", 1.0)),
    )


@dataclass
class ResultTable:
    """Rows (dicts over COLUMNS) plus the config that produced them.

    ``cell_errors`` records grid cells that failed wholesale as
    ``(grid_value, message)``; their rows are emitted with every trial
    marked failed so partial sweeps remain usable.
    """

    name: str
    rows: list = field(default_factory=list)
    cell_errors: list = field(default_factory=list)

    def to_csv_text(self) -> str:
        lines = [",".join(COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_format_cell(row.get(col)) for col in COLUMNS))
        return "\n".join(lines) + "\n"

    def to_jsonl_text(self) -> str:
        out = []
        for row in self.rows:
            ordered = {col: row.get(col) for col in COLUMNS}
            out.append(json.dumps(ordered, allow_nan=True))
        return "\n".join(out) + "\n"


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def load_table_csv(path) -> ResultTable:
    """Parse a table written by :func:`emit` back into typed rows."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln]
    header = lines[0].split(",")
    if tuple(header) != COLUMNS:
        raise ConfigError(f"unexpected result columns in {path}")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for col, cell in zip(COLUMNS, cells):
            if cell == "":
                row[col] = None
            elif col in ("schema_version", "experiment", "method", "swept"):
                row[col] = cell
            elif col == "assumptions_ok":
                row[col] = cell == "true"
            elif col in ("value", "n", "p", "k", "trials", "failed_trials"):
                row[col] = int(cell)
            else:
                row[col] = float(cell)
        rows.append(row)
    return ResultTable(name=Path(path).stem, rows=rows)


def emit(table: ResultTable, out_dir, formats=("csv",)) -> list:
    """Write the table; one file per requested format, deterministic bytes."""
    if not table.rows:
        raise ValueError("refusing to emit an empty table")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "csv":
            path = out_dir / f"{table.name}.csv"
            path.write_text(table.to_csv_text())
        elif fmt == "jsonl":
            path = out_dir / f"{table.name}.jsonl"
            path.write_text(table.to_jsonl_text())
        else:
            raise ValueError(f"unknown output format {fmt!r}")
        written.append(path)
    return written


def _blank_row(config: ExperimentConfig, swept: str, value: int) -> dict:
    row = {col: None for col in COLUMNS}
    row.update(
        schema_version=SCHEMA_VERSION,
        experiment=config.name,
        swept=swept,
        value=value,
        trials=config.trials,
        failed_trials=0,
    )
    return row


def _build_ambient_model(config: ExperimentConfig) -> DataModel:
    dim = config.covariance.ambient if config.covariance.kind == "wishart_gapped" else max(config.grid)
    spec = replace(config.covariance, p=dim)
    return build_model(spec, config.beta, seed=(config.seed, 100))


def _build_fixed_model(config: ExperimentConfig) -> DataModel:
    spec = replace(config.covariance, p=config.p)
    return build_model(spec, config.beta, seed=(config.seed, 100))


def _method_label(m: MethodConfig) -> str:
    return m.name


def _fit_callable(m: MethodConfig, k: int | None, model: DataModel, draw_seed):
    name = m.name
    if name == "ols":
        return fit_ols
    if name == "ridge":
        return lambda d: fit_ridge(d, m.lam)
    if name == "ridge_cv":
        return lambda d: select_ridge_loocv(d, m.lambda_grid)[1]
    if name == "pca_ols":
        return lambda d: fit_pca_ols(d, k)
    if name == "oracle_pcr":
        return lambda d: fit_oracle_pcr(d, model, k)
    if name == "pls":
        return lambda d: fit_pls(d, k)
    if name == "gaussian_proj":
        return lambda d: fit_random_projection(d, "gaussian", k, seed=draw_seed)
    if name == "ortho_proj":
        return lambda d: fit_random_projection(d, "orthogonal", k, seed=draw_seed)
    if name == "ortho_ridge_cv":
        return lambda d: fit_random_projection(
            d, "orthogonal", k, seed=draw_seed, lambda_grid=m.lambda_grid
        )
    if name == "generative":
        opts = GenerativeOptions(
            tol=m.tol, max_iters=m.max_iters,
            seed=_flatten_seed(draw_seed), n_restarts=m.restarts,
        )
        return lambda d: fit_generative(d, k, opts=opts)
    if name == "null":
        return lambda d: null_and_truth_baselines(model)[0]
    if name == "truth":
        return lambda d: null_and_truth_baselines(model)[1]
    raise ConfigError(f"unknown method {name!r}")


def _flatten_seed(seed) -> int:
    # Generative restarts key their own Philox stream with a plain int.
    return int(np.random.SeedSequence(seed).generate_state(1, np.uint64)[0] % (2**63))


def _method_k(m: MethodConfig, config: ExperimentConfig, value: int) -> int | None:
    if config.experiment in ("vary_k", "bv_split", "bounds_overlay"):
        if m.name in _K_METHODS:
            if m.k_max is not None and value > m.k_max:
                return None  # skipped cell
            return value
        return None
    return m.k


def _aggregate(row: dict, mses: list, exacts: list, trials: int) -> None:
    good = np.asarray([v for v in mses if v is not None and np.isfinite(v)])
    row["failed_trials"] = trials - good.size
    if good.size:
        row["mse"] = float(np.mean(good))
        row["mc_stderr"] = (
            float(np.std(good, ddof=1) / np.sqrt(good.size)) if good.size > 1 else 0.0
        )
    usable = [r for r in exacts if r is not None]
    if usable and len(usable) == len([m for m in mses if m is not None]):
        row["bias_sq"] = float(np.mean([r.bias_sq for r in usable]))
        row["variance"] = float(np.mean([r.variance for r in usable]))
        row["noise"] = usable[0].noise
        row["total"] = float(np.mean([r.total for r in usable]))


def _run_risk_cell(config: ExperimentConfig, gi: int) -> list:
    value = config.grid[gi]
    if config.experiment in ("vary_p",):
        model = truncate_model(_build_ambient_model(config), value)
        n, swept = config.n, "p"
    elif config.experiment == "vary_n":
        model = _build_fixed_model(config)
        n, swept = value, "n"
    else:  # vary_k, bv_split, bounds_overlay
        model = _build_fixed_model(config)
        n, swept = config.n, "k"

    trains, tests = [], []
    for t in range(config.trials):
        trains.append(sample(model, n, (config.seed, gi, t, 0)))
        tests.append(sample(model, config.n_test, (config.seed, gi, t, 1)))

    rows = []
    for mi, m in enumerate(config.methods):
        k = _method_k(m, config, value)
        row = _blank_row(config, swept, value)
        row.update(method=_method_label(m), n=n, p=model.p, k=k, noise=model.sigma**2)
        if m.name in _K_METHODS and k is None:
            row["failed_trials"] = config.trials  # skipped: k outside this method's cap
            rows.append(row)
            continue
        draws = m.weight_draws if m.name in ("gaussian_proj", "ortho_proj", "ortho_ridge_cv") else 1
        mses, exacts, lams = [], [], []
        for t in range(config.trials):
            per_draw_mse, per_draw_exact = [], []
            try:
                for d in range(draws):
                    fit_fn = _fit_callable(m, k, model, (config.seed, gi, t, 2, mi, d))
                    fit = fit_fn(trains[t])
                    resid = tests[t].x @ fit.beta_hat - tests[t].y
                    per_draw_mse.append(float(np.mean(resid**2)))
                    if fit.resolvent is not None or fit.constant:
                        per_draw_exact.append(exact_conditional_risk(fit, model, trains[t]))
                    if fit.lam is not None:
                        lams.append(fit.lam)
            except Exception:
                mses.append(None)
                exacts.append(None)
                continue
            mses.append(float(np.mean(per_draw_mse)))
            if len(per_draw_exact) == draws:
                mean_exact = per_draw_exact[0]
                if draws > 1:
                    mean_exact = RiskReport(
                        method=mean_exact.method,
                        bias_sq=float(np.mean([r.bias_sq for r in per_draw_exact])),
                        variance=float(np.mean([r.variance for r in per_draw_exact])),
                        noise=mean_exact.noise,
                        total=float(np.mean([r.total for r in per_draw_exact])),
                        mode="exact",
                    )
                exacts.append(mean_exact)
            else:
                exacts.append(None)
        _aggregate(row, mses, exacts, config.trials)
        if lams:
            row["lam"] = float(np.median(lams))
        rows.append(row)

    if config.experiment == "bounds_overlay":
        report = thm1_bounds(model, n, value, config.bounds_t, config.bounds_c)
        for row in rows:
            if row["method"] == "pca_ols":
                row.update(
                    bias_lower=report.bias_lower,
                    bias_upper=report.bias_upper,
                    var_lower=report.var_lower,
                    var_upper=report.var_upper,
                    bound_probability=report.probability,
                    assumptions_ok=report.assumptions_ok,
                )
    return rows


def _run_attack_cell(config: ExperimentConfig, gi: int) -> list:
    value = config.grid[gi]
    model = truncate_model(_build_ambient_model(config), value)
    n = config.n
    trains, tests = [], []
    for t in range(config.trials):
        trains.append(sample(model, n, (config.seed, gi, t, 0)))
        tests.append(sample(model, config.n_test, (config.seed, gi, t, 1)))

    rows = []
    for mi, m in enumerate(config.methods):
        k = _method_k(m, config, value)
        row = _blank_row(config, "p", value)
        row.update(
            method=_method_label(m), n=n, p=model.p, k=k,
            epsilon=config.attack_epsilon, delta=config.attack_delta,
            noise=model.sigma**2,
        )
        clean_vals, poison_vals, h_vals = [], [], []
        failed = 0
        for t in range(config.trials):
            spec = AttackSpec(
                epsilon=config.attack_epsilon,
                delta=config.attack_delta,
                seed=_flatten_seed((config.seed, gi, t, 3)),
                alpha_mode=config.attack_alpha_mode,
            )
            try:
                poisoned = craft_poison(trains[t], spec)
                pdata = poisoned.as_dataset(model)
                if m.name == "ridge_cv":
                    # Penalty picked on the clean data, reused on the poisoned
                    # refit: the attacker does not get to move the tuning.
                    lam, _ = _loocv_select(trains[t].x, trains[t].y, m.lambda_grid)
                    fit_c = fit_ridge(trains[t], lam)
                    fit_p = fit_ridge(pdata, lam)
                else:
                    fit_fn = _fit_callable(m, k, model, (config.seed, gi, t, 2, mi, 0))
                    fit_c = fit_fn(trains[t])
                    fit_p = fit_fn(pdata)
                resid_c = tests[t].x @ fit_c.beta_hat - tests[t].y
                resid_p = tests[t].x @ fit_p.beta_hat - tests[t].y
                clean_vals.append(float(np.mean(resid_c**2)))
                poison_vals.append(float(np.mean(resid_p**2)))
                h_vals.append(poisoned.h)
            except Exception:
                failed += 1
        row["failed_trials"] = failed
        if clean_vals:
            row["mse_clean"] = float(np.mean(clean_vals))
            row["mse_poisoned"] = float(np.mean(poison_vals))
            row["poison_ratio"] = (
                row["mse_poisoned"] / row["mse_clean"] if row["mse_clean"] > 0 else float("inf")
            )
            row["h"] = float(np.mean(h_vals))
            row["mse"] = row["mse_poisoned"]
        rows.append(row)
    return rows


def _run_cell(config: ExperimentConfig, gi: int) -> list:
    if config.experiment == "attack_sweep":
        return _run_attack_cell(config, gi)
    return _run_risk_cell(config, gi)


def _run_cell_safely(config: ExperimentConfig, gi: int):
    """One grid cell; wholesale failures become all-failed placeholder rows."""
    try:
        return _run_cell(config, gi), None
    except Exception as exc:  # noqa: BLE001 - preserved as partial results
        value = config.grid[gi]
        swept = {"vary_n": "n"}.get(config.experiment,
                                    "k" if config.experiment in
                                    ("vary_k", "bv_split", "bounds_overlay") else "p")
        rows = []
        for m in config.methods:
            row = _blank_row(config, swept, value)
            row.update(method=_method_label(m), failed_trials=config.trials)
            rows.append(row)
        return rows, (value, f"{type(exc).__name__}: {exc}")


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ResultTable:
    """Execute every (grid point x method) cell and collect one table.

    Deterministic for a given config: all randomness is keyed by
    ``config.seed`` together with the grid index, trial index, method
    index and draw index.  ``workers > 1`` fans grid cells out to a
    process pool; the reduction is a deterministic sort, independent of
    completion order.  A cell that fails outright is preserved as
    placeholder rows plus an entry in ``cell_errors``.
    """
    indices = list(range(len(config.grid)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_safely, [config] * len(indices), indices))
    else:
        results = [_run_cell_safely(config, gi) for gi in indices]
    rows = [row for chunk, _ in results for row in chunk]
    errors = [err for _, err in results if err is not None]
    order = {m.name: i for i, m in enumerate(config.methods)}
    rows.sort(key=lambda r: (r["value"], order.get(r["method"], 99)))
    return ResultTable(name=config.name, rows=rows, cell_errors=errors)
