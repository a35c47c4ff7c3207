"""Experiment families: case study, sweeps, CSV pipeline, verification.

Every experiment resolves a plain key-value config into a deterministic list
of single runs, executes them (optionally across worker processes; runs are
independent), and writes a sorted metrics CSV plus SVG figures whose numbers
are embedded in the figure files. A resolved-config manifest is written next
to the outputs so any run can be reproduced byte-for-byte from it.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import datagen
from .datagen import (
    CaseStudyDgp,
    MsmDgp,
    TabularDataset,
    gen_rct_outcomes,
    inject_confounding,
    load_csv,
    split_rct_by_covariate,
    standardize,
)
from .evaluation import MetricsRecord, factual_error, sqrt_pehe, write_metrics_csv
from .figures import FigureSpec, Series, write_svg
from .trainer import TrainConfig, predict_potential_outcomes, train
from .verify import format_report, run_all_checks

SWEEP_METHODS = ("baseline", "mb", "pb", "mb+pb")
ORACLE_METHODS = ("rct-oracle", "obs-oracle")

EVAL_SAMPLES = 2000
HELDOUT_FRACTION = 0.2


class ConfigError(ValueError):
    pass


@dataclass
class RunSpec:
    """One fully determined training run inside an experiment."""

    kind: str  # "case-study" | "msm"
    method: str  # training method or oracle label
    seed: int
    n_obs: int
    n_rct: int
    gamma: Optional[float] = None
    rct_treated_prob: float = 0.5
    train_overrides: dict = field(default_factory=dict)

    @property
    def run_id(self) -> str:
        g = "" if self.gamma is None else f"-g{self.gamma:g}"
        return (
            f"{self.kind}{g}-no{self.n_obs}-nr{self.n_rct}-{self.method}-s{self.seed}"
        )


def _dgp_for(spec: RunSpec):
    if spec.kind == "case-study":
        return CaseStudyDgp()
    if spec.kind == "msm":
        return MsmDgp(spec.gamma if spec.gamma is not None else 1.0)
    raise ConfigError(f"unknown DGP kind {spec.kind!r}")


def _randomize_treatment(ds: TabularDataset, seed: int) -> TabularDataset:
    """Rewrite T ~ Ber(1/2) independently of everything; recompute Y from the
    oracle potential outcomes. Yields an unconfounded RCT-with-covariates set."""
    rng = np.random.default_rng(seed)
    t = (rng.uniform(size=ds.n) < 0.5).astype(np.float64)
    y = t * ds.oracle.y1 + (1.0 - t) * ds.oracle.y0
    return TabularDataset(ds.x, t, y, ds.oracle)


def execute_run(spec: RunSpec) -> MetricsRecord:
    """Train one model per the spec and evaluate PEHE + held-out factual MSE."""
    master = np.random.SeedSequence(spec.seed, spawn_key=(997,))
    data_seed, rct_seed, eval_seed, split_seed, oracle_seed = (
        int(s.generate_state(1)[0]) for s in master.spawn(5)
    )

    dgp = _dgp_for(spec)
    if spec.method == "obs-oracle":
        if spec.kind != "msm":
            raise ConfigError("obs-oracle is defined for the msm DGP only")
        dgp = MsmDgp(spec.gamma if spec.gamma is not None else 1.0, confounded=False)

    obs = dgp.sample(spec.n_obs, data_seed)
    if spec.method == "rct-oracle":
        obs = _randomize_treatment(obs, oracle_seed)

    method = "baseline" if spec.method in ORACLE_METHODS else spec.method
    rct = None
    if method != "baseline":
        rct = gen_rct_outcomes(dgp, spec.n_rct, spec.rct_treated_prob, rct_seed)

    # synthetic runs train on every observational row; the factual error is
    # measured on a fresh draw from the same law instead of a held-out split
    n_held = max(2, int(round(HELDOUT_FRACTION * obs.n)))
    heldout = dgp.sample(n_held, split_seed)
    if spec.method == "rct-oracle":
        heldout = _randomize_treatment(heldout, split_seed)

    overrides = dict(spec.train_overrides)
    # Algorithm 1 is full batch; mini-batches are an explicit override
    overrides.setdefault("batch_size", obs.n)
    config = TrainConfig(method=method, seed=spec.seed, **overrides)
    model = train(obs, rct, config)

    eval_dgp = _dgp_for(spec)  # PEHE always against the true confounded DGP law
    eval_rng = np.random.default_rng(eval_seed)
    x_eval = eval_dgp.sample_covariates(EVAL_SAMPLES, eval_rng)
    pehe = sqrt_pehe(model, x_eval, eval_dgp.true_cate(x_eval[:, 0]), seed=spec.seed)
    f_mse = factual_error(model, heldout, seed=spec.seed)

    return MetricsRecord(
        run_id=spec.run_id,
        method=spec.method,
        dgp=spec.kind,
        gamma=spec.gamma,
        n_obs=spec.n_obs,
        n_rct=spec.n_rct,
        seed=spec.seed,
        sqrt_pehe=pehe,
        factual_mse=f_mse,
    )


def execute_all(specs: list[RunSpec], workers: int = 1) -> list[MetricsRecord]:
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(execute_run, specs))
    else:
        records = [execute_run(s) for s in specs]
    return sorted(records, key=lambda r: r.run_id)


# ------------------------------------------------------------------ config


_DEFAULTS = {
    "seeds": "0,1,2,3,4",
    "workers": "1",
    "n_obs": "1000",
    "n_rct": "100",
    "rct_treated_prob": "0.5",
    "epochs": "2000",
    "batch_size": "",  # empty = full batch on synthetic runs (Algorithm 1)
    "out_dir": "",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse the `key = value` config format; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: Optional[str], overrides: dict[str, str]) -> dict[str, str]:
    cfg = dict(_DEFAULTS)
    if path:
        with open(path, encoding="utf-8") as fh:
            cfg.update(parse_config_text(fh.read()))
    cfg.update(overrides)
    return cfg


def _int_list(cfg, key):
    try:
        return [int(v) for v in str(cfg[key]).split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _float_list(cfg, key):
    try:
        return [float(v) for v in str(cfg[key]).split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _train_overrides(cfg) -> dict:
    out = {}
    for key, cast in (
        ("epochs", int),
        ("batch_size", int),
        ("learning_rate", float),
        ("noise_dim", int),
        ("mc_samples", int),
        ("alpha_start", float),
        ("alpha_end", float),
        ("ramp_start_epoch", int),
        ("ramp_end_epoch", int),
        ("inner_steps_low", int),
        ("inner_steps_high", int),
    ):
        if key in cfg and str(cfg[key]) != "":
            try:
                out[key] = cast(cfg[key])
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
    return out


def _out_dir(cfg, default_name) -> str:
    root = os.environ.get("CATEBAL_OUT", ".")
    out = cfg.get("out_dir") or os.path.join(root, default_name)
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(out_dir, cfg):
    with open(os.path.join(out_dir, "manifest.cfg"), "w", encoding="utf-8") as fh:
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")


def _median_by(records, key_fn, methods):
    """method -> {key -> median sqrt_pehe}"""
    out = {}
    for rec in records:
        out.setdefault(rec.method, {}).setdefault(key_fn(rec), []).append(rec.sqrt_pehe)
    return {
        m: {k: float(np.median(v)) for k, v in sorted(by_key.items())}
        for m, by_key in out.items()
        if m in methods
    }


# ------------------------------------------------------------- experiments


def run_case_study(cfg: dict[str, str]) -> tuple[list[MetricsRecord], str]:
    out_dir = _out_dir(cfg, "case_study")
    seeds = _int_list(cfg, "seeds")
    methods = [m.strip() for m in cfg.get("methods", "baseline,mb,pb,mb+pb").split(",")]
    overrides = _train_overrides(cfg)
    specs = [
        RunSpec(
            "case-study",
            method,
            seed,
            int(cfg["n_obs"]),
            int(cfg["n_rct"]),
            rct_treated_prob=float(cfg["rct_treated_prob"]),
            train_overrides=overrides,
        )
        for method in methods
        for seed in seeds
    ]
    records = execute_all(specs, int(cfg["workers"]))
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), records)
    _write_manifest(out_dir, cfg)
    _case_study_figures(out_dir, specs, methods, seeds[0])
    return records, out_dir


def _case_study_figures(out_dir, specs, methods, figure_seed):
    """Predicted-vs-true overlays for the first seed of each method."""
    dgp = CaseStudyDgp()
    grid = np.linspace(0.4, 1.6, 61).reshape(-1, 1)
    curves = {}
    for spec in specs:
        if spec.seed != figure_seed:
            continue
        rec_model = _retrain_for_figure(spec)
        curves[spec.method] = (
            predict_potential_outcomes(rec_model, grid, 0, seed=figure_seed),
            predict_potential_outcomes(rec_model, grid, 1, seed=figure_seed),
        )
    gx = list(grid[:, 0])
    for t in (0, 1):
        fig = FigureSpec(
            f"Conditional potential outcome, arm t={t}", "x", f"E[Y{t} | X=x]"
        )
        fig.series.append(
            Series("truth", gx, list(dgp.conditional_mean(t, grid[:, 0])), dashed=True)
        )
        for method in methods:
            if method in curves:
                fig.series.append(Series(method, gx, list(curves[method][t])))
        write_svg(os.path.join(out_dir, f"outcome_t{t}.svg"), fig)
    fig = FigureSpec("CATE estimates vs truth", "x", "tau(x)")
    fig.series.append(Series("truth", gx, list(dgp.true_cate(grid[:, 0])), dashed=True))
    for method in methods:
        if method in curves:
            fig.series.append(
                Series(method, gx, list(curves[method][1] - curves[method][0]))
            )
    write_svg(os.path.join(out_dir, "cate.svg"), fig)


# retrained figure models are cached per process to avoid duplicate work
_FIGURE_CACHE: dict[str, object] = {}


def _retrain_for_figure(spec: RunSpec):
    key = spec.run_id
    if key not in _FIGURE_CACHE:
        master = np.random.SeedSequence(spec.seed, spawn_key=(997,))
        data_seed, rct_seed, _, split_seed, _ = (
            int(s.generate_state(1)[0]) for s in master.spawn(5)
        )
        dgp = _dgp_for(spec)
        obs = dgp.sample(spec.n_obs, data_seed)
        rct = None
        if spec.method not in ("baseline",) + ORACLE_METHODS:
            rct = gen_rct_outcomes(dgp, spec.n_rct, spec.rct_treated_prob, rct_seed)
        method = "baseline" if spec.method in ORACLE_METHODS else spec.method
        overrides = dict(spec.train_overrides)
        overrides.setdefault("batch_size", obs.n)
        config = TrainConfig(method=method, seed=spec.seed, **overrides)
        _FIGURE_CACHE[key] = train(obs, rct, config)
    return _FIGURE_CACHE[key]


def run_gamma_sweep(cfg: dict[str, str]) -> tuple[list[MetricsRecord], str]:
    out_dir = _out_dir(cfg, "gamma_sweep")
    seeds = _int_list(cfg, "seeds")
    log_gammas = _float_list({**{"log_gammas": "0,1,2,3,4,5"}, **cfg}, "log_gammas")
    methods = [
        m.strip()
        for m in cfg.get("methods", ",".join(SWEEP_METHODS + ORACLE_METHODS)).split(",")
    ]
    overrides = _train_overrides(cfg)
    specs = [
        RunSpec(
            "msm",
            method,
            seed,
            int(cfg["n_obs"]),
            int(cfg["n_rct"]),
            gamma=float(np.exp(lg)),
            rct_treated_prob=float(cfg["rct_treated_prob"]),
            train_overrides=overrides,
        )
        for lg in log_gammas
        for method in methods
        for seed in seeds
    ]
    records = execute_all(specs, int(cfg["workers"]))
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), records)
    _write_manifest(out_dir, cfg)

    fig = FigureSpec("Estimation error vs confounding degree", "log(gamma)", "sqrt PEHE")
    by_method = {}
    for rec in records:
        by_method.setdefault(rec.method, {}).setdefault(
            round(float(np.log(rec.gamma)), 6), []
        ).append(rec.sqrt_pehe)
    for method in methods:
        pts = sorted(by_method.get(method, {}).items())
        if not pts:
            continue
        xs = [p[0] for p in pts]
        means = [float(np.mean(p[1])) for p in pts]
        sds = [float(np.std(p[1])) for p in pts]
        fig.series.append(Series(method, xs, means, band=sds))
    write_svg(os.path.join(out_dir, "gamma_sweep.svg"), fig)
    return records, out_dir


def run_rct_size_sweep(cfg: dict[str, str]) -> tuple[list[MetricsRecord], str]:
    out_dir = _out_dir(cfg, "rct_size_sweep")
    seeds = _int_list(cfg, "seeds")
    n_rcts = _int_list({**{"n_rcts": "25,50,100"}, **cfg}, "n_rcts")
    n_obs_grid = _int_list({**{"n_obs_grid": "1000,2000"}, **cfg}, "n_obs_grid")
    log_gamma = float(cfg.get("log_gamma", "2.0"))
    methods = [
        m.strip() for m in cfg.get("methods", "baseline,mb+pb,rct-oracle").split(",")
    ]
    overrides = _train_overrides(cfg)
    gamma = float(np.exp(log_gamma))
    specs = []
    for n_rct in n_rcts:
        for n_obs in n_obs_grid:
            for method in methods:
                # the no-RCT baseline and the covariate RCT oracle are size
                # matched: they see n_obs + n_rct samples
                size = n_obs + n_rct if method in ("baseline", "rct-oracle") else n_obs
                for seed in seeds:
                    specs.append(
                        RunSpec(
                            "msm",
                            method,
                            seed,
                            size,
                            n_rct,
                            gamma=gamma,
                            rct_treated_prob=float(cfg["rct_treated_prob"]),
                            train_overrides=overrides,
                        )
                    )
    records = execute_all(specs, int(cfg["workers"]))
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), records)
    _write_manifest(out_dir, cfg)

    for n_rct in n_rcts:
        fig = FigureSpec(
            f"Estimation error vs observational size (n_rct={n_rct})",
            "n_obs",
            "sqrt PEHE",
        )
        by_method = {}
        for rec in records:
            if rec.n_rct != n_rct:
                continue
            base = rec.n_obs - (n_rct if rec.method in ("baseline", "rct-oracle") else 0)
            by_method.setdefault(rec.method, {}).setdefault(base, []).append(rec.sqrt_pehe)
        for method in methods:
            pts = sorted(by_method.get(method, {}).items())
            if not pts:
                continue
            fig.series.append(
                Series(
                    method,
                    [p[0] for p in pts],
                    [float(np.mean(p[1])) for p in pts],
                    band=[float(np.std(p[1])) for p in pts],
                )
            )
        write_svg(os.path.join(out_dir, f"rct_size_{n_rct}.svg"), fig)
    return records, out_dir


def _parse_rule(text: str):
    """Covariate split rules: 'ge:V', 'le:V', or 'eq:V'."""
    try:
        op, val = text.split(":", 1)
        val = float(val)
    except ValueError:
        raise ConfigError(f"bad rct_rule {text!r}; expected op:value") from None
    if op == "ge":
        return lambda col: col >= val
    if op == "le":
        return lambda col: col <= val
    if op == "eq":
        return lambda col: col == val
    raise ConfigError(f"unknown rule op {op!r}")


def run_csv(cfg: dict[str, str]) -> tuple[list[MetricsRecord], str]:
    """Generic pipeline: covariate RCT split, confounding injection,
    standardization, training, factual evaluation. PEHE needs an oracle and
    is reported as unavailable for plain CSV data."""
    out_dir = _out_dir(cfg, "csv_run")
    if not cfg.get("csv_path"):
        raise ConfigError("csv-run requires csv_path")
    dataset = load_csv(cfg["csv_path"])
    n_rct = int(cfg.get("n_rct", "50"))
    c = float(cfg.get("c", "0"))
    seeds = _int_list(cfg, "seeds")
    methods = [m.strip() for m in cfg.get("methods", "baseline,mb+pb").split(",")]
    overrides = _train_overrides(cfg)

    records = []
    for seed in seeds:
        rule = _parse_rule(cfg.get("rct_rule", "ge:0"))
        rct, pool = split_rct_by_covariate(
            dataset, int(cfg.get("rct_column", "0")), rule, n_rct, seed=seed
        )
        confounded = inject_confounding(pool, c)
        confounded, std = standardize(confounded)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(31,)))
        order = rng.permutation(confounded.n)
        n_held = max(1, int(round(HELDOUT_FRACTION * confounded.n)))
        heldout = confounded.subset(order[:n_held])
        train_set = confounded.subset(order[n_held:])
        for method_label in methods:
            method = "baseline" if method_label in ORACLE_METHODS else method_label
            config = TrainConfig(method=method, seed=seed, **overrides)
            model = train(train_set, None if method == "baseline" else rct, config)
            records.append(
                MetricsRecord(
                    run_id=f"csv-no{train_set.n}-nr{n_rct}-{method_label}-s{seed}",
                    method=method_label,
                    dgp="csv",
                    gamma=None,
                    n_obs=train_set.n,
                    n_rct=n_rct,
                    seed=seed,
                    sqrt_pehe=None,  # no CATE oracle in plain CSV data
                    factual_mse=factual_error(model, heldout, seed=seed),
                )
            )
    records.sort(key=lambda r: r.run_id)
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), records)
    _write_manifest(out_dir, cfg)
    return records, out_dir


def run_verify(cfg: dict[str, str]) -> tuple[bool, str]:
    results = run_all_checks(int(cfg.get("gradient_configs", "100")))
    report = format_report(results)
    out_dir = _out_dir(cfg, "verify")
    with open(os.path.join(out_dir, "verify_report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report + "\n")
    return all(r.passed for r in results), report
