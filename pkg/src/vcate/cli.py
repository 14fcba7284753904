"""Command-line interface: estimation on CSV data, homogeneity testing, and
simulation presets.

Configuration lives in a YAML file (see README for the full schema); any
command-line flag overrides the corresponding file value.  Reports are JSON
with sorted keys and seeded randomness throughout, so identical configs
produce byte-identical outputs.  Exit codes: 0 ok, 2 configuration error,
3 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .data import Dataset, make_folds, validate_dataset
from .errors import ConfigError, ParseError, VcateError
from .inference import (
    ConfidenceInterval,
    crump_statistic,
    degenerate_aware_ci,
    homogeneity_test,
    invert_fold,
    multifold_ci,
    sqrt_ci,
)
from .multistep import ensemble_vcate, fold_estimate
from .nuisance import fit_nuisance
from .simulation import ExperimentCell, SimulationDesign, run_experiment
from .welfare import welfare_bound_general, welfare_bound_simple

VALID_UNITS = ("variance", "sd", "sd_normalized")
VALID_FIRST_STAGE = ("lasso", "ols")


@dataclass
class RunConfig:
    """Validated settings for the estimate/test commands."""

    input: str
    output: str
    outcome: str
    treatment: str
    covariates: list[str] | str
    propensity: str | None = None
    propensity_value: float | None = None
    cluster: str | None = None
    folds: int = 2
    splits: int = 20
    alpha: float = 0.05
    first_stage: str = "lasso"
    first_stage_cv_folds: int = 10
    seed: int = 0
    units: str = "sd_normalized"
    overlap_delta: float = 0.01
    label: str = "estimate"
    welfare_output: str | None = None

    def validate(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.splits < 1:
            raise ConfigError(f"splits must be >= 1, got {self.splits}")
        if self.units not in VALID_UNITS:
            raise ConfigError(f"units must be one of {VALID_UNITS}, got {self.units!r}")
        if self.first_stage not in VALID_FIRST_STAGE:
            raise ConfigError(
                f"first_stage must be one of {VALID_FIRST_STAGE}, got {self.first_stage!r}"
            )
        if (self.propensity is None) == (self.propensity_value is None):
            raise ConfigError("exactly one of propensity / propensity_value is required")
        if not self.input:
            raise ConfigError("input CSV path is required")
        if not self.output:
            raise ConfigError("output report path is required")


def _load_yaml(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return raw


def build_run_config(file_values: dict, overrides: dict) -> RunConfig:
    """Merge config-file values with CLI overrides (overrides win)."""
    values = dict(file_values)
    columns = values.pop("columns", {}) or {}
    if not isinstance(columns, dict):
        raise ConfigError("'columns' must be a mapping")
    for key in ("outcome", "treatment", "covariates", "propensity", "cluster"):
        if key in columns:
            values[key] = columns[key]
    if "propensity_value" in columns:
        values["propensity_value"] = columns["propensity_value"]
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = [k for k in ("input", "output", "outcome", "treatment", "covariates") if k not in values]
    if missing:
        raise ConfigError(f"missing required config keys: {missing}")
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def load_dataset(cfg: RunConfig) -> tuple[Dataset, dict]:
    """Read the CSV, drop incomplete rows, and build the validated dataset."""
    try:
        df = pd.read_csv(cfg.input)
    except OSError as exc:
        raise ParseError(f"cannot read {cfg.input}: {exc}") from exc
    except Exception as exc:  # malformed CSV
        raise ParseError(f"cannot parse {cfg.input}: {exc}") from exc

    if cfg.covariates == "rest":
        bound = {cfg.outcome, cfg.treatment, cfg.propensity, cfg.cluster}
        covariates = [c for c in df.columns if c not in bound]
    else:
        covariates = list(cfg.covariates)
    needed = [cfg.outcome, cfg.treatment, *covariates]
    if cfg.propensity is not None:
        needed.append(cfg.propensity)
    if cfg.cluster is not None:
        needed.append(cfg.cluster)
    for col in needed:
        if col not in df.columns:
            raise ParseError(f"column {col!r} not found in {cfg.input}")

    sub = df[needed].copy()
    complete = sub.notna().all(axis=1)
    dropped = int((~complete).sum())
    sub = sub.loc[complete]
    numeric_cols = [c for c in needed if c != cfg.cluster]
    for col in numeric_cols:
        converted = pd.to_numeric(sub[col], errors="coerce")
        bad = converted.isna() & sub[col].notna()
        if bad.any():
            row = int(bad.idxmax())
            raise ParseError(f"non-numeric value in column {col!r} at input row {row}")
        sub[col] = converted

    pscore = (
        sub[cfg.propensity].to_numpy(dtype=float)
        if cfg.propensity is not None
        else np.full(len(sub), float(cfg.propensity_value))
    )
    cluster = None
    if cfg.cluster is not None:
        codes, _ = pd.factorize(sub[cfg.cluster])
        cluster = codes.astype(np.int64)
    ds = Dataset(
        y=sub[cfg.outcome].to_numpy(dtype=float),
        d=sub[cfg.treatment].to_numpy(dtype=float),
        x=sub[covariates].to_numpy(dtype=float),
        pscore=pscore,
        cluster_id=cluster,
    )
    validate_dataset(ds, cfg.overlap_delta)
    meta = {"n_used": ds.n, "n_dropped": dropped, "covariates": covariates}
    return ds, meta


def _ci_pair(ci: ConfidenceInterval) -> list[float]:
    return [ci.lo, ci.hi]


def _units_block(value_var: float, var0: float) -> dict:
    return {
        "variance": value_var,
        "sd": float(np.sqrt(value_var)),
        # undefined when the control arm shows no outcome variation
        "sd_normalized": float(np.sqrt(value_var / var0)) if var0 > 0 else None,
    }


def _analyze(cfg: RunConfig, ds: Dataset, meta: dict) -> dict:
    """Shared split/fold machinery behind the estimate and test commands."""
    fold_records = []
    half_cis: list[ConfidenceInterval] = []
    ensembles = []
    degenerate_count = 0
    for split in range(cfg.splits):
        plan = make_folds(ds.n, cfg.folds, cfg.seed, ds.cluster_id, split_id=split)
        estimates = []
        for k in range(cfg.folds):
            nm = fit_nuisance(
                ds, plan, k, method=cfg.first_stage, cv_folds=cfg.first_stage_cv_folds
            )
            fe = fold_estimate(ds, plan, k, nm)
            estimates.append(fe)
            record = {
                "split": split,
                "fold": k,
                "n_k": fe.n_k,
                "v_x": fe.v_x,
                "v_tau": fe.v_tau,
                "tau_bar": fe.tau_bar,
                "degenerate": fe.degenerate,
            }
            if fe.degenerate:
                degenerate_count += 1
                ci_full = degenerate_aware_ci(fe, cfg.alpha)
                ci_half = degenerate_aware_ci(fe, cfg.alpha / 2.0)
            else:
                record["omega"] = [list(map(float, row)) for row in fe.omega_hat]
                both = invert_fold(fe, (cfg.alpha, cfg.alpha / 2.0))
                ci_full, ci_half = both[cfg.alpha], both[cfg.alpha / 2.0]
            ht = homogeneity_test(fe, cfg.alpha)
            record["ci"] = _ci_pair(ci_full)
            record["ci_half_level"] = _ci_pair(ci_half)
            record["homogeneity_statistic"] = ht.statistic
            record["homogeneity_pvalue"] = ht.pvalue
            record["crump_statistic"] = crump_statistic(fe)
            fold_records.append(record)
            half_cis.append(ci_half)
        ensembles.append(ensemble_vcate(estimates))

    multifold = multifold_ci(half_cis, cfg.alpha)
    point = float(np.median(ensembles))
    d, y, p = ds.d, ds.y, ds.pscore
    ate = float(np.mean(d * y / p - (1.0 - d) * y / (1.0 - p)))
    control = y[d == 0.0]
    var0 = float(control.var(ddof=1))
    return {
        "meta": meta,
        "alpha": cfg.alpha,
        "seed": cfg.seed,
        "folds": cfg.folds,
        "splits": cfg.splits,
        "first_stage": cfg.first_stage,
        "clustered": cfg.cluster is not None,
        "ate": ate,
        "control_outcome_variance": var0,
        "ensembles_per_split": ensembles,
        "point_estimate": _units_block(point, var0),
        "multifold_ci": {
            "variance": _ci_pair(multifold),
            "sd": _ci_pair(sqrt_ci(multifold)),
            "sd_normalized": [
                float(np.sqrt(multifold.lo / var0)),
                float(np.sqrt(multifold.hi / var0)),
            ] if var0 > 0 else None,
        },
        "degenerate_folds": degenerate_count,
        "total_folds": cfg.splits * cfg.folds,
        "fold_records": fold_records,
        "_point_variance": point,
    }


def cmd_estimate(cfg: RunConfig) -> dict:
    """Estimate the effect variance and write the JSON report."""
    ds, meta = load_dataset(cfg)
    if ds.n < 2 * cfg.folds:
        raise ParseError(
            f"only {ds.n} complete rows; need at least {2 * cfg.folds}"
        )
    report = _analyze(cfg, ds, meta)
    point = report.pop("_point_variance")
    var0 = report["control_outcome_variance"]
    report["report_units"] = cfg.units
    report["welfare_bounds"] = {
        "raw": {
            "simple": float(welfare_bound_simple(point)),
            "general": float(welfare_bound_general(report["ate"], point)),
        },
    }
    if var0 > 0:
        ate_norm = report["ate"] / float(np.sqrt(var0))
        vcate_norm = point / var0
        report["welfare_bounds"]["normalized"] = {
            "simple": float(welfare_bound_simple(vcate_norm)),
            "general": float(welfare_bound_general(ate_norm, vcate_norm)),
        }
    _write_json(cfg.output, report)
    if cfg.welfare_output and var0 > 0:
        _write_welfare_csv(
            cfg.welfare_output, cfg.label, ate_norm, float(np.sqrt(vcate_norm)),
            report["welfare_bounds"]["normalized"],
        )
    return report


def cmd_test(cfg: RunConfig) -> dict:
    """Homogeneity test report: per-fold statistics and the multifold decision."""
    ds, meta = load_dataset(cfg)
    if ds.n < 2 * cfg.folds:
        raise ParseError(f"only {ds.n} complete rows; need at least {2 * cfg.folds}")
    report = _analyze(cfg, ds, meta)
    report.pop("_point_variance")
    lo = report["multifold_ci"]["variance"][0]
    report["homogeneity"] = {
        "multifold_reject": bool(lo > 0.0),
        "fold_pvalues": [r["homogeneity_pvalue"] for r in report["fold_records"]],
        "fold_statistics": [r["homogeneity_statistic"] for r in report["fold_records"]],
        "crump_statistics": [r["crump_statistic"] for r in report["fold_records"]],
    }
    _write_json(cfg.output, report)
    return report


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_welfare_csv(path, label, ate_norm, sd_norm, bounds) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "ate", "sqrt_vcate", "bound_simple", "bound_general"])
        writer.writerow([
            label, repr(float(ate_norm)), repr(float(sd_norm)),
            repr(float(bounds["simple"])), repr(float(bounds["general"])),
        ])


# ---------------------------------------------------------------------------
# simulation presets
# ---------------------------------------------------------------------------

def _grid_cells(name, v_taus, two_js, ns, nuisance, with_cis, K=2,
                estimators=("multistep", "twostep")) -> list[ExperimentCell]:
    cells = []
    for v in v_taus:
        for two_j in two_js:
            for n in ns:
                design = SimulationDesign(J=two_j // 2, V_tau=v, n=n, K=K)
                cells.append(ExperimentCell(
                    name=f"{name}_v{v}_p{two_j}_n{n}",
                    design=design, nuisance=nuisance,
                    estimators=estimators, with_cis=with_cis,
                ))
    return cells


def preset_cells(preset: str) -> tuple[list[ExperimentCell], int, bool]:
    """Cells, default replication count, and density flag for a named preset."""
    if preset == "fig1_density":
        return (
            _grid_cells("density", [0.0, 0.5, 1.0], [10, 40], [2500], "lasso", False),
            200, True,
        )
    if preset == "fig2_rmse":
        cells = _grid_cells("rmse", [0.0, 0.5, 1.0], [10], [500, 1000, 2500], "lasso", False)
        cells += _grid_cells(
            "rmse_oracle", [0.0, 0.5, 1.0], [10], [500, 1000, 2500], "oracle", False,
            estimators=("twostep",),
        )
        return cells, 200, False
    if preset == "fig3_small":
        return (
            _grid_cells("coverage", [0.0, 0.5, 1.0], [10], [2500], "ols", True),
            500, False,
        )
    if preset == "fig4_onesided":
        return (
            _grid_cells("onesided", [0.0, 0.01, 0.05, 0.1, 0.5, 1.0], [10], [2500], "ols", True),
            500, False,
        )
    if preset == "fig_power":
        n, K = 2500, 2
        n_k = n // K
        cells = [
            ExperimentCell(
                name=f"power_v{v}",
                design=SimulationDesign(J=5, V_tau=v / n_k, n=n, K=K),
                nuisance="fixed_score", with_cis=True,
            )
            for v in (0.0, 1.0, 4.0, 9.0)
        ]
        return cells, 2000, False
    raise ConfigError(f"unknown preset {preset!r}")


def cmd_simulate(values: dict) -> dict:
    """Run a preset or custom simulation grid and write CSV/JSON outputs."""
    import os

    out_dir = values.get("output_dir", "results")
    seed = int(values.get("seed", 0))
    alpha = float(values.get("alpha", 0.05))
    os.makedirs(out_dir, exist_ok=True)
    if "preset" in values and values["preset"]:
        cells, default_reps, density = preset_cells(values["preset"])
        stem = values["preset"]
    elif "grid" in values:
        grid = values["grid"]
        try:
            cells = _grid_cells(
                values.get("name", "custom"),
                [float(v) for v in grid["v_tau"]],
                [int(j) for j in grid["two_j"]],
                [int(n) for n in grid["n"]],
                values.get("nuisance", "lasso"),
                bool(values.get("with_cis", True)),
                K=int(values.get("K", 2)),
                estimators=tuple(values.get("estimators", ("multistep", "twostep"))),
            )
        except KeyError as exc:
            raise ConfigError(f"grid is missing key {exc}") from exc
        default_reps, density = 200, bool(values.get("density", False))
        stem = values.get("name", "custom")
    else:
        raise ConfigError("simulate needs either 'preset' or 'grid'")
    reps = int(values.get("reps", default_reps))
    report = run_experiment(
        cells, reps=reps, seed=seed, alpha=alpha, collect_density=density,
        lasso_cv_folds=int(values.get("lasso_cv_folds", 5)),
    )
    results_csv = os.path.join(out_dir, f"{stem}_results.csv")
    report.to_csv(results_csv)
    report.to_json(os.path.join(out_dir, f"{stem}_summary.json"))
    paths = {"results": results_csv}
    if density:
        density_csv = os.path.join(out_dir, f"{stem}_density.csv")
        report.density_to_csv(density_csv)
        paths["density"] = density_csv
    return paths


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="YAML config file")
    sub.add_argument("--input")
    sub.add_argument("--output")
    sub.add_argument("--outcome")
    sub.add_argument("--treatment")
    sub.add_argument("--covariates", help="comma-separated list, or 'rest'")
    sub.add_argument("--propensity")
    sub.add_argument("--propensity-value", type=float, dest="propensity_value")
    sub.add_argument("--cluster")
    sub.add_argument("--folds", type=int)
    sub.add_argument("--splits", type=int)
    sub.add_argument("--alpha", type=float)
    sub.add_argument("--first-stage", dest="first_stage", choices=VALID_FIRST_STAGE)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--units", choices=VALID_UNITS)
    sub.add_argument("--label")
    sub.add_argument("--welfare-output", dest="welfare_output")


def _run_overrides(args: argparse.Namespace) -> dict:
    keys = [
        "input", "output", "outcome", "treatment", "propensity",
        "propensity_value", "cluster", "folds", "splits", "alpha",
        "first_stage", "seed", "units", "label", "welfare_output",
    ]
    overrides = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "covariates", None) is not None:
        cov = args.covariates
        overrides["covariates"] = cov if cov == "rest" else [c.strip() for c in cov.split(",")]
    return overrides


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="vcate",
        description="Effect-variance estimation with boundary-valid confidence intervals",
    )
    parser.add_argument("--version", action="version", version=f"vcate {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("estimate", "test"):
        sub = subs.add_parser(name)
        _add_run_flags(sub)
    sim = subs.add_parser("simulate")
    sim.add_argument("--config", help="YAML config file")
    sim.add_argument("--preset")
    sim.add_argument("--reps", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--output-dir", dest="output_dir")
    args = parser.parse_args(argv)

    try:
        if args.command in ("estimate", "test"):
            cfg = build_run_config(_load_yaml(args.config), _run_overrides(args))
            if args.command == "estimate":
                cmd_estimate(cfg)
            else:
                cmd_test(cfg)
        else:
            values = _load_yaml(args.config)
            for key in ("preset", "reps", "seed", "alpha", "output_dir"):
                val = getattr(args, key, None)
                if val is not None:
                    values[key] = val
            cmd_simulate(values)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VcateError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
