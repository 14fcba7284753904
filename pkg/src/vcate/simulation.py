"""Simulation designs with a closed-form true effect variance, plus drivers
for density, RMSE, coverage, and power studies.

The design draws two standard-normal covariate blocks with cross-block
correlation ``rho``, geometrically decaying coefficient profiles normalized
so the implied variances come out exactly, and (optionally heteroskedastic)
normal noise; the control-arm outcome variance is 1 under the defaults.
Replications derive independent seeds from ``(seed, cell, rep)`` so every
report is reproducible bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .data import Dataset, make_folds
from .errors import VcateError
from .inference import degenerate_aware_ci, invert_fold, multifold_ci
from .multistep import FoldEstimate, ensemble_vcate, fold_estimate
from .nuisance import fit_nuisance
from .twostep import twostep_estimate, twostep_naive_ci

__all__ = [
    "SimulationDesign",
    "OracleNuisance",
    "ExperimentCell",
    "ExperimentReport",
    "gen_dataset",
    "draw_outcomes",
    "true_vcate",
    "oracle_nuisance",
    "fixed_score_nuisance",
    "run_experiment",
]


@dataclass(frozen=True)
class SimulationDesign:
    """Data-generating process with known effect variance ``V_tau``.

    ``J`` covariates per block (2J total), decay rate ``decay`` for the
    geometric weight profile, ``V_mu`` baseline signal variance, ``tau`` the
    average effect, ``sigma2`` the total conditional outcome variance and
    ``sigma_tilde2`` its homoskedastic floor (setting them equal switches off
    heteroskedasticity).  Under the defaults the control outcome variance is
    ``V_mu + sigma2 = 1``.
    """

    J: int
    V_tau: float
    n: int
    K: int = 2
    rho: float = 0.5
    decay: float = 0.7
    V_mu: float = 0.3
    tau: float = 0.15
    sigma2: float = 0.7
    sigma_tilde2: float = 0.21
    c: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be positive")
        if self.V_tau < 0:
            raise ValueError("V_tau must be nonnegative")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if not 0.0 <= self.sigma_tilde2 <= self.sigma2:
            raise ValueError("need 0 <= sigma_tilde2 <= sigma2")
        w2 = self.weights() ** 2
        if abs(w2.sum() - 1.0) > 1e-12:
            raise AssertionError("weight profile does not sum to one")

    def weights(self) -> np.ndarray:
        """Geometric profile with unit sum of squares."""
        lam = self.decay
        j = np.arange(1, self.J + 1)
        return np.sqrt((1.0 - lam) / (1.0 - lam**self.J) * lam ** (j - 1))

    def beta0(self) -> np.ndarray:
        return self.weights() * np.sqrt(self.V_mu)

    def beta_tau(self) -> np.ndarray:
        return self.weights() * np.sqrt(self.V_tau)

    def kappa(self) -> np.ndarray:
        return self.weights() * np.sqrt(self.sigma2 - self.sigma_tilde2)

    def with_n(self, n: int) -> "SimulationDesign":
        return replace(self, n=n)


def true_vcate(design: SimulationDesign) -> float:
    """Closed-form effect variance of the design (the experiment oracle)."""
    return float(design.V_tau)


def _draw(design: SimulationDesign, rng: np.random.Generator):
    n, J = design.n, design.J
    a = rng.standard_normal((n, J))
    b = rng.standard_normal((n, J))
    x0 = a
    x1 = design.rho * a + np.sqrt(1.0 - design.rho**2) * b
    u0 = rng.standard_normal(n)
    u1 = rng.standard_normal(n)
    d = (rng.random(n) < 0.5).astype(float)
    beta0, beta_tau, kappa = design.beta0(), design.beta_tau(), design.kappa()
    base = design.c + x0 @ beta0
    sd0 = np.sqrt(design.sigma_tilde2 + (x0 @ kappa) ** 2)
    sd1 = np.sqrt(design.sigma_tilde2 + (x1 @ kappa) ** 2)
    y0 = base + u0 * sd0
    y1 = base + design.tau + x1 @ beta_tau + u1 * sd1
    return x0, x1, d, y0, y1


def gen_dataset(design: SimulationDesign, seed: int) -> Dataset:
    """One dataset from the design: y, d, 2J covariates, constant propensity 0.5."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x0, x1, d, y0, y1 = _draw(design, rng)
    y = d * y1 + (1.0 - d) * y0
    return Dataset(
        y=y, d=d, x=np.hstack([x0, x1]), pscore=np.full(design.n, 0.5)
    )


def draw_outcomes(design: SimulationDesign, seed: int):
    """Dataset plus both potential outcomes, for oracle-level checks."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x0, x1, d, y0, y1 = _draw(design, rng)
    ds = Dataset(
        y=d * y1 + (1.0 - d) * y0,
        d=d,
        x=np.hstack([x0, x1]),
        pscore=np.full(design.n, 0.5),
    )
    return ds, y0, y1


@dataclass(frozen=True)
class OracleNuisance:
    """True conditional means of a design, exposed as prediction callables.

    ``score_scale`` overrides the effect slope: ``None`` gives the true
    effect function, while a number fixes the effect-direction score at that
    scale regardless of the design's V_tau (used for local power studies,
    where the predictive direction must stay non-degenerate as the
    heterogeneity shrinks to zero).
    """

    design: SimulationDesign
    score_scale: float | None = None

    @property
    def tau_constant(self) -> bool:
        if self.score_scale is not None:
            return self.score_scale == 0.0
        return self.design.V_tau == 0.0

    def _slope(self) -> np.ndarray:
        if self.score_scale is not None:
            return self.design.weights() * self.score_scale
        return self.design.beta_tau()

    def mu0(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.design.c + x[:, : self.design.J] @ self.design.beta0()

    def tau(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.design.tau + x[:, self.design.J :] @ self._slope()

    def mu1(self, x: np.ndarray) -> np.ndarray:
        return self.mu0(x) + self.tau(x)


def oracle_nuisance(design: SimulationDesign) -> OracleNuisance:
    return OracleNuisance(design)


def fixed_score_nuisance(design: SimulationDesign, scale: float = 1.0) -> OracleNuisance:
    """Oracle arm means with a unit-variance effect direction of fixed scale."""
    return OracleNuisance(design, score_scale=scale)


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentCell:
    """One design/nuisance combination in an experiment grid."""

    name: str
    design: SimulationDesign
    nuisance: str = "lasso"  # lasso | ols | oracle | fixed_score
    estimators: tuple[str, ...] = ("multistep", "twostep")
    with_cis: bool = True


@dataclass
class ExperimentReport:
    """Per-cell metric rows plus optional density series, with CSV/JSON export."""

    rows: list[dict] = field(default_factory=list)
    density: list[dict] = field(default_factory=list)
    reps: int = 0
    seed: int = 0
    alpha: float = 0.05

    COLUMNS = [
        "cell", "estimator", "ci_method", "nuisance", "n", "K", "two_j",
        "v_tau_true", "reps", "failures", "mean_estimate", "bias", "rmse",
        "coverage", "coverage_se", "reject_rate", "below_rate",
        "mean_ci_length", "degenerate_rate", "seed",
    ]
    DENSITY_COLUMNS = ["cell", "estimator", "n", "two_j", "v_tau_true", "x", "density"]

    @staticmethod
    def _fmt(value) -> str:
        if value is None:
            return ""
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def _write_csv(self, path, columns, rows) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([self._fmt(row.get(col)) for col in columns])

    def to_csv(self, path) -> None:
        self._write_csv(path, self.COLUMNS, self.rows)

    def density_to_csv(self, path) -> None:
        self._write_csv(path, self.DENSITY_COLUMNS, self.density)

    def to_json(self, path) -> None:
        payload = {
            "reps": self.reps,
            "seed": self.seed,
            "alpha": self.alpha,
            "rows": self.rows,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _nuisance_for(cell: ExperimentCell, ds, plan, k, lasso_cv_folds: int):
    if cell.nuisance == "oracle":
        return fit_nuisance(ds, plan, k, method="oracle", oracle=oracle_nuisance(cell.design))
    if cell.nuisance == "fixed_score":
        return fit_nuisance(
            ds, plan, k, method="oracle", oracle=fixed_score_nuisance(cell.design)
        )
    return fit_nuisance(ds, plan, k, method=cell.nuisance, cv_folds=lasso_cv_folds)


def _replicate(cell: ExperimentCell, alpha: float, rep_seed: np.random.SeedSequence,
               lasso_cv_folds: int):
    """One replication: fold estimates, intervals, and the two-step benchmark."""
    data_seed, fold_seed = rep_seed.spawn(2)
    design = cell.design
    ds = gen_dataset(design, int(data_seed.generate_state(1)[0]))
    plan = make_folds(design.n, design.K, int(fold_seed.generate_state(1)[0]))
    models = {}
    folds: list[FoldEstimate] = []
    for k in range(design.K):
        nm = _nuisance_for(cell, ds, plan, k, lasso_cv_folds)
        models[k] = nm
        folds.append(fold_estimate(ds, plan, k, nm))
    out = {"folds": folds, "ensemble": ensemble_vcate(folds)}
    if cell.with_cis:
        fold_cis, half_cis = [], []
        for fe in folds:
            if fe.degenerate:
                fold_cis.append(degenerate_aware_ci(fe, alpha))
                half_cis.append(degenerate_aware_ci(fe, alpha / 2.0))
            else:
                both = invert_fold(fe, (alpha, alpha / 2.0))
                fold_cis.append(both[alpha])
                half_cis.append(both[alpha / 2.0])
        out["fold_cis"] = fold_cis
        out["multifold_ci"] = multifold_ci(half_cis, alpha)
    if "twostep" in cell.estimators:
        ev = twostep_estimate(ds, plan, models)
        out["twostep"] = ev
        out["twostep_ci"] = twostep_naive_ci(ev.mean, ev.sample_var, design.n, alpha)
    return out


def _coverage_row(base: dict, estimates, truths, ci_method, cover, lengths,
                  reject, below, degenerate, reps, failures, seed) -> dict:
    est = np.asarray(estimates, dtype=float)
    err = est - np.asarray(truths, dtype=float)
    row = dict(base)
    row.update(
        ci_method=ci_method,
        reps=reps,
        failures=failures,
        mean_estimate=float(est.mean()) if est.size else None,
        bias=float(err.mean()) if est.size else None,
        rmse=float(np.sqrt(np.mean(err**2))) if est.size else None,
        seed=seed,
    )
    if cover is not None and len(cover):
        p = float(np.mean(cover))
        row["coverage"] = p
        row["coverage_se"] = float(np.sqrt(max(p * (1 - p), 0.0) / len(cover)))
    if reject is not None and len(reject):
        row["reject_rate"] = float(np.mean(reject))
    if below is not None and len(below):
        row["below_rate"] = float(np.mean(below))
    if lengths is not None and len(lengths):
        row["mean_ci_length"] = float(np.mean(lengths))
    if degenerate is not None and len(degenerate):
        row["degenerate_rate"] = float(np.mean(degenerate))
    return row


def run_experiment(
    cells: Iterable[ExperimentCell],
    reps: int,
    seed: int,
    alpha: float = 0.05,
    collect_density: bool = False,
    density_bins: int = 60,
    lasso_cv_folds: int = 5,
) -> ExperimentReport:
    """Run every cell for ``reps`` replications and aggregate the metrics.

    Per-replication failures raise nothing: they are counted and reported as
    a failure rate.  The emitted CSV has one row per cell x estimator x
    interval method; see the README for the column schema.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    report = ExperimentReport(reps=reps, seed=seed, alpha=alpha)
    for cell_index, cell in enumerate(cells):
        truth = true_vcate(cell.design)
        outcomes = []
        failures = 0
        for rep in range(reps):
            rep_seed = np.random.SeedSequence(entropy=seed, spawn_key=(cell_index, rep))
            try:
                outcomes.append(_replicate(cell, alpha, rep_seed, lasso_cv_folds))
            except VcateError:
                failures += 1
        base = {
            "cell": cell.name,
            "nuisance": cell.nuisance,
            "n": cell.design.n,
            "K": cell.design.K,
            "two_j": 2 * cell.design.J,
            "v_tau_true": truth,
        }
        n_ok = len(outcomes)
        truths = [truth] * n_ok

        if "multistep" in cell.estimators:
            ens = [o["ensemble"] for o in outcomes]
            degenerate = [
                float(np.mean([fe.degenerate for fe in o["folds"]])) for o in outcomes
            ]
            mbase = dict(base, estimator="multistep")
            if cell.with_cis:
                single_cover = [
                    float(np.mean([ci.contains(truth) for ci in o["fold_cis"]]))
                    for o in outcomes
                ]
                single_len = [
                    float(np.mean([ci.length for ci in o["fold_cis"]])) for o in outcomes
                ]
                single_reject = [
                    float(np.mean([ci.lo > 0.0 for ci in o["fold_cis"]]))
                    for o in outcomes
                ]
                single_below = [
                    float(np.mean([truth < ci.lo for ci in o["fold_cis"]]))
                    for o in outcomes
                ]
                report.rows.append(_coverage_row(
                    mbase, ens, truths, "single_fold", single_cover, single_len,
                    single_reject, single_below, degenerate, reps, failures, seed,
                ))
                multi_cover = [o["multifold_ci"].contains(truth) for o in outcomes]
                multi_len = [o["multifold_ci"].length for o in outcomes]
                multi_reject = [o["multifold_ci"].lo > 0.0 for o in outcomes]
                multi_below = [truth < o["multifold_ci"].lo for o in outcomes]
                report.rows.append(_coverage_row(
                    mbase, ens, truths, "multifold", multi_cover, multi_len,
                    multi_reject, multi_below, degenerate, reps, failures, seed,
                ))
            else:
                report.rows.append(_coverage_row(
                    mbase, ens, truths, "none", None, None, None, None,
                    degenerate, reps, failures, seed,
                ))
            if collect_density and n_ok:
                report.density.extend(_density_rows(base, "multistep", ens, density_bins))

        if "twostep" in cell.estimators:
            ts = [o["twostep"].mean for o in outcomes]
            tbase = dict(base, estimator="twostep")
            if cell.with_cis:
                cover = [o["twostep_ci"].lo <= truth <= o["twostep_ci"].hi for o in outcomes]
                lengths = [o["twostep_ci"].hi - o["twostep_ci"].lo for o in outcomes]
                reject = [o["twostep_ci"].lo > 0.0 for o in outcomes]
                below = [truth < o["twostep_ci"].lo for o in outcomes]
                report.rows.append(_coverage_row(
                    tbase, ts, truths, "twostep_naive", cover, lengths, reject,
                    below, None, reps, failures, seed,
                ))
            else:
                report.rows.append(_coverage_row(
                    tbase, ts, truths, "none", None, None, None, None, None,
                    reps, failures, seed,
                ))
            if collect_density and n_ok:
                report.density.extend(_density_rows(base, "twostep", ts, density_bins))
    return report


def _density_rows(base: dict, estimator: str, estimates, bins: int) -> list[dict]:
    est = np.asarray(estimates, dtype=float)
    hist, edges = np.histogram(est, bins=bins, density=True)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return [
        {
            "cell": base["cell"],
            "estimator": estimator,
            "n": base["n"],
            "two_j": base["two_j"],
            "v_tau_true": base["v_tau_true"],
            "x": float(x),
            "density": float(dens),
        }
        for x, dens in zip(mids, hist)
    ]
