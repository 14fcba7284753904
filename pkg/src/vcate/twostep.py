"""Benchmark two-step debiased estimator built on the efficient influence function.

The influence function is degenerate when the conditional effect is constant,
which is exactly why naive normal-critical-value intervals break down at the
boundary; this module exists to document that contrast against the multistep
estimator.  The two-step point estimate may be negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.stats import norm

from .data import Dataset, FoldPlan
from .nuisance import NuisanceModel

__all__ = [
    "InfluenceEval",
    "NaiveInterval",
    "efficient_influence",
    "twostep_estimate",
    "twostep_naive_ci",
    "oracle_variance_bound",
]


@dataclass(frozen=True)
class InfluenceEval:
    """Per-observation influence values with their mean and sample variance."""

    phi: np.ndarray
    mean: float
    sample_var: float


@dataclass(frozen=True)
class NaiveInterval:
    """Symmetric normal interval; deliberately not truncated at zero."""

    lo: float
    hi: float
    alpha: float


def efficient_influence(y, d, tau, mu0, pscore, tau_av):
    """Efficient influence value(s) for the effect-variance functional.

    All arguments broadcast;  ``tau``, ``mu0`` are the nuisance values at the
    observation's covariates, ``pscore`` the known treatment probability and
    ``tau_av`` the average effect.  The first term is the squared centered
    effect; the second is the doubly robust correction, which vanishes in
    expectation when the nuisances are correct.
    """
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    tau = np.asarray(tau, dtype=float)
    mu0 = np.asarray(mu0, dtype=float)
    pscore = np.asarray(pscore, dtype=float)
    dev = tau - tau_av
    correction = d * (y - mu0 - tau) / pscore - (1.0 - d) * (y - mu0) / (1.0 - pscore)
    return dev**2 + 2.0 * dev * correction


def twostep_estimate(
    ds: Dataset, plan: FoldPlan, models: Mapping[int, NuisanceModel]
) -> InfluenceEval:
    """Cross-fitted mean of the plug-in influence function.

    Each observation is evaluated with the model fitted on its fold's
    complement; the average-effect nuisance is the full-sample mean of the
    cross-fitted effect predictions.
    """
    n = ds.n
    tau = np.empty(n)
    mu0 = np.empty(n)
    for k in range(plan.K):
        idx = plan.fold_indices(k)
        nm = models[k]
        tau[idx] = nm.predict_tau(ds.x[idx])
        mu0[idx] = nm.predict_mu0(ds.x[idx])
    tau_av = float(tau.mean())
    phi = efficient_influence(ds.y, ds.d, tau, mu0, ds.pscore, tau_av)
    return InfluenceEval(
        phi=phi, mean=float(phi.mean()), sample_var=float(phi.var(ddof=1))
    )


def twostep_naive_ci(
    estimate: float, sample_var: float, n: int, alpha: float
) -> NaiveInterval:
    """Normal-critical-value interval around the two-step estimate."""
    if sample_var < 0:
        raise ValueError(f"sample_var must be nonnegative, got {sample_var}")
    half = norm.ppf(1.0 - alpha / 2.0) * np.sqrt(sample_var / n)
    return NaiveInterval(lo=float(estimate - half), hi=float(estimate + half), alpha=alpha)


def oracle_variance_bound(design, n_draws: int = 400_000, seed: int = 0) -> float:
    """Monte Carlo value of the influence-function variance under a design.

    This is the semiparametric efficiency bound: no regular estimator can
    beat RMSE ~ sqrt(bound / n).  Zero when the design has no effect
    heterogeneity.
    """
    from .simulation import gen_dataset, oracle_nuisance  # local: avoids cycle

    if design.V_tau == 0.0:
        return 0.0
    draw = gen_dataset(design.with_n(n_draws), seed)
    oracle = oracle_nuisance(design)
    tau = oracle.tau(draw.x)
    mu0 = oracle.mu0(draw.x)
    phi = efficient_influence(draw.y, draw.d, tau, mu0, draw.pscore, design.tau)
    return float(phi.var(ddof=1))
