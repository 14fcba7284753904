"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np

from vcate.data import make_folds
from vcate.multistep import FoldEstimate, fold_estimate
from vcate.nuisance import fit_nuisance
from vcate.simulation import SimulationDesign, gen_dataset, oracle_nuisance


def fold_from_design(
    design: SimulationDesign,
    seed: int,
    k: int = 0,
    method: str = "oracle",
) -> FoldEstimate:
    """One fold estimate from a simulated dataset."""
    ds = gen_dataset(design, seed)
    plan = make_folds(design.n, design.K, seed + 1)
    if method == "oracle":
        nm = fit_nuisance(ds, plan, k, method="oracle", oracle=oracle_nuisance(design))
    else:
        nm = fit_nuisance(ds, plan, k, method=method)
    return fold_estimate(ds, plan, k, nm)


def mixed_design(rng: np.random.Generator) -> tuple[SimulationDesign, str]:
    """A random design/nuisance pair producing non-degenerate folds."""
    v_tau = float(rng.choice([0.05, 0.3, 1.0, 2.0]))
    j = int(rng.choice([2, 5, 10]))
    n = int(rng.choice([200, 400, 900]))
    hetero = bool(rng.random() < 0.5)
    design = SimulationDesign(
        J=j, V_tau=v_tau, n=n,
        sigma_tilde2=0.21 if hetero else 0.7,
    )
    method = str(rng.choice(["oracle", "ols"]))
    return design, method
