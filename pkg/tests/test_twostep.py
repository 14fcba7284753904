import numpy as np
import pytest

from vcate.data import FoldPlan, make_folds
from vcate.multistep import ensemble_vcate, fold_estimate
from vcate.nuisance import fit_nuisance
from vcate.simulation import SimulationDesign, gen_dataset, oracle_nuisance
from vcate.twostep import (
    efficient_influence,
    oracle_variance_bound,
    twostep_estimate,
    twostep_naive_ci,
)


def cross_fit_models(ds, plan, design=None, method="oracle"):
    models = {}
    for k in range(plan.K):
        if method == "oracle":
            models[k] = fit_nuisance(ds, plan, k, method="oracle",
                                     oracle=oracle_nuisance(design))
        else:
            models[k] = fit_nuisance(ds, plan, k, method=method)
    return models


class TestEfficientInfluence:
    def test_homogeneous_effect_gives_zero(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=30)
        d = (rng.random(30) < 0.5).astype(float)
        phi = efficient_influence(y, d, tau=0.4, mu0=rng.normal(size=30),
                                  pscore=0.5, tau_av=0.4)
        assert np.all(phi == 0.0)

    def test_noiseless_outcome_kills_correction(self):
        rng = np.random.default_rng(1)
        tau = rng.normal(size=40)
        mu0 = rng.normal(size=40)
        d = (rng.random(40) < 0.5).astype(float)
        y = mu0 + d * tau
        tau_av = float(tau.mean())
        phi = efficient_influence(y, d, tau, mu0, 0.5, tau_av)
        assert np.allclose(phi, (tau - tau_av) ** 2, atol=1e-12)

    def test_matches_symbolic_rederivation(self):
        import sympy as sp

        ys, ds_, ts, m0s, ps, tas = sp.symbols("y d t m0 p ta")
        expr = (ts - tas) ** 2 + 2 * (ts - tas) * (
            ds_ * (ys - m0s - ts) / ps - (1 - ds_) * (ys - m0s) / (1 - ps)
        )
        f = sp.lambdify((ys, ds_, ts, m0s, ps, tas), expr, "numpy")
        rng = np.random.default_rng(2)
        for _ in range(50):
            args = (
                rng.normal(), float(rng.integers(0, 2)), rng.normal(),
                rng.normal(), rng.uniform(0.1, 0.9), rng.normal(),
            )
            ours = efficient_influence(*args)
            assert float(ours) == pytest.approx(float(f(*args)), rel=1e-12)


class TestTwostepEstimate:
    def test_oracle_consistency(self):
        design = SimulationDesign(J=5, V_tau=1.0, n=2500)
        ds = gen_dataset(design, 4)
        plan = make_folds(2500, 2, 5)
        ev = twostep_estimate(ds, plan, cross_fit_models(ds, plan, design))
        se = np.sqrt(ev.sample_var / 2500)
        assert abs(ev.mean - 1.0) <= 3 * se

    def test_zero_under_homogeneity_with_oracle(self):
        # the centered effect is zero up to the rounding error of the mean,
        # so the influence values vanish at machine-noise scale
        design = SimulationDesign(J=5, V_tau=0.0, n=500)
        ds = gen_dataset(design, 6)
        plan = make_folds(500, 2, 7)
        ev = twostep_estimate(ds, plan, cross_fit_models(ds, plan, design))
        assert abs(ev.mean) <= 1e-12
        assert np.max(np.abs(ev.phi)) <= 1e-12

    def test_invariant_to_fold_relabeling(self):
        design = SimulationDesign(J=4, V_tau=0.5, n=400)
        ds = gen_dataset(design, 8)
        plan = make_folds(400, 2, 9)
        models = cross_fit_models(ds, plan, design)
        swapped_plan = FoldPlan(K=2, assignment=1 - plan.assignment)
        swapped_models = {0: models[1], 1: models[0]}
        a = twostep_estimate(ds, plan, models)
        b = twostep_estimate(ds, swapped_plan, swapped_models)
        assert a.mean == pytest.approx(b.mean, rel=1e-14)

    @pytest.mark.slow
    def test_boundary_distribution_wider_than_multistep_with_negatives(self):
        # estimated first stage at the boundary: the influence-function
        # average goes negative while the multistep estimate cannot
        design = SimulationDesign(J=5, V_tau=0.0, n=2500)
        two_step, multi = [], []
        for rep in range(150):
            ds = gen_dataset(design, 9000 + rep)
            plan = make_folds(2500, 2, rep)
            models = cross_fit_models(ds, plan, method="ols")
            two_step.append(twostep_estimate(ds, plan, models).mean)
            multi.append(ensemble_vcate(
                [fold_estimate(ds, plan, k, models[k]) for k in range(2)]
            ))
        two_step, multi = np.array(two_step), np.array(multi)
        assert (two_step < 0).any()
        assert (multi >= 0).all()
        assert two_step.std() > 2.0 * multi.std()


class TestNaiveCi:
    def test_arithmetic(self):
        ci = twostep_naive_ci(0.5, 1.0, 100, 0.05)
        assert ci.lo == pytest.approx(0.304, abs=5e-4)
        assert ci.hi == pytest.approx(0.696, abs=5e-4)

    def test_point_interval(self):
        ci = twostep_naive_ci(0.3, 0.0, 50, 0.05)
        assert ci.lo == ci.hi == 0.3

    def test_not_truncated_at_zero(self):
        ci = twostep_naive_ci(0.001, 1.0, 100, 0.05)
        assert ci.lo < 0.0


class TestOracleVarianceBound:
    def test_zero_at_boundary(self):
        design = SimulationDesign(J=4, V_tau=0.0, n=100)
        assert oracle_variance_bound(design) == 0.0

    @pytest.mark.slow
    def test_kurtosis_bound_dominates(self):
        # the closed-form cap with kappa^2 = 3 (Gaussian effect index) should
        # sit above the Monte Carlo variance of the influence function
        design = SimulationDesign(J=5, V_tau=1.0, n=100)
        value = oracle_variance_bound(design, n_draws=400_000, seed=1)
        big = gen_dataset(design.with_n(400_000), 2)
        oracle = oracle_nuisance(design)
        tau = oracle.tau(big.x)
        sig2_0 = design.sigma_tilde2 + (big.x[:, :5] @ design.kappa()) ** 2
        sig2_1 = design.sigma_tilde2 + (big.x[:, 5:] @ design.kappa()) ** 2
        kappa = np.sqrt(3.0)
        cap = kappa**2 * design.V_tau**2 + 4 * kappa * design.V_tau * np.sqrt(
            np.mean((sig2_1 / 0.5 + sig2_0 / 0.5) ** 2)
        )
        assert value <= cap

    @pytest.mark.slow
    def test_matches_oracle_estimator_rmse(self):
        design = SimulationDesign(J=5, V_tau=1.0, n=2500)
        bound = oracle_variance_bound(design, n_draws=600_000, seed=3)
        errs = []
        for rep in range(200):
            ds = gen_dataset(design, 5000 + rep)
            plan = make_folds(2500, 2, rep)
            ev = twostep_estimate(ds, plan, cross_fit_models(ds, plan, design))
            errs.append(ev.mean - 1.0)
        rmse = float(np.sqrt(np.mean(np.square(errs))))
        assert rmse * np.sqrt(2500) == pytest.approx(np.sqrt(bound), rel=0.2)
