import numpy as np
import pytest
from scipy.stats import chi2

from vcate.data import make_folds
from vcate.inference import floored_omega
from vcate.multistep import fold_estimate
from vcate.nuisance import fit_nuisance
from vcate.simulation import (
    ExperimentCell,
    SimulationDesign,
    draw_outcomes,
    fixed_score_nuisance,
    gen_dataset,
    oracle_nuisance,
    run_experiment,
    true_vcate,
)


class TestDesignInvariants:
    def test_weight_normalization(self):
        for j in (1, 2, 5, 20):
            design = SimulationDesign(J=j, V_tau=0.5, n=100)
            assert np.sum(design.weights() ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_coefficient_norms(self):
        design = SimulationDesign(J=7, V_tau=0.8, n=100)
        assert design.beta_tau() @ design.beta_tau() == pytest.approx(0.8, abs=1e-12)
        assert design.beta0() @ design.beta0() == pytest.approx(0.3, abs=1e-12)
        assert design.beta0() @ design.beta_tau() == pytest.approx(
            np.sqrt(0.3 * 0.8), abs=1e-10
        )

    def test_true_vcate(self):
        for v in (0.0, 0.25, 1.0):
            assert true_vcate(SimulationDesign(J=5, V_tau=v, n=100)) == v

    def test_nested_covariate_sets_weakly_increase_explained_variance(self):
        # the effect-index covariates are mutually independent, so the
        # variance explained by the first m of them is the partial sum of
        # squared loadings: strictly increasing up to the full design value
        design = SimulationDesign(J=6, V_tau=0.5, n=100)
        partial = np.cumsum(design.beta_tau() ** 2)
        assert np.all(np.diff(partial) > 0)
        assert partial[-1] == pytest.approx(true_vcate(design), abs=1e-12)


class TestGenDataset:
    def test_dimensions_and_propensity(self):
        design = SimulationDesign(J=4, V_tau=0.5, n=300)
        ds = gen_dataset(design, 0)
        assert ds.x.shape == (300, 8)
        assert np.all(ds.pscore == 0.5)
        assert set(np.unique(ds.d)) <= {0.0, 1.0}

    def test_homogeneous_design_has_constant_effect(self):
        design = SimulationDesign(J=4, V_tau=0.0, n=500)
        ds, y0, y1 = draw_outcomes(design, 1)
        oracle = oracle_nuisance(design)
        tau = oracle.tau(ds.x)
        assert np.ptp(tau) <= 1e-12

    @pytest.mark.slow
    def test_moments(self):
        design = SimulationDesign(J=5, V_tau=0.5, n=400_000)
        ds, y0, y1 = draw_outcomes(design, 2)
        n = design.n
        # mean effect
        eff = y1 - y0
        assert eff.mean() == pytest.approx(0.15, abs=3 * eff.std() / np.sqrt(n))
        # control-arm variance is normalized to one
        v0 = y0.var(ddof=1)
        assert v0 == pytest.approx(1.0, abs=0.02)
        # treated-arm variance against the direct covariance derivation
        expected_v1 = (
            design.V_mu + design.V_tau
            + 2 * design.rho * np.sqrt(design.V_mu * design.V_tau)
            + design.sigma2
        )
        assert y1.var(ddof=1) == pytest.approx(expected_v1, abs=0.03)
        # effect-index variance matches the closed form
        tau_x = oracle_nuisance(design).tau(ds.x)
        assert tau_x.var(ddof=1) == pytest.approx(0.5, abs=0.02)

    def test_cross_block_correlation(self):
        design = SimulationDesign(J=3, V_tau=0.5, n=200_000)
        ds = gen_dataset(design, 3)
        x0, x1 = ds.x[:, :3], ds.x[:, 3:]
        for j in range(3):
            r = np.corrcoef(x0[:, j], x1[:, j])[0, 1]
            assert r == pytest.approx(0.5, abs=0.02)
        r_cross = np.corrcoef(x0[:, 0], x1[:, 1])[0, 1]
        assert r_cross == pytest.approx(0.0, abs=0.02)


class TestFixedScore:
    def test_unit_scale_score_survives_zero_heterogeneity(self):
        design = SimulationDesign(J=5, V_tau=0.0, n=400)
        nm = fixed_score_nuisance(design)
        assert not nm.tau_constant
        ds = gen_dataset(design, 4)
        tau = nm.tau(ds.x)
        assert tau.std() > 0.5  # unit-variance index


class TestBoundaryStability:
    @pytest.mark.slow
    def test_scaled_statistic_is_pivotal_across_n(self):
        # with an estimated first stage at the boundary, n_k * estimate
        # scaled by the covariance entry is chi-square(1) at every n: the
        # n-rate of the boundary limit
        quantiles = {}
        for n in (500, 2500):
            design = SimulationDesign(J=3, V_tau=0.0, n=n)
            stats = []
            for rep in range(250):
                ds = gen_dataset(design, 17_000 + rep)
                plan = make_folds(n, 2, rep)
                nm = fit_nuisance(ds, plan, 0, method="ols")
                fe = fold_estimate(ds, plan, 0, nm)
                omega = floored_omega(fe.omega_hat)
                stats.append(fe.v_tau / (omega[0, 0] / fe.n_k))
            quantiles[n] = np.quantile(stats, [0.5, 0.9])
        for n, qs in quantiles.items():
            assert qs[0] == pytest.approx(chi2.ppf(0.5, 1), abs=0.25)
            assert qs[1] == pytest.approx(chi2.ppf(0.9, 1), abs=0.9)
        # oracle first stage is exactly degenerate: the scaled estimate is 0
        # at every n, trivially stable
        for n in (500, 2500):
            design = SimulationDesign(J=3, V_tau=0.0, n=n)
            fe = fold_estimate(
                gen_dataset(design, 5), make_folds(n, 2, 6), 0,
                fit_nuisance(gen_dataset(design, 5), make_folds(n, 2, 6), 0,
                             method="oracle", oracle=oracle_nuisance(design)),
            )
            assert n * fe.v_tau == 0.0


class TestRunExperiment:
    def test_deterministic_report(self):
        cell = ExperimentCell(
            name="t", design=SimulationDesign(J=2, V_tau=0.5, n=120), nuisance="ols"
        )
        a = run_experiment([cell], reps=4, seed=9)
        b = run_experiment([cell], reps=4, seed=9)
        assert a.rows == b.rows

    def test_schema_and_metrics(self, tmp_path):
        cell = ExperimentCell(
            name="t", design=SimulationDesign(J=2, V_tau=0.5, n=120), nuisance="oracle"
        )
        report = run_experiment([cell], reps=5, seed=10)
        methods = {(r["estimator"], r["ci_method"]) for r in report.rows}
        assert methods == {
            ("multistep", "single_fold"),
            ("multistep", "multifold"),
            ("twostep", "twostep_naive"),
        }
        for row in report.rows:
            assert 0.0 <= row["coverage"] <= 1.0
            assert row["rmse"] >= abs(row["bias"]) - 1e-12
        path = tmp_path / "r.csv"
        report.to_csv(path)
        header = path.read_text().splitlines()[0].split(",")
        assert header == report.COLUMNS

    def test_density_rows(self):
        cell = ExperimentCell(
            name="t", design=SimulationDesign(J=2, V_tau=0.5, n=120),
            nuisance="oracle", with_cis=False,
        )
        report = run_experiment([cell], reps=30, seed=11, collect_density=True,
                                density_bins=10)
        assert {r["estimator"] for r in report.density} == {"multistep", "twostep"}
        one = [r for r in report.density if r["estimator"] == "multistep"]
        assert len(one) == 10
