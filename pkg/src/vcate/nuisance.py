"""First-stage prediction of the arm means and the conditional effect.

Models are always fit on the out-of-fold sample, separately per treatment
arm, so that no observation in the held-out fold influences its own
predictions.  Three methods ship: a cross-validated LASSO (the default for
real data), plain OLS, and an oracle plug-in used by simulations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from sklearn.linear_model import lasso_path

from .data import Dataset, FoldPlan, make_folds
from .errors import EmptyArm

__all__ = ["LassoFit", "NuisanceModel", "fit_lasso_cv", "fit_nuisance"]

LAMBDA_MIN_RATIO = 1e-4
_SOLVER_TOL = 1e-10


@dataclass(frozen=True)
class LassoFit:
    """An L1-penalized least-squares fit on standardized columns.

    ``intercept`` and ``coefficients`` are reported on the original scale of
    the design matrix; ``means``/``scales`` record the standardization, with
    ``scales == 0`` marking zero-variance columns that were dropped (their
    coefficient is 0).  ``lam`` is the selected penalty in the
    (1/2n)·RSS + lam·l1 convention on standardized columns.
    """

    intercept: float
    coefficients: np.ndarray
    lam: float
    means: np.ndarray
    scales: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.intercept + X @ self.coefficients

    def standardized_coefficients(self) -> np.ndarray:
        """Coefficients of the standardized problem (0 for dropped columns)."""
        return self.coefficients * np.where(self.scales > 0, self.scales, 1.0)


@dataclass(frozen=True)
class NuisanceModel:
    """Out-of-fold predictors for the two arm means and their difference."""

    predict_mu0: Callable[[np.ndarray], np.ndarray]
    predict_mu1: Callable[[np.ndarray], np.ndarray]
    fitted_on_fold_complement: int
    degenerate_tau: bool

    def predict_tau(self, x: np.ndarray) -> np.ndarray:
        """Predicted conditional effect, the pointwise difference of the arms."""
        return self.predict_mu1(x) - self.predict_mu0(x)


def fit_lasso_cv(
    X: np.ndarray,
    y: np.ndarray,
    n_lambda: int = 100,
    cv_folds: int = 5,
    seed: int = 0,
) -> LassoFit:
    """Cross-validated LASSO on a log-spaced penalty grid.

    The grid runs from ``lam_max`` (smallest penalty with an all-zero
    solution) down to ``LAMBDA_MIN_RATIO * lam_max``; the CV criterion is
    mean squared prediction error and the exact minimizer is selected (no
    one-standard-error rule).  Columns with zero variance are dropped and
    receive coefficient 0; a constant response returns an intercept-only fit.

    Parameters
    ----------
    X : ndarray of shape (n, p)
    y : ndarray of shape (n,)
    n_lambda : number of penalty grid points.
    cv_folds : number of cross-validation folds (seeded shuffle split).
    seed : seed for the CV fold assignment.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n != y.shape[0]:
        raise ValueError("X and y disagree on the sample size")
    if n < 2 * cv_folds or cv_folds < 2:
        raise ValueError(f"need n >= 2*cv_folds and cv_folds >= 2, got n={n}, cv_folds={cv_folds}")

    means = X.mean(axis=0)
    scales = X.std(axis=0)
    keep = scales > 0
    ybar = float(y.mean())

    coefficients = np.zeros(p)
    if not keep.any() or np.ptp(y) == 0.0:
        return LassoFit(ybar, coefficients, 0.0, means, scales)

    Xs = (X[:, keep] - means[keep]) / scales[keep]
    yc = y - ybar
    lam_max = float(np.max(np.abs(Xs.T @ yc)) / n)
    if lam_max == 0.0:
        return LassoFit(ybar, coefficients, 0.0, means, scales)
    grid = np.geomspace(lam_max, LAMBDA_MIN_RATIO * lam_max, n_lambda)

    plan = make_folds(n, cv_folds, seed)
    cv_mse = np.zeros(n_lambda)
    for k in range(cv_folds):
        tr = plan.complement_indices(k)
        va = plan.fold_indices(k)
        x_mu = Xs[tr].mean(axis=0)
        y_mu = yc[tr].mean()
        _, coefs, _ = lasso_path(
            Xs[tr] - x_mu, yc[tr] - y_mu, alphas=grid, tol=_SOLVER_TOL
        )
        pred = (Xs[va] - x_mu) @ coefs + y_mu
        cv_mse += ((pred - yc[va, None]) ** 2).mean(axis=0)
    best = int(np.argmin(cv_mse))  # first minimum = largest penalty among ties

    _, coefs, _ = lasso_path(Xs, yc, alphas=grid, tol=_SOLVER_TOL)
    b_std = coefs[:, best]
    coefficients[keep] = b_std / scales[keep]
    intercept = ybar - float(np.dot(b_std, means[keep] / scales[keep]))
    return LassoFit(intercept, coefficients, float(grid[best]), means, scales)


def _fit_ols(X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    if np.ptp(y) == 0.0:
        return float(y[0]), np.zeros(X.shape[1])
    design = np.column_stack([np.ones(X.shape[0]), X])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(beta[0]), beta[1:]


def _linear_predictor(intercept: float, coef: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    coef = np.asarray(coef, dtype=float)

    def predict(x: np.ndarray) -> np.ndarray:
        return intercept + np.asarray(x, dtype=float) @ coef

    return predict


def fit_nuisance(
    ds: Dataset,
    plan: FoldPlan,
    k: int,
    method: str = "lasso",
    oracle=None,
    n_lambda: int = 100,
    cv_folds: int = 5,
) -> NuisanceModel:
    """Fit the arm-mean predictors on everything outside fold ``k``.

    ``method`` is one of ``"lasso"``, ``"ols"``, or ``"oracle"``.  The oracle
    path plugs in a user-supplied object with ``mu0(x)``, ``mu1(x)`` array
    methods and a ``tau_constant`` flag (simulation designs provide one); no
    data are touched.  The degeneracy flag is set when the fitted effect
    prediction is constant: both arms have all non-intercept coefficients
    zero, or identical coefficient vectors.

    Raises
    ------
    EmptyArm
        If either arm has fewer than 2 out-of-fold observations.
    """
    if method == "oracle":
        if oracle is None:
            raise ValueError("method='oracle' requires an oracle object")
        return NuisanceModel(
            predict_mu0=oracle.mu0,
            predict_mu1=oracle.mu1,
            fitted_on_fold_complement=k,
            degenerate_tau=bool(oracle.tau_constant),
        )

    train = plan.complement_indices(k)
    d_train = ds.d[train]
    arms = {}
    for arm in (0, 1):
        idx = train[d_train == arm]
        if idx.size < 2:
            raise EmptyArm(f"arm {arm} has {idx.size} out-of-fold units (need >= 2)")
        X_arm, y_arm = ds.x[idx], ds.y[idx]
        if method == "lasso":
            ss = np.random.SeedSequence(
                entropy=plan.seed, spawn_key=(plan.split_id, k, arm, 101)
            )
            # small arms cannot support the requested CV granularity
            arm_cv = min(cv_folds, max(2, idx.size // 2))
            fit = fit_lasso_cv(
                X_arm, y_arm, n_lambda=n_lambda, cv_folds=arm_cv,
                seed=int(ss.generate_state(1)[0]),
            )
            arms[arm] = (fit.intercept, fit.coefficients)
        elif method == "ols":
            arms[arm] = _fit_ols(X_arm, y_arm)
        else:
            raise ValueError(f"unknown nuisance method {method!r}")

    (i0, c0), (i1, c1) = arms[0], arms[1]
    degenerate = bool(
        (np.all(c0 == 0.0) and np.all(c1 == 0.0)) or np.array_equal(c0, c1)
    )
    return NuisanceModel(
        predict_mu0=_linear_predictor(i0, c0),
        predict_mu1=_linear_predictor(i1, c1),
        fitted_on_fold_complement=k,
        degenerate_tau=degenerate,
    )
