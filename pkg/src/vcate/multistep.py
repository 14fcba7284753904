"""Second and third stages: generated regressors, weighted least squares,
fold-level variance estimate, and the sandwich covariance.

For each fold, the out-of-fold effect prediction is centered with the in-fold
mean, its in-fold variance becomes the preliminary estimate, and a weighted
regression of the outcome on

    [1,  M(x),  d - p(x),  (d - p(x)) * centered effect prediction]

with weights 1 / (p(x)(1 - p(x))) rescales it.  The fold estimate
``beta2^2 * v_x`` is always nonnegative and equals the in-fold mean of the
plugged-in efficient influence function by an exact finite-sample identity,
which :func:`influence_identity_check` verifies numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, FoldPlan
from .errors import SingularGram, SingularJ, TooFewUnits
from .nuisance import NuisanceModel
from .twostep import efficient_influence

__all__ = [
    "Regressors",
    "FoldEstimate",
    "build_regressors",
    "wls_theta",
    "sandwich_omega",
    "clustered_omega",
    "fold_estimate",
    "ensemble_vcate",
    "influence_identity_check",
]

# in-fold effect predictions whose variance falls below this (relative to
# their magnitude) are constant up to rounding noise
_DEGENERATE_VX_RTOL = 1e-30


@dataclass(frozen=True)
class Regressors:
    """In-fold design pieces for one fold.

    ``w`` is the n_k x 4 regressor matrix, ``lam`` the inverse-variance
    weights, ``s`` the centered effect predictions (summing to ~0 by
    construction), ``v_x`` their in-fold mean square and ``tau_bar`` the
    in-fold mean effect prediction.  ``idx`` are the fold's row indices in
    the parent dataset.
    """

    w: np.ndarray
    lam: np.ndarray
    s: np.ndarray
    v_x: float
    tau_bar: float
    idx: np.ndarray


@dataclass(frozen=True)
class FoldEstimate:
    """Sufficient statistics of one fold for interval construction."""

    theta_hat: np.ndarray | None
    v_x: float
    v_tau: float
    omega_hat: np.ndarray | None
    n_k: int
    degenerate: bool
    tau_bar: float
    fold: int = 0
    split_id: int = 0


def build_regressors(
    ds: Dataset, plan: FoldPlan, k: int, nm: NuisanceModel
) -> Regressors:
    """Generated regressors for fold ``k`` from an out-of-fold model."""
    idx = plan.fold_indices(k)
    x = ds.x[idx]
    d = ds.d[idx]
    p = ds.pscore[idx]
    tau = np.asarray(nm.predict_tau(x), dtype=float)
    mu0 = np.asarray(nm.predict_mu0(x), dtype=float)

    tau_bar = float(tau.mean())
    s = tau - tau_bar
    resid = float(s.mean())  # second pass pins the in-fold sum at ~0
    s = s - resid
    tau_bar += resid
    v_x = float(np.mean(s**2))
    if nm.degenerate_tau or v_x <= _DEGENERATE_VX_RTOL * max(1.0, float(np.max(np.abs(tau))) ** 2):
        s = np.zeros_like(s)
        v_x = 0.0

    m = mu0 + p * tau
    w = np.column_stack([np.ones(idx.size), m, d - p, (d - p) * s])
    lam = 1.0 / (p * (1.0 - p))
    return Regressors(w=w, lam=lam, s=s, v_x=v_x, tau_bar=tau_bar, idx=idx)


def wls_theta(reg: Regressors, y: np.ndarray) -> np.ndarray:
    """Solve the weighted normal equations for the 4 regression parameters.

    One step of iterative refinement keeps the weighted score at the solution
    near machine precision, which the finite-sample influence identity relies
    on.  Raises :class:`SingularGram` when the weighted Gram matrix cannot be
    solved (e.g. a zero-variance interaction column).
    """
    y = np.asarray(y, dtype=float)
    wl = reg.w * reg.lam[:, None]
    gram = wl.T @ reg.w
    rhs = wl.T @ y
    try:
        theta = np.linalg.solve(gram, rhs)
        theta += np.linalg.solve(gram, rhs - gram @ theta)
    except np.linalg.LinAlgError as exc:
        raise SingularGram(str(exc)) from exc
    score = wl.T @ (y - reg.w @ theta)
    if not np.all(np.isfinite(theta)) or np.linalg.norm(score) > 1e-8 * max(
        1.0, np.linalg.norm(rhs)
    ):
        raise SingularGram("weighted normal equations could not be solved accurately")
    return theta


def _scaled_scores(reg: Regressors, y: np.ndarray, theta: np.ndarray, v_x: float):
    """Per-observation 5-vector scores and the Jacobian of the sandwich."""
    n_k = reg.idx.size
    pi = np.array([1.0, 1.0, 1.0, 1.0 / np.sqrt(v_x)])
    wp = reg.w * pi[None, :]
    u_hat = y - reg.w @ theta
    t_hat = reg.s**2 / v_x - 1.0
    j4 = (wp * reg.lam[:, None]).T @ wp / n_k
    j = np.zeros((5, 5))
    j[:4, :4] = j4
    j[4, 4] = 1.0
    psi = np.column_stack([reg.lam[:, None] * u_hat[:, None] * wp, t_hat])
    return psi, j


def _omega_from_meat(j: np.ndarray, meat: np.ndarray) -> np.ndarray:
    try:
        jinv = np.linalg.inv(j)
    except np.linalg.LinAlgError as exc:
        raise SingularJ(str(exc)) from exc
    if not np.all(np.isfinite(jinv)):
        raise SingularJ("Jacobian inverse is not finite")
    sel = jinv[3:5, :]  # bottom two rows of J^{-1} (selection matrix applied)
    omega = sel @ meat @ sel.T
    return 0.5 * (omega + omega.T)


def sandwich_omega(
    reg: Regressors, y: np.ndarray, theta: np.ndarray, v_x: float
) -> np.ndarray:
    """Heteroskedasticity-robust 2x2 covariance of the normalized statistics."""
    if not v_x > 0:
        raise ValueError("sandwich_omega requires v_x > 0")
    psi, j = _scaled_scores(reg, np.asarray(y, dtype=float), theta, v_x)
    meat = psi.T @ psi / reg.idx.size
    return _omega_from_meat(j, meat)


def clustered_omega(
    reg: Regressors,
    y: np.ndarray,
    theta: np.ndarray,
    v_x: float,
    cluster_id: np.ndarray,
) -> np.ndarray:
    """Cluster-robust variant: scores are summed within clusters before the
    outer product.  With all-singleton clusters this equals
    :func:`sandwich_omega` exactly."""
    if not v_x > 0:
        raise ValueError("clustered_omega requires v_x > 0")
    cluster_id = np.asarray(cluster_id)
    if cluster_id.shape[0] != reg.idx.size:
        raise ValueError("cluster_id must align with the fold rows")
    clusters, inverse = np.unique(cluster_id, return_inverse=True)
    if clusters.size < 2:
        raise TooFewUnits(f"need >= 2 clusters in the fold, got {clusters.size}")
    psi, j = _scaled_scores(reg, np.asarray(y, dtype=float), theta, v_x)
    sums = np.zeros((clusters.size, psi.shape[1]))
    np.add.at(sums, inverse, psi)
    meat = sums.T @ sums / reg.idx.size
    return _omega_from_meat(j, meat)


def fold_estimate(
    ds: Dataset, plan: FoldPlan, k: int, nm: NuisanceModel
) -> FoldEstimate:
    """Full fold-level estimate; the degenerate path short-circuits with 0.

    Clustered scores are used automatically when the dataset carries cluster
    ids.  A singular Gram caused by a vanished interaction column also routes
    to the degenerate path.
    """
    reg = build_regressors(ds, plan, k, nm)
    y = ds.y[reg.idx]
    n_k = reg.idx.size
    if reg.v_x == 0.0:
        return FoldEstimate(
            theta_hat=None, v_x=0.0, v_tau=0.0, omega_hat=None, n_k=n_k,
            degenerate=True, tau_bar=reg.tau_bar, fold=k, split_id=plan.split_id,
        )
    try:
        theta = wls_theta(reg, y)
    except SingularGram:
        if reg.v_x <= 1e-12 * max(1.0, reg.tau_bar**2):
            return FoldEstimate(
                theta_hat=None, v_x=0.0, v_tau=0.0, omega_hat=None, n_k=n_k,
                degenerate=True, tau_bar=reg.tau_bar, fold=k, split_id=plan.split_id,
            )
        raise
    v_tau = float(theta[3] ** 2 * reg.v_x)
    if ds.cluster_id is not None:
        omega = clustered_omega(reg, y, theta, reg.v_x, ds.cluster_id[reg.idx])
    else:
        omega = sandwich_omega(reg, y, theta, reg.v_x)
    return FoldEstimate(
        theta_hat=theta, v_x=reg.v_x, v_tau=v_tau, omega_hat=omega, n_k=n_k,
        degenerate=False, tau_bar=reg.tau_bar, fold=k, split_id=plan.split_id,
    )


def ensemble_vcate(folds: list[FoldEstimate]) -> float:
    """Arithmetic mean of the fold estimates; nonnegative by construction."""
    if not folds:
        raise ValueError("need at least one fold estimate")
    return float(np.mean([fe.v_tau for fe in folds]))


def influence_identity_check(
    ds: Dataset, plan: FoldPlan, k: int, nm: NuisanceModel, fe: FoldEstimate
) -> float:
    """Discrepancy between the fold estimate and the plugged-in influence mean.

    The regression-implied nuisances are the fitted arm means and their
    difference evaluated at the solved parameters; because the weighted score
    is zero at the optimum, the in-fold mean of the influence function equals
    ``beta2^2 * v_x`` exactly, so the returned value is pure numerical error.
    """
    if fe.degenerate:
        raise ValueError("identity check requires a non-degenerate fold estimate")
    reg = build_regressors(ds, plan, k, nm)
    y = ds.y[reg.idx]
    d = ds.d[reg.idx]
    p = ds.pscore[reg.idx]
    c1, c2, b1, b2 = fe.theta_hat
    tau_tilde = b1 + b2 * reg.s
    mu0_tilde = c1 + c2 * reg.w[:, 1] - p * b1 - p * reg.s * b2
    tau_av_tilde = float(tau_tilde.mean())
    phi = efficient_influence(y, d, tau_tilde, mu0_tilde, p, tau_av_tilde)
    return float(abs(fe.v_tau - phi.mean()))
