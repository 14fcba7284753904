"""Exact conditional distribution of the estimator's limiting process.

The sampling error of the fold-level variance estimator converges, conditional
on the out-of-fold data, to

    G(n, v*, Omega, Z, zeta) = (e1' Omega^{1/2} Z)^2 / n
                               + 2 zeta sqrt(v*/n) (e1' Omega^{1/2} Z)
                               + (v*/sqrt(n)) (e2' Omega^{1/2} Z),

a quadratic-plus-linear form in two independent standard normals.  Completing
the square reduces it to a generalized chi-square

    G = nu1 (Z1 + kappa1 / (2 nu1))^2 + kappa2 Z2 - kappa1^2 / (4 nu1),

whose CDF has one exact closed-form branch (kappa2 = 0, a scaled noncentral
chi-square with one degree of freedom) and two quadrature branches chosen by
which conditioning variable leaves a smooth integrand.  Confidence intervals
are built by inverting this CDF over candidate values of v*.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import DegenerateOmega11

__all__ = [
    "EmpiricalProcessParams",
    "QuadFormCoeffs",
    "reduce_params",
    "gchisq_cdf",
    "gchisq_quantile",
    "critical_values",
    "empirical_process_value",
    "quadform_value",
]

# Gauss-Hermite rule for E[f(Z)], Z ~ N(0,1): nodes sqrt(2)*h, weights w/sqrt(pi).
_GH_NODES_RAW, _GH_WEIGHTS_RAW = np.polynomial.hermite.hermgauss(256)
_GH_Z = np.sqrt(2.0) * _GH_NODES_RAW
_GH_W = _GH_WEIGHTS_RAW / np.sqrt(np.pi)

# Gauss-Legendre rule on [0, 1], used after the kink-removing substitution.
_GL_U_RAW, _GL_W_RAW = np.polynomial.legendre.leggauss(128)
_GL_U = 0.5 * (_GL_U_RAW + 1.0)
_GL_W = 0.5 * _GL_W_RAW

# |z| beyond which standard-normal mass is ignored (Phi(-10) ~ 7.6e-24).
_Z_LIMIT = 10.0


@dataclass(frozen=True)
class EmpiricalProcessParams:
    """Arguments of the limiting process G for one fold.

    ``n`` is the fold sample size, ``v_star`` the candidate variance value
    under test, ``omega`` the 2x2 covariance of the normalized regression
    statistics, and ``zeta`` the unknown sign in {-1, +1}.
    """

    n: int
    v_star: float
    omega: np.ndarray
    zeta: int

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        if omega.shape != (2, 2):
            raise ValueError(f"omega must be 2x2, got {omega.shape}")
        if abs(omega[0, 1] - omega[1, 0]) > 1e-8 * (1.0 + abs(omega[0, 1])):
            raise ValueError("omega must be symmetric")
        object.__setattr__(self, "omega", omega)
        if self.v_star < 0:
            raise ValueError(f"v_star must be nonnegative, got {self.v_star}")
        if self.zeta not in (-1, 1):
            raise ValueError(f"zeta must be -1 or +1, got {self.zeta}")


@dataclass(frozen=True)
class QuadFormCoeffs:
    """Coefficients of the completed-square form of G."""

    nu1: float
    kappa1: float
    kappa2: float

    def __post_init__(self):
        if not self.nu1 > 0:
            raise ValueError(f"nu1 must be positive, got {self.nu1}")
        if self.kappa2 < 0:
            raise ValueError(f"kappa2 must be nonnegative, got {self.kappa2}")


def _reduce_arrays(n, v_star, omega, zeta):
    """Vectorized reduction of process parameters to (nu1, kappa1, kappa2).

    ``v_star`` may be an array; ``omega`` is a single 2x2 matrix.  The
    correlation is taken as zero when either variance entry vanishes, and
    kappa2 is nonnegative by convention (the sign is irrelevant because Z2
    is symmetric).
    """
    o11 = float(omega[0, 0])
    o12 = float(omega[0, 1])
    o22 = float(omega[1, 1])
    if not o11 > 0.0:
        raise DegenerateOmega11(f"omega[0,0] must be positive, got {o11}")
    o22 = max(o22, 0.0)
    if o22 > 0.0:
        rho = o12 / np.sqrt(o11 * o22)
        rho = min(max(rho, -1.0), 1.0)
    else:
        rho = 0.0
    v_star = np.asarray(v_star, dtype=float)
    sqrt_n = np.sqrt(float(n))
    nu1 = np.full_like(v_star, o11 / float(n))
    kappa1 = 2.0 * (
        zeta * np.sqrt(v_star * o11 / float(n))
        + (v_star / (2.0 * sqrt_n)) * rho * np.sqrt(o22)
    )
    kappa2 = (v_star / sqrt_n) * np.sqrt(o22 * (1.0 - rho**2))
    return nu1, kappa1, np.maximum(kappa2, 0.0)


def reduce_params(p: EmpiricalProcessParams) -> QuadFormCoeffs:
    """Reduce process parameters to generalized chi-square coefficients."""
    nu1, kappa1, kappa2 = _reduce_arrays(p.n, p.v_star, p.omega, p.zeta)
    return QuadFormCoeffs(float(nu1), float(kappa1), float(kappa2))


def _chi1_cdf(x):
    """CDF of a chi-square with 1 df: P(Z^2 <= x) = 2 Phi(sqrt(x)) - 1."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.maximum(x, 0.0))
    return np.where(x > 0.0, 2.0 * ndtr(r) - 1.0, 0.0)


def _ncx1_cdf(x, m_abs):
    """CDF of (Z + m)^2 at x: Phi(sqrt(x)-|m|) - Phi(-sqrt(x)-|m|)."""
    x = np.asarray(x, dtype=float)
    m_abs = np.asarray(m_abs, dtype=float)
    r = np.sqrt(np.maximum(x, 0.0))
    out = ndtr(r - m_abs) - ndtr(-r - m_abs)
    return np.where(x > 0.0, out, 0.0)


def _cdf_arrays(v, nu1, kappa1, kappa2):
    """Vectorized CDF of the generalized chi-square at values ``v``.

    Branches:
      * kappa2 == 0: scaled noncentral chi-square, evaluated in closed form;
      * normal-dominant (kappa2 large relative to the quadratic part):
        Gauss-Hermite over Z1 of a normal-CDF integrand;
      * otherwise: the Z2 integral, with the square-root kink at the support
        edge removed by the substitution z = z0 - t^2 so fixed-order
        Gauss-Legendre converges at machine accuracy.
    """
    v, nu1, kappa1, kappa2 = np.broadcast_arrays(
        np.asarray(v, dtype=float),
        np.asarray(nu1, dtype=float),
        np.asarray(kappa1, dtype=float),
        np.asarray(kappa2, dtype=float),
    )
    shape = v.shape
    v = np.atleast_1d(v).ravel()
    nu1 = np.atleast_1d(nu1).ravel()
    kappa1 = np.atleast_1d(kappa1).ravel()
    kappa2 = np.atleast_1d(kappa2).ravel()
    out = np.empty(v.shape, dtype=float)
    m_abs = np.abs(kappa1) / (2.0 * nu1)
    shift = nu1 * m_abs**2  # kappa1^2 / (4 nu1)
    v_adj = v + shift

    chi_mask = kappa2 == 0.0
    if chi_mask.any():
        out[chi_mask] = _ncx1_cdf(v_adj[chi_mask] / nu1[chi_mask], m_abs[chi_mask])

    rest = ~chi_mask
    if rest.any():
        s = kappa2[rest] / nu1[rest]
        z1_mask_r = s >= np.maximum((m_abs[rest] + 6.0) / 4.0, 30.0)
        idx_rest = np.flatnonzero(rest)

        idx_z1 = idx_rest[z1_mask_r]
        if idx_z1.size:
            z = _GH_Z[None, :]
            arg = (
                v_adj[idx_z1, None] - nu1[idx_z1, None] * (z + m_abs[idx_z1, None]) ** 2
            ) / kappa2[idx_z1, None]
            out[idx_z1] = ndtr(arg) @ _GH_W

        idx_z2 = idx_rest[~z1_mask_r]
        if idx_z2.size:
            out[idx_z2] = _cdf_z2_branch(
                v_adj[idx_z2], nu1[idx_z2], kappa2[idx_z2], m_abs[idx_z2]
            )
    return np.clip(out, 0.0, 1.0).reshape(shape)


def _cdf_z2_branch(v_adj, nu1, kappa2, m_abs):
    """Z2-conditioned branch: F = E_{Z2}[ P((Z1+m)^2 <= (v_adj - k2 Z2)/nu1) ].

    The integrand vanishes for Z2 above the support edge z0 = v_adj / kappa2
    and behaves like sqrt(z0 - z) just below it; substituting z = z0 - t^2
    makes it smooth in t.
    """
    out = np.empty(v_adj.shape, dtype=float)
    z0 = v_adj / kappa2

    below = z0 <= -_Z_LIMIT
    out[below] = 0.0

    far = z0 >= _Z_LIMIT  # kink carries negligible normal mass
    if far.any():
        z = _GH_Z[None, :]
        x = (v_adj[far, None] - kappa2[far, None] * z) / nu1[far, None]
        out[far] = _ncx1_cdf(x, m_abs[far, None]) @ _GH_W

    mid = ~(below | far)
    if mid.any():
        z0m = z0[mid]
        t_max = np.sqrt(z0m + _Z_LIMIT + 0.5)
        t = t_max[:, None] * _GL_U[None, :]
        w = t_max[:, None] * _GL_W[None, :]
        z = z0m[:, None] - t**2
        x = (kappa2[mid, None] * t**2) / nu1[mid, None]
        dens = np.exp(-0.5 * z**2) / np.sqrt(2.0 * np.pi)
        integrand = 2.0 * t * dens * _ncx1_cdf(x, m_abs[mid, None])
        out[mid] = (integrand * w).sum(axis=1)
    return out


def gchisq_cdf(v: float, c: QuadFormCoeffs) -> float:
    """P(G <= v) for the generalized chi-square with coefficients ``c``."""
    return float(_cdf_arrays(v, c.nu1, c.kappa1, c.kappa2))


def gchisq_quantile(u: float, c: QuadFormCoeffs) -> float:
    """Value v with CDF(v) = u, by bracket expansion and Brent's method."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie strictly inside (0, 1), got {u}")
    m = c.kappa1 / (2.0 * c.nu1)
    mean = c.nu1
    sd = np.sqrt(c.nu1**2 * (2.0 + 4.0 * m**2) + c.kappa2**2)
    lo, hi = mean - 10.0 * sd, mean + 10.0 * sd
    width = 10.0 * sd
    while gchisq_cdf(lo, c) > u:
        width *= 2.0
        lo -= width
    while gchisq_cdf(hi, c) < u:
        width *= 2.0
        hi += width
    scale = max(1.0, abs(lo), abs(hi))
    return float(
        brentq(lambda v: gchisq_cdf(v, c) - u, lo, hi, xtol=1e-13 * scale, maxiter=200)
    )


def critical_values(c: QuadFormCoeffs, alpha: float) -> tuple[float, float]:
    """Adjusted critical values in probability units.

    The lower value is min(alpha/2, F(0)); the upper value keeps the spread
    at exactly 1 - alpha.  The downward shift guarantees that the point
    estimate always lies inside the inverted confidence set and turns the
    test of zero heterogeneity into a one-sided chi-square comparison.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    q_lo = min(alpha / 2.0, gchisq_cdf(0.0, c))
    q_hi = 1.0 - alpha + q_lo
    return q_lo, q_hi


def empirical_process_value(p: EmpiricalProcessParams, z: np.ndarray) -> np.ndarray:
    """Evaluate G directly from its definition at standard-normal draws ``z``.

    ``z`` has shape (2,) or (2, m).  Uses the lower Cholesky factor of omega,
    so this is an independent evaluation path from the completed-square form.
    """
    z = np.asarray(z, dtype=float)
    o11 = p.omega[0, 0]
    o12 = p.omega[0, 1]
    o22 = p.omega[1, 1]
    if not o11 > 0.0:
        raise DegenerateOmega11(f"omega[0,0] must be positive, got {o11}")
    l11 = np.sqrt(o11)
    l21 = o12 / l11
    l22 = np.sqrt(max(o22 - l21**2, 0.0))
    e1 = l11 * z[0]
    e2 = l21 * z[0] + l22 * z[1]
    n = float(p.n)
    return (
        e1**2 / n
        + 2.0 * p.zeta * np.sqrt(p.v_star / n) * e1
        + (p.v_star / np.sqrt(n)) * e2
    )


def quadform_value(c: QuadFormCoeffs, z: np.ndarray) -> np.ndarray:
    """Evaluate the completed-square form at standard-normal draws ``z``."""
    z = np.asarray(z, dtype=float)
    m = c.kappa1 / (2.0 * c.nu1)
    return c.nu1 * (z[0] + m) ** 2 + c.kappa2 * z[1] - c.kappa1**2 / (4.0 * c.nu1)
