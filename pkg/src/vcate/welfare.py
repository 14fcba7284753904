"""Sharp bounds on the gains from policy targeting.

The best possible improvement of a personalized assignment rule over the
better of treat-everyone / treat-no-one is capped by simple functions of the
average effect and the variance of the conditional effect.  The cap is
attained by a two-point effect distribution, which :func:`adversarial_design`
constructs explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WelfareBound",
    "welfare_bound_simple",
    "welfare_bound_general",
    "transform_bound",
    "adversarial_design",
]


@dataclass(frozen=True)
class WelfareBound:
    """Both targeting bounds for a given (ate, vcate) pair.

    ``scale`` records the normalization applied to the inputs (for example the
    control-arm outcome standard deviation); it is metadata only.
    """

    simple_bound: float
    general_bound: float
    ate: float
    vcate: float
    scale: float = 1.0

    def __post_init__(self):
        if self.vcate < 0:
            raise ValueError(f"vcate must be nonnegative, got {self.vcate}")


def welfare_bound_simple(vcate: float) -> float:
    """Upper bound on targeting gains using only the effect variance."""
    if vcate < 0:
        raise ValueError(f"vcate must be nonnegative, got {vcate}")
    return 0.5 * np.sqrt(vcate)


def welfare_bound_general(ate: float, vcate: float) -> float:
    """Sharper bound using the average effect as well.

    Equals the simple bound at ate = 0 and shrinks as |ate| grows: when
    almost everyone gains (or loses) from treatment, tailoring who gets it
    can add little.
    """
    if vcate < 0:
        raise ValueError(f"vcate must be nonnegative, got {vcate}")
    return 0.5 * (-abs(ate) + np.sqrt(vcate + ate**2))


def bound_pair(ate: float, vcate: float, scale: float = 1.0) -> WelfareBound:
    """Convenience constructor evaluating both bounds."""
    return WelfareBound(
        simple_bound=welfare_bound_simple(vcate),
        general_bound=welfare_bound_general(ate, vcate),
        ate=ate,
        vcate=vcate,
        scale=scale,
    )


def transform_bound(ate: float, vcate: float, k1: float, k2: float) -> float:
    """Bound for the affinely transformed outcome k1 + k2 * Y.

    Location shifts leave the bound unchanged; scale changes multiply it by
    |k2|, so flipping the sign of the welfare objective has no effect.
    """
    return abs(k2) * welfare_bound_general(ate, vcate)


def adversarial_design(ate: float, vcate: float) -> tuple[float, float, float]:
    """Two-point effect distribution attaining the general bound.

    Returns ``(p1, tau0, tau1)``: the effect equals ``tau1 > 0`` with
    probability ``p1`` and ``tau0 <= 0`` otherwise, has mean ``ate`` and
    variance ``vcate``, and its first-best targeting gain equals
    :func:`welfare_bound_general` exactly.
    """
    if not vcate > 0:
        raise ValueError(f"vcate must be positive, got {vcate}")
    if ate <= 0:
        p1 = 0.5 - 0.5 * np.sqrt(ate**2 / (ate**2 + vcate))
        delta = np.sqrt(vcate / (p1 * (1.0 - p1)))
        tau0 = ate - p1 * delta
        tau1 = ate + (1.0 - p1) * delta
        return float(p1), float(tau0), float(tau1)
    # positive mean: solve the reflected problem and flip the sign back
    p1_neg, tau0_neg, tau1_neg = adversarial_design(-ate, vcate)
    return 1.0 - p1_neg, -tau1_neg, -tau0_neg


def first_best_gain(p1: float, tau0: float, tau1: float) -> float:
    """Gain of the treat-if-positive rule for a two-point effect distribution.

    Independent brute-force welfare evaluation used to check sharpness:
    E[max(tau, 0)] - max(E[tau], 0).
    """
    mean = p1 * tau1 + (1.0 - p1) * tau0
    gain_targeted = p1 * max(tau1, 0.0) + (1.0 - p1) * max(tau0, 0.0)
    return gain_targeted - max(mean, 0.0)
