"""Closed-form layer: the quadratic map between Euclidean and quantum
scaling exponents, the coupling-from-central-charge formula, replica
exponents, and the self-consistency fixed point."""

from __future__ import annotations

import math
from dataclasses import dataclass

BULK = "bulk"
BOUNDARY = "boundary"


@dataclass(frozen=True)
class KpzContext:
    """Coupling gamma with optional central charge c; regime bulk|boundary."""

    gamma: float
    c: float | None = None
    regime: str = BULK

    def __post_init__(self):
        if not 0 <= self.gamma < 2:
            raise ValueError("gamma must lie in [0, 2)")
        if self.regime not in (BULK, BOUNDARY):
            raise ValueError("regime must be 'bulk' or 'boundary'")
        if self.c is not None and abs(gamma_from_c(self.c) - self.gamma) > 1e-10:
            raise ValueError("gamma inconsistent with central charge")


def gamma_from_c(c: float) -> float:
    """gamma = sqrt((25-c)/6) - sqrt((1-c)/6); real only for c <= 1."""
    if c > 1:
        raise ValueError("central charge above 1 gives complex coupling")
    return math.sqrt((25.0 - c) / 6.0) - math.sqrt((1.0 - c) / 6.0)


def forward_kpz(delta: float, gamma: float) -> float:
    """Euclidean exponent of an observable with quantum exponent delta."""
    return delta + gamma**2 / 4.0 * delta * (delta - 1.0)


def inverse_kpz(x: float, gamma: float) -> float:
    """Quantum exponent for Euclidean exponent x; branch with delta(0) = 0.

    Solves (g2/4) d^2 + (1 - g2/4) d - x = 0 taking the root continuous in
    gamma -> 0 (where delta = x), which is increasing in x.
    """
    if x < 0:
        raise ValueError("x must be nonnegative")
    if gamma == 0:
        return x
    a = gamma**2 / 4.0
    b = 1.0 - a
    disc = b * b + 4.0 * a * x
    assert disc >= 0
    if b >= 0:
        # conjugate form avoids cancellation for small coupling
        return 2.0 * x / (b + math.sqrt(disc))
    return (-b + math.sqrt(disc)) / (2.0 * a)


def replica_exponent(s: float, delta_trial: float, gamma: float, regime: str = BULK) -> float:
    """Predicted separation exponent of the s-fold propagator correlator."""
    g2 = gamma**2
    if regime == BULK:
        return 2.0 * s - 2.0 + (g2 / 2.0) * (s - 1.0) * (2.0 * delta_trial - s)
    if regime == BOUNDARY:
        return 2.0 * s - 1.0 + (g2 / 2.0) * (2.0 * s - 1.0) * (delta_trial - s)
    raise ValueError("regime must be 'bulk' or 'boundary'")


def predicted_singularity(x: float, delta_trial: float, gamma: float, regime: str = BULK) -> float:
    """Location s_c where the transform of the scaling curve turns singular.

    Solves the quadratic matching the fractal's short-distance exponent to
    the correlator exponent; branch continuous in gamma -> 0 (s_c -> x in
    the bulk, x/2 on the boundary).
    """
    if gamma == 0:
        return x if regime == BULK else x / 2.0
    g2 = gamma**2
    if regime == BULK:
        # s^2 - B s + C = 0 after dividing by -g2/2
        B = 2.0 * delta_trial + 1.0 + 4.0 / g2
        C = 2.0 * delta_trial + 4.0 * x / g2
    elif regime == BOUNDARY:
        B = delta_trial + 0.5 + 2.0 / g2
        C = delta_trial / 2.0 + x / g2
    else:
        raise ValueError("regime must be 'bulk' or 'boundary'")
    disc = B * B - 4.0 * C
    if disc < 0:
        raise ValueError(f"no real singularity location (discriminant {disc})")
    return 2.0 * C / (B + math.sqrt(disc))


def fixed_point(
    x: float, gamma: float, regime: str = BULK,
    tol: float = 1e-12, max_iter: int = 1000,
) -> float:
    """Self-consistent quantum exponent: iterate delta -> s_c(x, delta).

    On the boundary the singularity sits at half the exponent, so the update
    doubles it.  The limit solves the same quadratic as inverse_kpz.
    """
    delta = x
    for _ in range(max_iter):
        s_c = predicted_singularity(x, delta, gamma, regime)
        new = s_c if regime == BULK else 2.0 * s_c
        if abs(new - delta) < tol:
            return new
        delta = new
    raise RuntimeError(f"fixed point iteration did not converge from x={x}, gamma={gamma}")


def wick_pair_exponent(q1: float, q2: float, gamma: float, regime: str = BULK) -> float:
    """Separation exponent of one pair contraction of exponential weights.

    The boundary carries twice the bulk value because the boundary field's
    covariance has twice the logarithmic coefficient.
    """
    base = -(gamma**2) * q1 * q2
    if regime == BULK:
        return base
    if regime == BOUNDARY:
        return 2.0 * base
    raise ValueError("regime must be 'bulk' or 'boundary'")
