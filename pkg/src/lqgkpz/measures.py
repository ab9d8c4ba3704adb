"""Wick-renormalized exponential measures on the lattice.

Cell weights are cellvol * exp(q*gamma*phi - (q*gamma)^2 Var/2); the
counterterm uses the exact coincident variance of the sampled field so that
each weight has expectation exactly equal to the flat cell volume.  With
q = 1 this is the quantum area (bulk) or, with q = 1/2, the quantum length
(boundary); fractal trial measures use q = 1 - delta_trial (bulk) or
q = (1 - delta_trial)/2 (boundary).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fractals import FractalMask
from .gff import BOUNDARY, BULK, FieldSample, coincident_variance
from .lattice import BoundaryLattice, TorusLattice


@dataclass(frozen=True)
class ChaosParameters:
    """Coupling gamma, exponent multiplier q, and the field's cell variance."""

    gamma: float
    q: float
    variance: float

    def __post_init__(self):
        if not 0 <= self.gamma < 2:
            raise ValueError("coupling gamma must lie in [0, 2)")
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")


def metric_q(kind: str) -> float:
    """Exponent multiplier of the metric measure: area q=1, length q=1/2."""
    return 1.0 if kind == BULK else 0.5


def fractal_q(delta_trial: float, kind: str) -> float:
    """Exponent multiplier of the trial fractal measure."""
    q = 1.0 - delta_trial
    return q if kind == BULK else q / 2.0


@dataclass(frozen=True)
class QuantumMeasure:
    """Nonnegative random cell weights w_i = cellvol * :exp(q g phi_i):."""

    lattice: TorusLattice | BoundaryLattice
    weights: np.ndarray
    params: ChaosParameters

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        self.weights.setflags(write=False)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


def build_measure(field: FieldSample, params: ChaosParameters) -> QuantumMeasure:
    """Wick-ordered exponential of the field; gamma=0 gives flat cell volumes."""
    qg = params.q * params.gamma
    cellvol = field.lattice.cell_volume
    if qg == 0.0:
        weights = np.full(field.values.size, cellvol)
    else:
        weights = cellvol * np.exp(qg * field.values.ravel() - 0.5 * qg**2 * params.variance)
    return QuantumMeasure(lattice=field.lattice, weights=weights, params=params)


def measure_for(field: FieldSample, gamma: float, q: float,
                dispersion: str = "continuum") -> QuantumMeasure:
    """Convenience: build a measure computing the exact variance on the fly."""
    var = coincident_variance(field.lattice, field.kind, dispersion)
    return build_measure(field, ChaosParameters(gamma=gamma, q=q, variance=var))


def restrict_to_mask(measure: QuantumMeasure, mask: FractalMask) -> QuantumMeasure:
    """Measure supported on the mask, weighted by coverage and rescaled.

    Surviving weights are multiplied by the mask's natural per-cell density
    so the gamma=0 total mass is independent of generation depth.
    """
    if mask.lattice != measure.lattice:
        raise ValueError("mask and measure are defined on different lattices")
    if len(mask.cells) == 0:
        raise ValueError("mask is empty")
    weights = measure.weights * mask.coverage * mask.measure_density
    return QuantumMeasure(lattice=measure.lattice, weights=weights, params=measure.params)


class QuantumBoxCounter:
    """Adaptive dyadic box decomposition by quantum mass (bulk lattices).

    A box becomes a leaf once its quantum mass drops to the threshold; only
    boxes meeting the mask are subdivided or counted, so cells of large mass
    away from the mask cannot block the recursion.
    """

    def __init__(self, measure: QuantumMeasure, mask: FractalMask):
        if not isinstance(measure.lattice, TorusLattice):
            raise ValueError("box counting is defined on the bulk lattice")
        if mask.lattice != measure.lattice:
            raise ValueError("mask and measure are defined on different lattices")
        if measure.params.q != metric_q(BULK):
            raise ValueError("box counting requires the q=1 area measure")
        n = measure.lattice.n
        W = measure.weights.reshape(n, n)
        occ = (mask.coverage > 0).reshape(n, n)
        self.n = n
        self.total_mass = measure.total_mass
        self._mass = np.zeros((n + 1, n + 1))
        self._mass[1:, 1:] = W.cumsum(0).cumsum(1)
        self._occ = np.zeros((n + 1, n + 1), dtype=np.int64)
        self._occ[1:, 1:] = occ.cumsum(0).cumsum(1)
        self.max_mask_cell_mass = float(W[occ].max())

    def _box_sums(self, table, pos, size):
        r, c = pos[:, 0], pos[:, 1]
        return (table[r + size, c + size] - table[r, c + size]
                - table[r + size, c] + table[r, c])

    def count(self, delta: float) -> int:
        """Number of leaves (mass <= delta) that intersect the mask."""
        if not 0 < delta < self.total_mass:
            raise ValueError("delta must lie in (0, total mass)")
        if delta < self.max_mask_cell_mass:
            raise ValueError(
                f"delta {delta:g} is below single-cell resolution "
                f"({self.max_mask_cell_mass:g}); insufficient lattice depth")
        total = 0
        pos = np.array([[0, 0]])
        size = self.n
        while len(pos):
            pos = pos[self._box_sums(self._occ, pos, size) > 0]
            if not len(pos):
                break
            leaf = self._box_sums(self._mass, pos, size) <= delta
            total += int(leaf.sum())
            rest = pos[~leaf]
            if not len(rest):
                break
            assert size > 1  # guarded by the max-cell-mass check
            h = size // 2
            pos = np.concatenate([rest, rest + [0, h], rest + [h, 0], rest + [h, h]])
            size = h
        return total


def quantum_box_counting(measure: QuantumMeasure, mask: FractalMask, delta: float) -> int:
    """Count mask-intersecting leaves of the quantum-mass dyadic subdivision."""
    return QuantumBoxCounter(measure, mask).count(delta)
