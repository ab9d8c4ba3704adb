"""Covariant lattice Laplacian in the random metric and its heat kernel.

The operator is the time-changed walk generator L = W^{-1} A, where A is the
flat combinatorial Laplacian (unit bulk conductances, 1/a on the ring) and
W are the quantum cell masses.  L annihilates constants, is self-adjoint in
the weighted inner product, conserves Sum p_i W_i, and reduces exactly to
the standard lattice Laplacian for gamma = 0.

Three evaluation routes:
  * spectral/FFT for flat (gamma = 0) operators -- exact and fast;
  * Krylov action of the matrix exponential (scipy) for small lattices;
  * continuous-time random-walk Monte Carlo for everything else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .gff import BOUNDARY, BULK
from .lattice import BoundaryLattice, TorusLattice
from .measures import QuantumMeasure, metric_q
from .walkers import derive_walker_seeds, walk_ring, walk_torus

DEFAULT_MAX_EXACT_CELLS = 16384


@dataclass(frozen=True)
class MetricLaplacian:
    """Generator L = W^{-1} A of the quantum-metric diffusion."""

    lattice: TorusLattice | BoundaryLattice
    masses: np.ndarray
    kind: str

    def __post_init__(self):
        self.masses.setflags(write=False)

    @property
    def degree(self) -> int:
        return 4 if self.kind == BULK else 2

    @property
    def conductance(self) -> float:
        # chosen so the flat operator is the standard lattice Laplacian
        return 1.0 if self.kind == BULK else 1.0 / self.lattice.spacing

    @property
    def is_flat(self) -> bool:
        return bool(np.ptp(self.masses) == 0.0)

    def jump_rates(self) -> np.ndarray:
        """|L_ii| per site: total conductance over the site mass."""
        return self.degree * self.conductance / self.masses

    def neg_laplacian(self) -> sp.csr_matrix:
        """The flat part -A (positive semidefinite, field independent)."""
        return _neg_A(self.kind, self.lattice.n, self.conductance)

    def generator(self) -> sp.csr_matrix:
        """Sparse L = W^{-1} A."""
        negA = self.neg_laplacian()
        return sp.diags(-1.0 / self.masses) @ negA


@dataclass(frozen=True)
class HeatState:
    """Density p with respect to the quantum measure at one time."""

    lattice: TorusLattice | BoundaryLattice
    values: np.ndarray
    time: float


def build_operator(measure: QuantumMeasure) -> MetricLaplacian:
    """Operator for the metric measure (bulk area q=1, boundary length q=1/2)."""
    kind = BULK if isinstance(measure.lattice, TorusLattice) else BOUNDARY
    if measure.params.q != metric_q(kind):
        raise ValueError(f"metric operator requires q={metric_q(kind)} for {kind}")
    w = measure.weights
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("cell masses must be positive and finite")
    return MetricLaplacian(lattice=measure.lattice, masses=w, kind=kind)


# ---------------------------------------------------------------------------
# flat spectral machinery

def flat_eigenvalues(lattice, kind: str) -> np.ndarray:
    """Eigenvalues of -A/cellmass for the flat operator (discrete dispersion)."""
    a = lattice.spacing
    k = 2 * np.pi * np.fft.fftfreq(lattice.n, d=a)
    if kind == BULK:
        kx, ky = np.meshgrid(k, k, indexing="ij")
        return (4.0 / a**2) * (np.sin(kx * a / 2) ** 2 + np.sin(ky * a / 2) ** 2)
    return (4.0 / a**2) * np.sin(k * a / 2) ** 2


def _grid(values: np.ndarray, lattice, kind: str) -> np.ndarray:
    return values.reshape((lattice.n, lattice.n) if kind == BULK else (lattice.n,))


def flat_evolve(op: MetricLaplacian, z0: int, t: float) -> np.ndarray:
    """Exact kernel column of the flat semigroup via FFT."""
    lam = flat_eigenvalues(op.lattice, op.kind)
    delta = np.zeros(op.lattice.num_cells)
    delta[z0] = 1.0
    ft = np.fft.fftn(_grid(delta, op.lattice, op.kind))
    p = np.fft.ifftn(ft * np.exp(-t * lam)).real.ravel()
    return p / op.lattice.cell_volume


def flat_return_series(lattice, kind: str, times: np.ndarray) -> np.ndarray:
    """Exact flat return probability (1/N) sum_k exp(-t lambda_k)."""
    lam = flat_eigenvalues(lattice, kind).ravel()
    return np.array([np.exp(-t * lam).mean() for t in times])


def flat_aggregated_series(
    lattice, kind: str,
    mask_weights: np.ndarray,
    center_weights: np.ndarray,
    times: np.ndarray,
) -> np.ndarray:
    """Center-averaged flat heat collection, summed over all centers exactly.

    Returns B(t) = (1/sum c) sum_{z0} c(z0) sum_z m(z) K(z, z0; t) computed
    spectrally, avoiding any center sampling.
    """
    lam = flat_eigenvalues(lattice, kind)
    mhat = np.fft.fftn(_grid(mask_weights, lattice, kind))
    chat = np.fft.fftn(_grid(center_weights, lattice, kind))
    cross = (np.conj(mhat) * chat).real
    norm = lattice.num_cells * lattice.cell_volume * center_weights.sum()
    return np.array([(cross * np.exp(-t * lam)).sum() / norm for t in times])


# ---------------------------------------------------------------------------
# exact (Krylov) evolution

def evolve_exact(
    op: MetricLaplacian, z0: int, t: float,
    max_cells: int = DEFAULT_MAX_EXACT_CELLS,
) -> HeatState:
    """Action of exp(tL) on the unit point mass at z0 (density convention)."""
    if t <= 0:
        raise ValueError("time must be positive")
    if op.lattice.num_cells > max_cells:
        raise ValueError(
            f"lattice with {op.lattice.num_cells} cells exceeds the exact "
            f"backend limit {max_cells}")
    if op.is_flat:
        return HeatState(op.lattice, flat_evolve(op, z0, t), t)
    p0 = np.zeros(op.lattice.num_cells)
    p0[z0] = 1.0 / op.masses[z0]
    p = spla.expm_multiply(op.generator() * t, p0)
    return HeatState(op.lattice, p, t)


def evolve_exact_series(
    op: MetricLaplacian, z0: int, times: np.ndarray,
    max_cells: int = DEFAULT_MAX_EXACT_CELLS,
) -> np.ndarray:
    """Kernel columns at an increasing time grid, stepping the semigroup."""
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be positive and increasing")
    if op.lattice.num_cells > max_cells:
        raise ValueError("lattice exceeds the exact backend limit")
    if op.is_flat:
        return np.stack([flat_evolve(op, z0, t) for t in times])
    gen = op.generator()
    p = np.zeros(op.lattice.num_cells)
    p[z0] = 1.0 / op.masses[z0]
    out = np.empty((len(times), len(p)))
    t_prev = 0.0
    for i, t in enumerate(times):
        p = spla.expm_multiply(gen * (t - t_prev), p)
        out[i] = p
        t_prev = t
    return out


# ---------------------------------------------------------------------------
# Monte Carlo evolution

@dataclass(frozen=True)
class McEvolution:
    """Walker endpoints at each grid time; unbiased semigroup estimator."""

    op: MetricLaplacian
    times: np.ndarray
    positions: np.ndarray  # (walkers, ntimes)
    seed: int

    @property
    def walkers(self) -> int:
        return self.positions.shape[0]

    def occupation(self, time_index: int) -> np.ndarray:
        """Walker counts per cell at one grid time."""
        return np.bincount(self.positions[:, time_index],
                           minlength=self.op.lattice.num_cells)

    def density(self, time_index: int) -> tuple[np.ndarray, np.ndarray]:
        """Estimated kernel column (density w.r.t. the quantum measure), stderr."""
        counts = self.occupation(time_index)
        phat = counts / self.walkers
        se = np.sqrt(np.maximum(phat * (1 - phat), 0) / self.walkers)
        return phat / self.op.masses, se / self.op.masses

    def site_average(self, ratio: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean of ratio(Z_t) over walkers per time, with standard errors."""
        vals = ratio[self.positions]
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / np.sqrt(self.walkers)
        return mean, se

    def return_fraction(self, z0: int) -> np.ndarray:
        """Fraction of walkers sitting exactly at z0 at each grid time."""
        return (self.positions == z0).mean(axis=0)


def evolve_mc(
    op: MetricLaplacian, z0: int, times: np.ndarray, walkers: int, seed: int,
) -> McEvolution:
    """Simulate the continuous-time walk; deterministic given seed.

    Holding times are exponential with rate |L_ii| = degree * conductance /
    W_i, jumps uniform over neighbors: the unique walk with generator L.
    """
    times = np.ascontiguousarray(np.asarray(times, dtype=float))
    if walkers < 1:
        raise ValueError("need at least one walker")
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be positive and increasing")
    inv_rate = np.ascontiguousarray(op.masses / (op.degree * op.conductance))
    seeds = derive_walker_seeds(seed, walkers)
    out = np.zeros((walkers, len(times)), dtype=np.int64)
    kernel = walk_torus if op.kind == BULK else walk_ring
    kernel(op.lattice.n, inv_rate, z0, times, seeds, out)
    return McEvolution(op=op, times=times, positions=out, seed=seed)


# ---------------------------------------------------------------------------
# observables

def fractal_average(op: MetricLaplacian, fractal_measure: QuantumMeasure,
                    state: HeatState) -> float:
    """Heat-kernel collection integral of the fractal measure at one time."""
    if fractal_measure.lattice != state.lattice:
        raise ValueError("measure and state live on different lattices")
    return float(fractal_measure.weights @ state.values)


def fractal_average_mc(mc: McEvolution, fractal_measure: QuantumMeasure):
    """Collection integral from walker endpoints: E[muX(Z_t) / W(Z_t)]."""
    if fractal_measure.lattice != mc.op.lattice:
        raise ValueError("measure and walk live on different lattices")
    ratio = fractal_measure.weights / mc.op.masses
    return mc.site_average(ratio)


def equilibrium_average(op: MetricLaplacian, fractal_measure: QuantumMeasure) -> float:
    """Large-time limit of the collection integral on the periodic domain."""
    return float(fractal_measure.weights.sum() / op.masses.sum())


# ---------------------------------------------------------------------------
# resolvent powers

_LU_CACHE: dict[tuple, object] = {}


def _neg_A(kind: str, n: int, conductance: float) -> sp.csr_matrix:
    key = ("negA", kind, n, conductance)
    mat = _LU_CACHE.get(key)
    if mat is None:
        if kind == BULK:
            idx = np.arange(n * n).reshape(n, n)
            shifts = ((1, 0), (-1, 0), (0, 1), (0, -1))
            rows = np.concatenate([idx.ravel()] * 4)
            cols = np.concatenate([np.roll(idx, s, axis=(0, 1)).ravel() for s in shifts])
            deg = 4
            N = n * n
        else:
            idx = np.arange(n)
            rows = np.concatenate([idx, idx])
            cols = np.concatenate([np.roll(idx, 1), np.roll(idx, -1)])
            deg = 2
            N = n
        adj = sp.coo_matrix((np.full(len(rows), conductance), (rows, cols)),
                            shape=(N, N)).tocsr()
        mat = (deg * conductance * sp.identity(N, format="csr") - adj).tocsr()
        _LU_CACHE[key] = mat
    return mat


def _grounded_lu(kind: str, n: int, conductance: float):
    key = ("lu", kind, n, conductance)
    lu = _LU_CACHE.get(key)
    if lu is None:
        negA = _neg_A(kind, n, conductance).tocsc()
        lu = spla.splu(negA[1:, :][:, 1:])
        _LU_CACHE[key] = lu
    return lu


def _solve_neg_L(op: MetricLaplacian, v: np.ndarray) -> np.ndarray:
    """Solve (-L) x = v on the zero-mode complement; gauge x[ground] = 0."""
    W = op.masses
    v = v - (W @ v) / W.sum()  # project onto the range of L
    b = W * v
    lu = _grounded_lu(op.kind, op.lattice.n, op.conductance)
    x = np.zeros(len(b))
    x[1:] = lu.solve(b[1:])
    return x


def resolvent_power(op: MetricLaplacian, z0: int, s: int) -> np.ndarray:
    """Kernel column of the s-th inverse power of -L from z0.

    Realized as s successive linear solves with the flat Laplacian
    (factorized once per lattice) and mass reweighting between solves; each
    solve is performed orthogonal to constants, so the result is defined up
    to an additive constant that drops out of fitted exponents.
    """
    if s not in (1, 2, 3):
        raise ValueError("resolvent power supports s in {1, 2, 3}")
    v = np.zeros(op.lattice.num_cells)
    v[z0] = 1.0 / op.masses[z0]
    for _ in range(s):
        v = _solve_neg_L(op, v)
    return v
