"""Log-correlated Gaussian free fields on periodic lattices.

Fields are synthesized spectrally: white noise is filtered in Fourier space
with per-mode amplitudes chosen so that the two-point function approaches

    bulk:      <phi(z) phi(z')>  ~  -log|z - z'| + const
    boundary:  <phi(u) phi(u')>  ~  -2 log|u - u'| + const

at separations well inside the periodic box.  The zero mode is removed, so
every sample has exactly zero mean; the additive constant of the field is
pure gauge for all measured exponents.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .lattice import BoundaryLattice, TorusLattice
from .seeds import rng_from

BULK = "bulk"
BOUNDARY = "boundary"

_MAGIC = struct.unpack("<d", b"LQGFLD01")[0]
_FORMAT_VERSION = 1.0


@dataclass(frozen=True)
class FieldSample:
    """One realization of the field; immutable and safe to share."""

    lattice: TorusLattice | BoundaryLattice
    values: np.ndarray
    seed: int
    kind: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")
        self.values.setflags(write=False)


def bulk_spectrum(lattice: TorusLattice, dispersion: str = "continuum") -> np.ndarray:
    """Per-mode spectral weights S(k) on the 2d FFT grid, zero mode zeroed.

    The covariance is C(r) = (1/L^2) sum_k S(k) e^{ikr}; S(k) = 2*pi/|k|^2
    reproduces the -log|r| normalization in the continuum limit.
    """
    a = lattice.spacing
    k = 2 * np.pi * np.fft.fftfreq(lattice.n, d=a)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    if dispersion == "continuum":
        k2 = kx**2 + ky**2
    elif dispersion == "discrete":
        k2 = (4.0 / a**2) * (np.sin(kx * a / 2) ** 2 + np.sin(ky * a / 2) ** 2)
    else:
        raise ValueError(f"unknown dispersion {dispersion!r}")
    spec = np.zeros_like(k2)
    nz = k2 > 0
    spec[nz] = 2 * np.pi / k2[nz]
    return spec


def boundary_spectrum(lattice: BoundaryLattice, dispersion: str = "continuum") -> np.ndarray:
    """Per-mode weights S(k) = 2*pi/|k| for the 1d field (covariance -2 log r).

    Equivalently, each positive-momentum cosine/sine pair carries variance
    2 * 2*pi / (L |k|).
    """
    a = lattice.spacing
    k = 2 * np.pi * np.fft.fftfreq(lattice.n, d=a)
    if dispersion == "continuum":
        kabs = np.abs(k)
    elif dispersion == "discrete":
        kabs = (2.0 / a) * np.abs(np.sin(k * a / 2))
    else:
        raise ValueError(f"unknown dispersion {dispersion!r}")
    spec = np.zeros_like(kabs)
    nz = kabs > 0
    spec[nz] = 2 * np.pi / kabs[nz]
    return spec


def coincident_variance(
    lattice: TorusLattice | BoundaryLattice, kind: str | None = None,
    dispersion: str = "continuum",
) -> float:
    """Exact per-cell variance of the sampled field (mode sum, no sampling).

    This is the lattice value of the covariance at coincident points and is
    the counterterm used for Wick ordering of exponential weights.
    """
    kind = kind or (BULK if isinstance(lattice, TorusLattice) else BOUNDARY)
    if kind == BULK:
        spec = bulk_spectrum(lattice, dispersion)
        return float(spec.sum() / lattice.side**2)
    if kind == BOUNDARY:
        spec = boundary_spectrum(lattice, dispersion)
        return float(spec.sum() / lattice.side)
    raise ValueError(f"unknown kind {kind!r}")


def _synthesize(noise: np.ndarray, spec: np.ndarray, cell_volume: float) -> np.ndarray:
    # amplitude sqrt(S(k))/sqrt(cellvol) per mode reproduces the target
    # covariance for white noise filtered through fftn/ifftn
    amp = np.sqrt(spec / cell_volume)
    field = np.fft.ifftn(np.fft.fftn(noise) * amp).real
    return field - field.mean()


def sample_bulk_gff(
    lattice: TorusLattice, seed: int, dispersion: str = "continuum"
) -> FieldSample:
    """Sample a bulk log-correlated field; deterministic given seed."""
    rng = rng_from(seed)
    noise = rng.standard_normal((lattice.n, lattice.n))
    values = _synthesize(noise, bulk_spectrum(lattice, dispersion), lattice.cell_volume)
    return FieldSample(lattice=lattice, values=values, seed=seed, kind=BULK)


def sample_boundary_gff(
    lattice: BoundaryLattice, seed: int, dispersion: str = "continuum"
) -> FieldSample:
    """Sample a boundary (1d) log-correlated field; deterministic given seed."""
    rng = rng_from(seed)
    noise = rng.standard_normal(lattice.n)
    values = _synthesize(noise, boundary_spectrum(lattice, dispersion), lattice.cell_volume)
    return FieldSample(lattice=lattice, values=values, seed=seed, kind=BOUNDARY)


def write_field(field: FieldSample, path) -> None:
    """Dump a field as a flat binary grid of float64, row-major.

    Layout: 8-value float64 header (magic, version, kind, n, spacing,
    seed bit-pattern, 2 reserved) followed by the cell values.
    """
    kind_code = 0.0 if field.kind == BULK else 1.0
    seed_bits = np.uint64(field.seed).view(np.float64)
    header = np.array(
        [_MAGIC, _FORMAT_VERSION, kind_code, float(field.lattice.n),
         field.lattice.spacing, seed_bits, 0.0, 0.0],
        dtype=np.float64,
    )
    with open(path, "wb") as fh:
        header.tofile(fh)
        np.ascontiguousarray(field.values, dtype=np.float64).tofile(fh)


def read_field(path) -> FieldSample:
    """Read a field written by :func:`write_field`."""
    raw = np.fromfile(path, dtype=np.float64)
    if len(raw) < 8 or raw[0] != _MAGIC:
        raise ValueError(f"{path}: not a field dump")
    kind = BULK if raw[2] == 0.0 else BOUNDARY
    n = int(raw[3])
    spacing = float(raw[4])
    seed = int(np.float64(raw[5]).view(np.uint64))
    body = raw[8:]
    if kind == BULK:
        lattice = TorusLattice(n, spacing)
        values = body.reshape(n, n)
    else:
        lattice = BoundaryLattice(n, spacing)
        values = body.reshape(n)
    return FieldSample(lattice=lattice, values=values, seed=seed, kind=kind)
