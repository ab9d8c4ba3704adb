"""Deterministic self-similar fractal subsets of the lattice.

Generators produce masks with exactly known similarity exponents.  Masks
carry per-cell *coverage fractions*: the exact area (or length) fraction of
each lattice cell occupied by the generation-g prefractal.  Coverage makes
restricted measures exact for any lattice size, aligned or not, so the total
classical mass of a mask is independent of generation depth to rounding.

Masks are built from geometry alone and never see a field sample, so they
are independent of all randomness downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import BoundaryLattice, TorusLattice
from .scaling import ScalingEstimate

BULK = "bulk"
BOUNDARY = "boundary"


@dataclass(frozen=True)
class FractalMask:
    """A fractal subset of lattice cells plus its natural measure data.

    coverage: fraction of each cell inside the set, flat array over cells.
    cells: flat indices with coverage > 0.
    piece_scale: physical side of one generation-``generation`` piece.
    """

    lattice: TorusLattice | BoundaryLattice
    coverage: np.ndarray
    generation: int
    x_exact: float
    kind: str
    base: int
    cells: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.coverage.min() < 0 or self.coverage.max() > 1 + 1e-12:
            raise ValueError("coverage fractions must lie in [0, 1]")
        cells = np.nonzero(self.coverage > 0)[0]
        if len(cells) == 0:
            raise ValueError("mask is empty")
        if not 0 <= self.x_exact <= 1:
            raise ValueError("exponent out of range")
        object.__setattr__(self, "cells", cells)
        self.coverage.setflags(write=False)

    @property
    def hausdorff_dimension(self) -> float:
        if self.kind == BULK:
            return 2.0 - 2.0 * self.x_exact
        return 1.0 - self.x_exact

    @property
    def piece_scale(self) -> float:
        return self.lattice.side * float(self.base) ** (-self.generation)

    @property
    def measure_density(self) -> float:
        """Per-cell density factor making the gamma=0 restricted mass O(1).

        The natural measure assigns each generation piece a mass equal to its
        scale raised to the fractal dimension; on the lattice this is the
        piece scale to the power (d_H - d) applied on top of flat cell mass.
        """
        d = 2 if self.kind == BULK else 1
        return self.piece_scale ** (self.hausdorff_dimension - d)


def _kept_intervals_1d(length: float, base: int, keep: tuple[int, ...], generations: int):
    """Left endpoints and width of the kept intervals at the given depth."""
    keep_arr = np.asarray(sorted(keep), dtype=np.float64)
    lefts = np.array([0.0])
    width = float(length)
    for _ in range(generations):
        width /= base
        lefts = (lefts[:, None] + keep_arr[None, :] * width).ravel()
    return lefts, width


def _coverage_1d(n: int, lefts: np.ndarray, width: float) -> np.ndarray:
    """Exact overlap of each unit cell [i, i+1) with the kept intervals."""
    cov = np.zeros(n)
    for lo in lefts:
        hi = lo + width
        i0, i1 = int(math.floor(lo)), int(math.ceil(hi))
        for i in range(i0, min(i1, n)):
            cov[i] += min(hi, i + 1) - max(lo, i)
    return np.clip(cov, 0.0, 1.0)


def _validate_pattern(base: int, keep: tuple[int, ...]) -> None:
    if base < 2:
        raise ValueError("base must be >= 2")
    if not keep or len(set(keep)) != len(keep):
        raise ValueError("keep pattern must be a nonempty set of slots")
    if any(k < 0 or k >= base for k in keep):
        raise ValueError("keep slots must lie in [0, base)")


def cantor_dust(
    lattice: TorusLattice,
    generations: int,
    base: int = 3,
    keep: tuple[int, ...] = (0, 2),
) -> FractalMask:
    """Product of two 1d Cantor sets: keep ``len(keep)`` of ``base`` slots per axis.

    x_exact = 1 - log(m)/log(b).  The default middle-thirds pattern gives
    x ~ 0.36907.  Keeping every slot reproduces the full domain (x = 0).
    """
    _validate_pattern(base, keep)
    if generations < 1:
        raise ValueError("generations must be >= 1")
    if base**generations > 8 * lattice.n:
        raise ValueError("generation pieces far below cell resolution")
    lefts, width = _kept_intervals_1d(lattice.n, base, keep, generations)
    cov1 = _coverage_1d(lattice.n, lefts, width)
    coverage = np.outer(cov1, cov1).ravel()
    x = 1.0 - math.log(len(keep)) / math.log(base)
    return FractalMask(lattice=lattice, coverage=coverage, generation=generations,
                       x_exact=x, kind=BULK, base=base)


def sierpinski_carpet(lattice: TorusLattice, generations: int) -> FractalMask:
    """Standard 3x3-minus-center carpet; d_H = log 8 / log 3."""
    if generations < 1:
        raise ValueError("generations must be >= 1")
    if 3**generations > 8 * lattice.n:
        raise ValueError("generation pieces far below cell resolution")
    n = lattice.n
    coverage = np.zeros((n, n))
    keep_slots = [(i, j) for i in range(3) for j in range(3) if not (i == 1 and j == 1)]

    # enumerate the 8^g kept squares, accumulating exact cell overlaps
    def descend(x0, y0, size, depth):
        if depth == 0:
            i0, i1 = int(math.floor(x0)), int(math.ceil(x0 + size))
            j0, j1 = int(math.floor(y0)), int(math.ceil(y0 + size))
            ii = np.arange(i0, min(i1, n))
            jj = np.arange(j0, min(j1, n))
            ox = np.minimum(x0 + size, ii + 1) - np.maximum(x0, ii)
            oy = np.minimum(y0 + size, jj + 1) - np.maximum(y0, jj)
            coverage[i0:i0 + len(ii), j0:j0 + len(jj)] += np.outer(ox, oy)
            return
        sub = size / 3.0
        for (si, sj) in keep_slots:
            descend(x0 + si * sub, y0 + sj * sub, sub, depth - 1)

    descend(0.0, 0.0, float(n), generations)
    np.clip(coverage, 0.0, 1.0, out=coverage)
    x = 1.0 - math.log(8) / (2 * math.log(3))
    return FractalMask(lattice=lattice, coverage=coverage.ravel(),
                       generation=generations, x_exact=x, kind=BULK, base=3)


def boundary_cantor(
    lattice: BoundaryLattice,
    generations: int,
    base: int = 3,
    keep: tuple[int, ...] = (0, 2),
) -> FractalMask:
    """1d Cantor subset of the boundary ring; x_tilde = 1 - log(m)/log(b)."""
    _validate_pattern(base, keep)
    if generations < 1:
        raise ValueError("generations must be >= 1")
    if base**generations > 8 * lattice.n:
        raise ValueError("generation pieces far below cell resolution")
    lefts, width = _kept_intervals_1d(lattice.n, base, keep, generations)
    coverage = _coverage_1d(lattice.n, lefts, width)
    x = 1.0 - math.log(len(keep)) / math.log(base)
    return FractalMask(lattice=lattice, coverage=coverage, generation=generations,
                       x_exact=x, kind=BOUNDARY, base=base)


def full_domain(lattice: TorusLattice | BoundaryLattice) -> FractalMask:
    """The trivial mask covering everything (x_exact = 0)."""
    if isinstance(lattice, TorusLattice):
        return cantor_dust(lattice, generations=1, base=2, keep=(0, 1))
    return boundary_cantor(lattice, generations=1, base=2, keep=(0, 1))


def default_generations(lattice, base: int = 3) -> int:
    """Depth at which generation pieces reach cell size (cleanest scaling window)."""
    return max(1, round(math.log(lattice.n) / math.log(base)))


def occupied_grid(mask: FractalMask) -> np.ndarray:
    """Boolean occupancy grid (n x n bulk, n boundary)."""
    occ = mask.coverage > 0
    if mask.kind == BULK:
        return occ.reshape(mask.lattice.n, mask.lattice.n)
    return occ


def box_counting_dimension(
    mask: FractalMask,
    min_count: int | None = None,
    max_occupancy: float = 0.9,
) -> ScalingEstimate:
    """Classical box-counting estimate of the mask's fractal dimension.

    Counts occupied boxes at dyadic scales and fits log N against log size.
    A box intersects the set exactly when one of its cells has positive
    coverage, so the counts are exact for the generation prefractal.  Scales
    carrying no information are dropped: boxes below the generation piece
    size (locally solid), nearly full tilings, and the coarse octaves where
    the count is too small for the power law to have set in (these dominate
    the bias of naive fits).
    """
    occ = occupied_grid(mask)
    n = mask.lattice.n
    if min_count is None:
        min_count = 256 if mask.kind == BULK else 16
    piece_cells = mask.piece_scale / mask.lattice.spacing
    all_sizes, all_counts, good = [], [], []
    s = 1
    while s <= n // 4:
        if mask.kind == BULK:
            blocks = occ.reshape(n // s, s, n // s, s).any(axis=(1, 3))
            total = (n // s) ** 2
        else:
            blocks = occ.reshape(n // s, s).any(axis=1)
            total = n // s
        c = int(blocks.sum())
        all_sizes.append(s * mask.lattice.spacing)
        all_counts.append(c)
        # below the generation piece size the set is locally solid, not fractal
        good.append(s >= piece_cells and min_count <= c <= max_occupancy * total)
        s *= 2
    if sum(good) >= 3:
        sizes = [sz for sz, g in zip(all_sizes, good) if g]
        counts = [c for c, g in zip(all_counts, good) if g]
    elif len(all_sizes) >= 3:
        sizes, counts = all_sizes, all_counts  # degenerate masks (e.g. full domain)
    else:
        raise ValueError("fewer than 3 usable dyadic scales for box counting")
    lx, ly = np.log(sizes), np.log(counts)
    coef, cov = np.polyfit(lx, ly, 1, cov=True)
    stderr = max(float(np.sqrt(cov[0, 0])), 1e-15)
    resid = ly - np.polyval(coef, lx)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return ScalingEstimate(exponent=-float(coef[0]), stderr=stderr,
                           window=(float(min(sizes)), float(max(sizes))), r2=r2)


def sample_centers(mask: FractalMask, count: int, rng: np.random.Generator) -> np.ndarray:
    """Probe points drawn from mask cells, weighted by coverage."""
    p = mask.coverage[mask.cells]
    p = p / p.sum()
    return rng.choice(mask.cells, size=count, replace=True, p=p)


def neighborhood_volume(mask: FractalMask, center: int, radii: np.ndarray) -> np.ndarray:
    """Mask mass (coverage times cell volume times density) within each radius."""
    lat = mask.lattice
    if mask.kind == BULK:
        n = lat.n
        r0, c0 = divmod(int(center), n)
        ii = np.arange(n)
        dr = np.minimum((ii - r0) % n, (r0 - ii) % n)
        dc = np.minimum((ii - c0) % n, (c0 - ii) % n)
        dist = np.sqrt(dr[:, None] ** 2 + dc[None, :] ** 2).ravel() * lat.spacing
    else:
        ii = np.arange(lat.n)
        dist = np.minimum((ii - center) % lat.n, (center - ii) % lat.n) * lat.spacing
    mass = mask.coverage * lat.cell_volume * mask.measure_density
    order = np.argsort(dist)
    cum = np.cumsum(mass[order])
    idx = np.searchsorted(dist[order], radii, side="right") - 1
    return np.where(idx >= 0, cum[np.clip(idx, 0, None)], 0.0)


def export_mask(mask: FractalMask, path) -> None:
    """Write the mask as a run-length-encoded cell-index list (JSON)."""
    cells = mask.cells
    breaks = np.nonzero(np.diff(cells) != 1)[0]
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [len(cells) - 1]])
    runs = [[int(cells[s]), int(cells[e] - cells[s] + 1)] for s, e in zip(starts, ends)]
    doc = {
        "kind": mask.kind,
        "n": mask.lattice.n,
        "generations": mask.generation,
        "x_exact": mask.x_exact,
        "cells": runs,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def read_mask_cells(path) -> tuple[dict, np.ndarray]:
    """Read an exported mask document; returns (metadata, flat cell indices)."""
    with open(path) as fh:
        doc = json.load(fh)
    cells = np.concatenate([np.arange(s, s + ln) for s, ln in doc["cells"]])
    return doc, cells
