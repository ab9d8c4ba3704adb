"""Periodic lattices for the bulk (torus) and boundary (ring) geometries."""

from __future__ import annotations

from dataclasses import dataclass


def _check_size(n: int) -> None:
    if n < 8 or (n & (n - 1)) != 0:
        raise ValueError(f"lattice size must be a power of two >= 8, got {n}")


@dataclass(frozen=True)
class TorusLattice:
    """Square periodic lattice of n x n cells with physical spacing a."""

    n: int
    spacing: float = 1.0

    def __post_init__(self):
        _check_size(self.n)
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @property
    def side(self) -> float:
        return self.n * self.spacing

    @property
    def num_cells(self) -> int:
        return self.n * self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 2


@dataclass(frozen=True)
class BoundaryLattice:
    """One-dimensional periodic lattice of n cells with spacing a."""

    n: int
    spacing: float = 1.0

    def __post_init__(self):
        _check_size(self.n)
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @property
    def side(self) -> float:
        return self.n * self.spacing

    @property
    def num_cells(self) -> int:
        return self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing
