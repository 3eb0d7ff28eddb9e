"""Discrete measures on the phase circle.

A complex number alpha is lifted to a non-negative measure with mass |alpha|
at angle arg(alpha); the first Fourier moment of the measure gives alpha
back. On a grid of K nodes the lift rounds the angle to the nearest node.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DimensionError


@dataclass(frozen=True)
class PhaseGrid:
    """K uniform nodes psi_k = -pi + 2*pi*k/K."""

    K: int
    nodes_rad: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ValueError(f"phase grid needs K >= 2 nodes, got {self.K}")
        nodes = -np.pi + 2.0 * np.pi * np.arange(self.K) / self.K
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes_rad", nodes)

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / self.K

    @property
    def phasors(self) -> np.ndarray:
        """exp(1j * psi_k)."""
        return np.exp(1j * self.nodes_rad)

    def nearest(self, angle) -> np.ndarray:
        """Index of the node closest in circular distance; ties go to the lower index."""
        a = np.asarray(angle, dtype=float)
        d = np.abs(np.angle(np.exp(1j * (a[..., None] - self.nodes_rad))))
        return np.argmin(d, axis=-1)


def make_phase_grid(K: int) -> PhaseGrid:
    return PhaseGrid(K)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Non-negative masses on the nodes of a phase grid."""

    masses: np.ndarray

    def __post_init__(self):
        m = np.array(self.masses, dtype=float).ravel()
        if not np.all(np.isfinite(m)):
            raise ValueError("measure masses must be finite")
        if np.any(m < 0):
            raise ValueError("measure masses must be non-negative")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @property
    def K(self) -> int:
        return self.masses.size


@dataclass(frozen=True)
class VectorMeasure:
    """L discrete measures on a shared grid, stored as an (L, K) array."""

    masses: np.ndarray

    def __post_init__(self):
        m = np.array(self.masses, dtype=float)
        if m.ndim != 2:
            raise DimensionError(f"vector measure must be 2-D (L, K), got {m.shape}")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("vector measure masses must be finite and non-negative")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    def __len__(self):
        return self.masses.shape[0]

    def __getitem__(self, l) -> DiscreteMeasure:
        return DiscreteMeasure(self.masses[l])

    @property
    def K(self) -> int:
        return self.masses.shape[1]

    def first_moments(self, grid: PhaseGrid) -> np.ndarray:
        _check_K(self.K, grid)
        return self.masses @ grid.phasors

    def total_masses(self) -> np.ndarray:
        return self.masses.sum(axis=1)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.masses, delimiter=",", fmt="%.17g")


def _check_K(K: int, grid: PhaseGrid) -> None:
    if K != grid.K:
        raise DimensionError(f"measure has {K} nodes, grid has {grid.K}")


def lift_coefficient(alpha: complex, grid: PhaseGrid) -> DiscreteMeasure:
    """Dirac of mass |alpha| at the node nearest to arg(alpha)."""
    m = np.zeros(grid.K)
    if alpha != 0:
        m[grid.nearest(np.angle(alpha))] = abs(alpha)
    return DiscreteMeasure(m)


def lift_vector(alphas, grid: PhaseGrid) -> VectorMeasure:
    a = np.asarray(alphas, dtype=complex).ravel()
    m = np.zeros((a.size, grid.K))
    nz = a != 0
    m[np.flatnonzero(nz), grid.nearest(np.angle(a[nz]))] = np.abs(a[nz])
    return VectorMeasure(m)


def first_moment(m: DiscreteMeasure, grid: PhaseGrid) -> complex:
    """sum_k exp(1j psi_k) * mass_k."""
    _check_K(m.K, grid)
    return complex(m.masses @ grid.phasors)


def total_mass(m: DiscreteMeasure) -> float:
    return float(m.masses.sum())


@dataclass(frozen=True)
class GroundCost:
    """c(psi_j, psi_k) = |exp(1j psi_j) - exp(1j psi_k)|^2 + gamma on a phase grid."""

    gamma: float
    matrix: np.ndarray

    @property
    def K(self) -> int:
        return self.matrix.shape[0]


def make_ground_cost(grid: PhaseGrid, gamma: float) -> GroundCost:
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    diff = grid.nodes_rad[:, None] - grid.nodes_rad[None, :]
    C = 2.0 - 2.0 * np.cos(diff) + gamma
    C.setflags(write=False)
    return GroundCost(float(gamma), C)
