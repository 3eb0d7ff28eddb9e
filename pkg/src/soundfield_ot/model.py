"""Plane-wave representation of a 2D monochromatic sound field.

A field is approximated by a finite sum of plane waves

    p(r) = sum_l alpha_l * exp(-1j * k * n_l . r),   n_l = (cos theta_l, sin theta_l)

and the pairing between steering vectors and coefficient vectors is the
plain bilinear sum (no conjugation).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_SPEED_OF_SOUND = 343.0


class DimensionError(ValueError):
    """Raised when array shapes do not agree."""


def wavenumber(frequency_hz: float, speed_mps: float = DEFAULT_SPEED_OF_SOUND) -> float:
    """Return the wavenumber 2*pi*f/c in rad/m."""
    if not frequency_hz > 0 or not speed_mps > 0:
        raise ValueError(
            f"frequency and speed of sound must be positive, got {frequency_hz}, {speed_mps}"
        )
    return 2.0 * np.pi * frequency_hz / speed_mps


def uniform_directions(num: int) -> np.ndarray:
    """``num`` angles -pi + 2*pi*l/num, l = 0..num-1."""
    if num < 1:
        raise ValueError("need at least one direction")
    return -np.pi + 2.0 * np.pi * np.arange(num) / num


@dataclass(frozen=True)
class PlaneWaveDictionary:
    """Expansion basis: a frequency plus L propagation directions."""

    frequency_hz: float
    directions_rad: np.ndarray
    speed_of_sound_mps: float = DEFAULT_SPEED_OF_SOUND
    wavenumber_radpm: float = field(init=False)

    def __post_init__(self):
        d = np.asarray(self.directions_rad, dtype=float).ravel()
        if d.size < 1:
            raise ValueError("dictionary needs at least one direction")
        if not np.all(np.isfinite(d)) or np.any(d < -np.pi) or np.any(d >= np.pi):
            raise ValueError("directions must lie in [-pi, pi)")
        if np.any(np.diff(d) <= 0):
            raise ValueError("directions must be strictly increasing")
        d.setflags(write=False)
        object.__setattr__(self, "directions_rad", d)
        object.__setattr__(
            self, "wavenumber_radpm", wavenumber(self.frequency_hz, self.speed_of_sound_mps)
        )

    @classmethod
    def uniform(cls, frequency_hz: float, num_directions: int,
                speed_of_sound_mps: float = DEFAULT_SPEED_OF_SOUND) -> "PlaneWaveDictionary":
        return cls(frequency_hz, uniform_directions(num_directions), speed_of_sound_mps)

    @property
    def size(self) -> int:
        return self.directions_rad.size

    @property
    def unit_vectors(self) -> np.ndarray:
        """(L, 2) array of direction vectors n_l."""
        return np.stack([np.cos(self.directions_rad), np.sin(self.directions_rad)], axis=1)

    def steering_matrix(self, points) -> np.ndarray:
        """Stacked steering vectors, shape (N, L), for N points of shape (N, 2)."""
        pts = _as_points(points)
        phase = self.wavenumber_radpm * pts @ self.unit_vectors.T
        return np.exp(-1j * phase)


@dataclass(frozen=True)
class CoefficientVector:
    """Complex plane-wave amplitudes, one per dictionary direction."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def check(self, dictionary: PlaneWaveDictionary) -> "CoefficientVector":
        if len(self) != dictionary.size:
            raise DimensionError(
                f"coefficient vector has length {len(self)}, dictionary has {dictionary.size}"
            )
        return self


@dataclass(frozen=True)
class SensorArray:
    """Microphone positions in the plane, shape (Q, 2)."""

    positions_m: np.ndarray

    def __post_init__(self):
        pos = _as_points(self.positions_m)
        if pos.shape[0] < 1:
            raise ValueError("sensor array needs at least one sensor")
        pos = pos.copy()
        pos.setflags(write=False)
        object.__setattr__(self, "positions_m", pos)

    @classmethod
    def circular(cls, num_sensors: int, radius_m: float) -> "SensorArray":
        """Sensors equally spaced on a circle, the first at angle 0."""
        ang = 2.0 * np.pi * np.arange(num_sensors) / num_sensors
        return cls(radius_m * np.stack([np.cos(ang), np.sin(ang)], axis=1))

    def __len__(self):
        return self.positions_m.shape[0]

    def subset(self, idx: Sequence[int]) -> "SensorArray":
        return SensorArray(self.positions_m[np.asarray(idx, dtype=int)])


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DimensionError(f"expected points of shape (N, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return pts


def steering_vector(dictionary: PlaneWaveDictionary, r) -> np.ndarray:
    """Steering vector g(r); entry l is exp(-1j k n_l . r)."""
    return dictionary.steering_matrix(r)[0]


def _coeff_values(dictionary, coeffs) -> np.ndarray:
    if isinstance(coeffs, CoefficientVector):
        vals = coeffs.values
    else:
        vals = np.asarray(coeffs, dtype=complex).ravel()
    if vals.size != dictionary.size:
        raise DimensionError(
            f"coefficient vector has length {vals.size}, dictionary has {dictionary.size}"
        )
    return vals


def field_pressure(dictionary: PlaneWaveDictionary, coeffs, r) -> complex:
    """Complex pressure at a single point."""
    return complex(field_at(dictionary, coeffs, r)[0])


def field_at(dictionary: PlaneWaveDictionary, coeffs, points) -> np.ndarray:
    """Complex pressure at each of N points, evaluated in memory-bounded chunks."""
    vals = _coeff_values(dictionary, coeffs)
    pts = _as_points(points)
    out = np.empty(pts.shape[0], dtype=complex)
    chunk = max(1, 2**20 // max(1, dictionary.size))
    for start in range(0, pts.shape[0], chunk):
        sl = slice(start, start + chunk)
        out[sl] = dictionary.steering_matrix(pts[sl]) @ vals
    return out


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle [x_min, x_max] x [y_min, y_max]."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"empty region {self}")

    @classmethod
    def centered_square(cls, side_m: float) -> "Region":
        h = side_m / 2.0
        return cls(-h, h, -h, h)

    def cell_centers(self, nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
        if nx < 1 or ny < 1:
            raise ValueError("resolution must be at least 1x1")
        xs = self.x_min + (np.arange(nx) + 0.5) * (self.x_max - self.x_min) / nx
        ys = self.y_min + (np.arange(ny) + 0.5) * (self.y_max - self.y_min) / ny
        return xs, ys

    def grid_points(self, nx: int, ny: int) -> np.ndarray:
        """(nx*ny, 2) cell centers, x-major (entry i*ny + j is node (i, j))."""
        xs, ys = self.cell_centers(nx, ny)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=1)


def field_grid(dictionary: PlaneWaveDictionary, coeffs, region: Region,
               resolution: tuple[int, int]) -> np.ndarray:
    """Field on the cell centers of a uniform nx-by-ny grid; entry (i, j) is at (x_i, y_j)."""
    nx, ny = resolution
    pts = region.grid_points(nx, ny)
    return field_at(dictionary, coeffs, pts).reshape(nx, ny)
