"""Synthetic scenes and noisy, phase-perturbed microphone measurements.

Each sensor q observes

    p_q = sum_l exp(-1j k n_l . r_q) * exp(1j * delta[q, l]) * alpha_l + eps_q

where the sum runs over the true (off-grid) waves, ``delta`` are Gaussian
phase errors and ``eps`` is circular complex Gaussian noise whose variance
is set from a target SNR.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .model import (
    DEFAULT_SPEED_OF_SOUND,
    DimensionError,
    PlaneWaveDictionary,
    SensorArray,
    wavenumber,
)


@dataclass(frozen=True)
class ScenarioConfig:
    num_true_waves: int = 3
    frequency_hz: float = 1000.0
    array_radius_m: float = 0.25
    num_sensors: int = 9
    sigma_delta_rad: float = 0.5
    snr_db: float = 15.0
    rng_seed: int = 0
    estimation_grid_size: int = 50
    speed_of_sound_mps: float = DEFAULT_SPEED_OF_SOUND

    def __post_init__(self):
        if self.num_true_waves < 1:
            raise ValueError("num_true_waves must be >= 1")
        if self.num_sensors < 1:
            raise ValueError("num_sensors must be >= 1")
        if self.sigma_delta_rad < 0:
            raise ValueError("sigma_delta_rad must be >= 0")
        if self.estimation_grid_size < 1:
            raise ValueError("estimation_grid_size must be >= 1")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")
        wavenumber(self.frequency_hz, self.speed_of_sound_mps)

    def to_dict(self) -> dict:
        return asdict(self)


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GroundTruth:
    """True waves plus the per-sensor phase errors applied to them.

    ``perturbations`` has shape (Q, num_true_waves).
    """

    directions_rad: np.ndarray
    amplitudes: np.ndarray
    perturbations: np.ndarray
    sigma_delta_rad: float = 0.0

    def __post_init__(self):
        d = _frozen(np.ravel(self.directions_rad), float)
        a = _frozen(np.ravel(self.amplitudes), complex)
        delta = _frozen(self.perturbations, float)
        if delta.ndim == 1:
            delta = _frozen(delta.reshape(-1, d.size) if d.size else delta, float)
        if d.size != a.size or delta.ndim != 2 or delta.shape[1] != d.size:
            raise DimensionError(
                f"inconsistent truth: {d.size} directions, {a.size} amplitudes, "
                f"perturbations {delta.shape}"
            )
        object.__setattr__(self, "directions_rad", d)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "perturbations", delta)

    @property
    def num_sensors(self) -> int:
        return self.perturbations.shape[0]

    def unit_vectors(self) -> np.ndarray:
        return np.stack([np.cos(self.directions_rad), np.sin(self.directions_rad)], axis=1)

    def field_at(self, points, k: float) -> np.ndarray:
        """Unperturbed true field at N points (N, 2)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(pts.shape[0], dtype=complex)
        chunk = 2**16
        n = self.unit_vectors()
        for s in range(0, pts.shape[0], chunk):
            ph = k * pts[s:s + chunk] @ n.T
            out[s:s + chunk] = np.exp(-1j * ph) @ self.amplitudes
        return out


@dataclass(frozen=True)
class MeasurementSet:
    """Noisy pressures at the sensors together with how they were generated."""

    pressures: np.ndarray
    array: SensorArray
    frequency_hz: float
    speed_of_sound_mps: float = DEFAULT_SPEED_OF_SOUND
    sigma_delta_rad: float = 0.0
    sigma_eps: float = 0.0
    seed: Optional[int] = None
    noise: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        p = _frozen(np.ravel(self.pressures), complex)
        if p.size != len(self.array):
            raise DimensionError(f"{p.size} pressures for {len(self.array)} sensors")
        object.__setattr__(self, "pressures", p)
        if self.noise is not None:
            object.__setattr__(self, "noise", _frozen(np.ravel(self.noise), complex))

    def __len__(self):
        return self.pressures.size

    def subset(self, idx) -> "MeasurementSet":
        idx = np.asarray(idx, dtype=int)
        return MeasurementSet(
            self.pressures[idx], self.array.subset(idx), self.frequency_hz,
            self.speed_of_sound_mps, self.sigma_delta_rad, self.sigma_eps, self.seed,
            None if self.noise is None else self.noise[idx],
        )


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def trial_seed(master_seed: int, *indices: int) -> np.random.SeedSequence:
    """Independent stream for a trial: the indices are mixed into the master seed."""
    return np.random.SeedSequence([int(master_seed), *map(int, indices)])


def draw_scenario(config: ScenarioConfig, rng: Optional[np.random.Generator] = None):
    """Draw true waves, the sensor array and the estimation dictionary.

    Returns ``(truth, array, dictionary)``. Draw order is fixed: incident
    angles, amplitude moduli, amplitude phases, then phase errors (Q x waves).
    """
    if rng is None:
        rng = make_rng(config.rng_seed)
    n = config.num_true_waves
    directions = rng.uniform(-np.pi, np.pi, n)
    moduli = np.abs(rng.standard_normal(n))
    phases = rng.uniform(-np.pi, np.pi, n)
    delta = config.sigma_delta_rad * rng.standard_normal((config.num_sensors, n))
    truth = GroundTruth(directions, moduli * np.exp(1j * phases), delta, config.sigma_delta_rad)
    array = SensorArray.circular(config.num_sensors, config.array_radius_m)
    dictionary = PlaneWaveDictionary.uniform(
        config.frequency_hz, config.estimation_grid_size, config.speed_of_sound_mps
    )
    return truth, array, dictionary


def noise_free_measurements(truth: GroundTruth, array: SensorArray, frequency_hz: float,
                            speed_mps: float = DEFAULT_SPEED_OF_SOUND) -> np.ndarray:
    """Phase-perturbed pressures at the sensors, without additive noise."""
    if truth.num_sensors != len(array):
        raise DimensionError(
            f"perturbations for {truth.num_sensors} sensors, array has {len(array)}"
        )
    k = wavenumber(frequency_hz, speed_mps)
    g = np.exp(-1j * k * array.positions_m @ truth.unit_vectors().T)
    return (g * np.exp(1j * truth.perturbations)) @ truth.amplitudes


def calibrate_noise_sigma(noise_free, snr_db: float) -> float:
    """Noise std such that mean |p_q|^2 / sigma^2 equals the target SNR."""
    p = np.asarray(noise_free, dtype=complex)
    power = float(np.mean(np.abs(p) ** 2))
    if power == 0.0:
        raise ValueError("cannot calibrate noise against an all-zero signal")
    if np.isinf(snr_db) and snr_db > 0:
        return 0.0
    return float(np.sqrt(power / 10.0 ** (snr_db / 10.0)))


def complex_gaussian(rng: np.random.Generator, sigma: float, size) -> np.ndarray:
    """Circular CN(0, sigma^2): real and imaginary parts each N(0, sigma^2 / 2)."""
    z = rng.standard_normal((2,) + tuple(np.atleast_1d(size)))
    return sigma / np.sqrt(2.0) * (z[0] + 1j * z[1])


def measure(truth: GroundTruth, array: SensorArray, frequency_hz: float, snr_db: float,
            rng: np.random.Generator, speed_mps: float = DEFAULT_SPEED_OF_SOUND,
            seed: Optional[int] = None) -> MeasurementSet:
    """Add calibrated noise to the perturbed pressures."""
    clean = noise_free_measurements(truth, array, frequency_hz, speed_mps)
    sigma = calibrate_noise_sigma(clean, snr_db)
    eps = complex_gaussian(rng, sigma, len(array))
    return MeasurementSet(clean + eps, array, frequency_hz, speed_mps,
                          truth.sigma_delta_rad, sigma, seed, eps)


def simulate(config: ScenarioConfig, rng: Optional[np.random.Generator] = None):
    """One full draw: ``(truth, measurements, dictionary)``."""
    if rng is None:
        rng = make_rng(config.rng_seed)
    truth, array, dictionary = draw_scenario(config, rng)
    meas = measure(truth, array, config.frequency_hz, config.snr_db, rng,
                   config.speed_of_sound_mps, seed=config.rng_seed)
    return truth, meas, dictionary
