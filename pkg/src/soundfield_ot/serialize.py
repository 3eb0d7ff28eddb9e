"""YAML files for scenarios, measurements and estimates.

Complex numbers are stored as ``[re, im]`` pairs. Floats go through
``repr`` (shortest round-trip form, at most 17 significant digits), so
reading a file back reproduces the arrays bit for bit.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .model import PlaneWaveDictionary, SensorArray
from .simulate import GroundTruth, MeasurementSet, ScenarioConfig

SCENARIO_FORMAT = "soundfield-ot/scenario"
MEASUREMENTS_FORMAT = "soundfield-ot/measurements"
ESTIMATE_FORMAT = "soundfield-ot/estimate"


class FileFormatError(ValueError):
    pass


def reals(a) -> list:
    return [float(x) for x in np.ravel(a)]


def complexes(a) -> list:
    return [[float(z.real), float(z.imag)] for z in np.ravel(np.asarray(a, dtype=complex))]


def points(a) -> list:
    return [[float(x), float(y)] for x, y in np.asarray(a, dtype=float)]


def to_complex(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return arr[:, 0] + 1j * arr[:, 1]


def dictionary_to_dict(d: PlaneWaveDictionary) -> dict:
    return {"frequency_hz": float(d.frequency_hz),
            "speed_of_sound_mps": float(d.speed_of_sound_mps),
            "directions_rad": reals(d.directions_rad)}


def dictionary_from_dict(d: dict) -> PlaneWaveDictionary:
    return PlaneWaveDictionary(float(d["frequency_hz"]), np.asarray(d["directions_rad"], float),
                               float(d["speed_of_sound_mps"]))


def truth_to_dict(t: GroundTruth) -> dict:
    return {"directions_rad": reals(t.directions_rad),
            "amplitudes": complexes(t.amplitudes),
            "perturbations": [reals(row) for row in t.perturbations],
            "sigma_delta_rad": float(t.sigma_delta_rad)}


def truth_from_dict(d: dict) -> GroundTruth:
    n = len(d["directions_rad"])
    delta = np.asarray(d["perturbations"], dtype=float).reshape(-1, n)
    return GroundTruth(np.asarray(d["directions_rad"], float), to_complex(d["amplitudes"]),
                       delta, float(d["sigma_delta_rad"]))


def measurements_to_dict(m: MeasurementSet) -> dict:
    out = {"frequency_hz": float(m.frequency_hz),
           "speed_of_sound_mps": float(m.speed_of_sound_mps),
           "sigma_delta_rad": float(m.sigma_delta_rad),
           "sigma_eps": float(m.sigma_eps),
           "seed": None if m.seed is None else int(m.seed),
           "positions_m": points(m.array.positions_m),
           "pressures": complexes(m.pressures)}
    if m.noise is not None:
        out["noise"] = complexes(m.noise)
    return out


def measurements_from_dict(d: dict) -> MeasurementSet:
    noise = d.get("noise")
    return MeasurementSet(
        to_complex(d["pressures"]), SensorArray(np.asarray(d["positions_m"], float)),
        float(d["frequency_hz"]), float(d["speed_of_sound_mps"]),
        float(d["sigma_delta_rad"]), float(d["sigma_eps"]), d.get("seed"),
        None if noise is None else to_complex(noise),
    )


def dump(obj: dict, path) -> None:
    text = yaml.safe_dump(obj, sort_keys=False, default_flow_style=None, width=100)
    Path(path).write_text(text)


def load(path, expected_format: str) -> dict:
    data = yaml.safe_load(Path(path).read_text())
    if not isinstance(data, dict) or data.get("format") != expected_format:
        raise FileFormatError(f"{path}: not a {expected_format} file")
    return data


def write_scenario(path, config: ScenarioConfig, truth: GroundTruth, array: SensorArray,
                   dictionary: PlaneWaveDictionary) -> None:
    dump({"format": SCENARIO_FORMAT, "version": 1,
          "config": config.to_dict(),
          "truth": truth_to_dict(truth),
          "positions_m": points(array.positions_m),
          "dictionary": dictionary_to_dict(dictionary)}, path)


def read_scenario(path):
    """Returns ``(config, truth, array, dictionary)``."""
    d = load(path, SCENARIO_FORMAT)
    return (ScenarioConfig(**d["config"]), truth_from_dict(d["truth"]),
            SensorArray(np.asarray(d["positions_m"], float)),
            dictionary_from_dict(d["dictionary"]))


def write_measurements(path, meas: MeasurementSet, dictionary: PlaneWaveDictionary) -> None:
    body = {"format": MEASUREMENTS_FORMAT, "version": 1}
    body.update(measurements_to_dict(meas))
    body["dictionary"] = dictionary_to_dict(dictionary)
    dump(body, path)


def read_measurements(path):
    """Returns ``(measurements, dictionary)``."""
    d = load(path, MEASUREMENTS_FORMAT)
    return measurements_from_dict(d), dictionary_from_dict(d["dictionary"])


def write_estimate(path, method: str, hyper: dict, coeffs, dictionary: PlaneWaveDictionary,
                   extra: dict | None = None) -> None:
    body = {"format": ESTIMATE_FORMAT, "version": 1, "method": method,
            "hyperparameters": {k: float(v) for k, v in hyper.items()},
            "dictionary": dictionary_to_dict(dictionary),
            "coefficients": complexes(coeffs)}
    if extra:
        body.update(extra)
    dump(body, path)


def read_estimate(path):
    d = load(path, ESTIMATE_FORMAT)
    return d["method"], d["hyperparameters"], to_complex(d["coefficients"]), \
        dictionary_from_dict(d["dictionary"])
