"""Static spatial-prior baseline: the dataset's mean energy map as a fixed first-order upmix."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..audio import AmbisonicSignal, Waveform
from ..metrics import chunk_centers, default_sampling, energy_map
from ..scenes import DatasetManifest
from ..sphmath import SphereSampling, sh_matrix


@dataclass(frozen=True)
class PriorCoefficients:
    """First-order SN3D coefficients of the mean energy map."""

    w: float
    x: float
    y: float
    z: float

    def acn(self) -> np.ndarray:
        return np.array([self.w, self.y, self.z, self.x])

    def gains(self) -> np.ndarray:
        """ACN channel gains applied to the mono input."""
        if abs(self.w) < 1e-12:
            raise ValueError("prior has c_w = 0; cannot normalize")
        return self.acn() / self.w

    def field(self, azimuth, elevation) -> np.ndarray:
        return sh_matrix(1, azimuth, elevation, "SN3D") @ self.acn()

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "PriorCoefficients":
        try:
            d = json.loads(Path(path).read_text())
            return cls(float(d["w"]), float(d["x"]), float(d["y"]), float(d["z"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: malformed prior file ({exc})") from exc


def project(weights: np.ndarray, sampling: SphereSampling) -> PriorCoefficients:
    """Discrete SH projection of a map on the lattice.

    The normalized map acts as a distribution of point sources, so a map
    concentrated at one direction yields that direction's encoding gains.
    """
    weights = np.asarray(weights, dtype=float)
    c = sh_matrix(1, sampling.azimuth, sampling.elevation, "SN3D").T @ (weights / weights.sum())
    return PriorCoefficients(w=c[0], x=c[3], y=c[1], z=c[2])


def mean_energy_map(signals, sampling: SphereSampling | None = None, chunk: float = 0.1) -> np.ndarray:
    """Average of energy maps over the evaluation chunks of every signal."""
    sampling = sampling or default_sampling()
    maps = []
    for sig in signals:
        sig = sig.truncate_order(1) if sig.order > 1 else sig
        maps.extend(energy_map(sig, t, chunk, sampling).weights for t in chunk_centers(sig.duration))
    if not maps:
        raise ValueError("no chunks to average: dataset is empty or too short")
    return np.mean(maps, axis=0)


def prior_fit(dataset: DatasetManifest | list[AmbisonicSignal], sampling: SphereSampling | None = None
              ) -> PriorCoefficients:
    """Fit the prior on the training split of a manifest (or on a list of ground-truth signals)."""
    sampling = sampling or default_sampling()
    if isinstance(dataset, DatasetManifest):
        entries = dataset.split("train")
        if not entries:
            raise ValueError("dataset has no training scenes")
        signals = (dataset.load_scene(e)[2] for e in entries)
    else:
        if not dataset:
            raise ValueError("dataset is empty")
        signals = dataset
    return project(mean_energy_map(signals, sampling), sampling)


def prior_apply(mono: Waveform, coeffs: PriorCoefficients) -> AmbisonicSignal:
    """Static upmix ``(1, c_y/c_w, c_z/c_w, c_x/c_w) * mono`` in ACN order."""
    gains = coeffs.gains()
    return AmbisonicSignal(gains[:, None] * mono.samples[None, :], mono.sample_rate, 1, "SN3D")
