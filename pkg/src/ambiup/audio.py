"""Waveforms, ambisonic signals and point-source encoding."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .sphmath import (
    MAX_ORDER,
    Direction,
    convert_normalization,
    num_channels,
    sh_matrix,
    unit_vectors,
    vectors_to_angles,
    _check_normalization,
)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(x)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", _frozen(x))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def segment(self, start: int, stop: int) -> "Waveform":
        return Waveform(self.samples[start:stop], self.sample_rate)


@dataclass(frozen=True, eq=False)
class AmbisonicSignal:
    """Spherical-harmonic coefficient signals, shape ``(channels, samples)``, ACN order.

    ``z_present=False`` marks horizontal first-order recordings whose Z channel
    (ACN 2) is unknown; it is stored as zeros and ignored by the metrics.
    """

    channels: np.ndarray
    sample_rate: int
    order: int
    normalization: str = "SN3D"
    z_present: bool = True

    def __post_init__(self):
        _check_normalization(self.normalization)
        x = np.array(self.channels, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("ambisonic channels must be a 2-D (channels, samples) array")
        if not 0 <= self.order <= MAX_ORDER:
            raise ValueError(f"unsupported ambisonic order {self.order}")
        if x.shape[0] != num_channels(self.order):
            raise ValueError(f"order {self.order} needs {num_channels(self.order)} channels, got {x.shape[0]}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(x)):
            raise ValueError("ambisonic signal contains non-finite samples")
        if not self.z_present and self.order != 1:
            raise ValueError("z_present=False is only meaningful for first-order signals")
        object.__setattr__(self, "channels", _frozen(x))

    def __len__(self) -> int:
        return self.channels.shape[1]

    @property
    def num_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def channel(self, index: int) -> Waveform:
        return Waveform(self.channels[index], self.sample_rate)

    def segment(self, start: int, stop: int) -> "AmbisonicSignal":
        return replace(self, channels=self.channels[:, start:stop])

    def to(self, normalization: str) -> "AmbisonicSignal":
        data = convert_normalization(self.channels.T, self.order, self.normalization, normalization).T
        return replace(self, channels=data, normalization=normalization)

    def truncate_order(self, order: int) -> "AmbisonicSignal":
        if order > self.order:
            raise ValueError("cannot truncate to a higher order")
        return replace(self, channels=self.channels[: num_channels(order)], order=order,
                       z_present=self.z_present if order == 1 else True)

    def scaled(self, gain: float) -> "AmbisonicSignal":
        return replace(self, channels=self.channels * gain)


class Trajectory:
    """Direction keyframes at a fixed frame rate, linearly interpolated in between.

    Interpolation is done on unit vectors followed by renormalization, so it is
    free of azimuth wrap-around artifacts. Times past the last keyframe hold it.
    """

    def __init__(self, azimuth, elevation, frame_rate: float):
        az = np.atleast_1d(np.asarray(azimuth, dtype=float))
        el = np.atleast_1d(np.asarray(elevation, dtype=float))
        if az.shape != el.shape or az.ndim != 1 or len(az) == 0:
            raise ValueError("trajectory needs matching non-empty azimuth/elevation sequences")
        if frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        self.frame_rate = float(frame_rate)
        self.keyframes = _frozen(unit_vectors(az, el))

    @classmethod
    def static(cls, direction: Direction) -> "Trajectory":
        return cls([direction.azimuth], [direction.elevation], 1.0)

    @classmethod
    def from_directions(cls, directions: Sequence[Direction], frame_rate: float) -> "Trajectory":
        return cls([d.azimuth for d in directions], [d.elevation for d in directions], frame_rate)

    def __len__(self) -> int:
        return len(self.keyframes)

    @property
    def is_static(self) -> bool:
        return len(self.keyframes) == 1

    def directions(self) -> list[Direction]:
        az, el = vectors_to_angles(self.keyframes)
        return [Direction(a, e) for a, e in zip(az, el)]

    def vectors_at(self, times) -> np.ndarray:
        """Interpolated unit vectors at ``times`` (seconds), shape ``(len(times), 3)``."""
        pos = np.asarray(times, dtype=float) * self.frame_rate
        if self.is_static:
            return np.broadcast_to(self.keyframes[0], pos.shape + (3,)).copy()
        pos = np.clip(pos, 0.0, len(self.keyframes) - 1)
        lo = np.minimum(np.floor(pos).astype(int), len(self.keyframes) - 2)
        frac = (pos - lo)[..., None]
        v = (1.0 - frac) * self.keyframes[lo] + frac * self.keyframes[lo + 1]
        norm = np.linalg.norm(v, axis=-1, keepdims=True)
        # antipodal keyframes interpolate through zero; hold the earlier one there
        degenerate = norm[..., 0] < 1e-9
        if np.any(degenerate):
            v[degenerate] = self.keyframes[lo[degenerate]]
            norm[degenerate] = 1.0
        return v / norm

    def angles_at(self, times) -> tuple[np.ndarray, np.ndarray]:
        return vectors_to_angles(self.vectors_at(times))

    def at_samples(self, num_samples: int, sample_rate: int) -> tuple[np.ndarray, np.ndarray]:
        return self.angles_at(np.arange(num_samples) / sample_rate)

    def rotated_z(self, psi: float) -> "Trajectory":
        az, el = vectors_to_angles(self.keyframes)
        return Trajectory(az + psi, el, self.frame_rate)


def encode_sources(sources: Iterable[tuple[Waveform, Trajectory | Direction]], order: int,
                   normalization: str = "SN3D") -> AmbisonicSignal:
    """Encode point sources into ambisonics: ``phi(t) = sum_i y(theta_i(t)) s_i(t)``."""
    sources = list(sources)
    if not sources:
        raise ValueError("at least one source is required")
    rate = sources[0][0].sample_rate
    length = len(sources[0][0])
    out = np.zeros((num_channels(order), length))
    for wave, traj in sources:
        if wave.sample_rate != rate or len(wave) != length:
            raise ValueError("all sources must share sample rate and length")
        if isinstance(traj, Direction):
            traj = Trajectory.static(traj)
        if traj.is_static:
            az, el = vectors_to_angles(traj.keyframes[0])
            gains = sh_matrix(order, az, el, normalization)[:, None]
        else:
            az, el = traj.at_samples(length, rate)
            gains = sh_matrix(order, az, el, normalization).T
        out += gains * wave.samples
    return AmbisonicSignal(out, rate, order, normalization)


def rotation_matrix_z(order: int, psi: float) -> np.ndarray:
    """ACN-domain matrix rotating a sound field by ``psi`` about the z axis.

    Each (m, -m) channel pair of a degree rotates as a 2-D vector by ``m * psi``;
    zonal (m = 0) channels are fixed. The matrix is the same for N3D and SN3D.
    """
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"rotation only supported up to order {MAX_ORDER}")
    R = np.eye(num_channels(order))
    for n in range(1, order + 1):
        for m in range(1, n + 1):
            cos_i, sin_i = n * n + n + m, n * n + n - m
            c, s = np.cos(m * psi), np.sin(m * psi)
            R[cos_i, cos_i] = c
            R[cos_i, sin_i] = -s
            R[sin_i, sin_i] = c
            R[sin_i, cos_i] = s
    return R


def rotate_z(sig: AmbisonicSignal, psi: float) -> AmbisonicSignal:
    """Rotate the sound field counterclockwise about the vertical axis."""
    R = rotation_matrix_z(sig.order, psi)
    return replace(sig, channels=R @ sig.channels)


def evaluate_soundfield(sig: AmbisonicSignal, direction: Direction) -> Waveform:
    """``f(theta, t) = y(theta)^T phi(t)`` in the signal's own normalization."""
    y = sh_matrix(sig.order, direction.azimuth, direction.elevation, sig.normalization)
    return Waveform(y @ sig.channels, sig.sample_rate)


def mixdown_mono(sig: AmbisonicSignal) -> Waveform:
    """The omnidirectional (ACN 0) channel; with SN3D this is the surrogate mono."""
    return Waveform(sig.channels[0], sig.sample_rate)
