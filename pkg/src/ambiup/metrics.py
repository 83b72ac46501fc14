"""STFT distance, envelope distance and EMD between directional energy maps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .audio import AmbisonicSignal, Waveform
from .emd import transport
from .sphmath import SphereSampling, fibonacci_sphere, num_channels
from .stft import StftConfig, hann, stft_array

Z_CHANNEL = 2


def generated_channels(order_out: int, order_in: int | None = None) -> list[int]:
    """ACN channels a model has to synthesize (all of degree > order_in)."""
    if order_in is None:
        order_in = order_out - 1
    return list(range(num_channels(order_in), num_channels(order_out)))


def scored_channels(ref: AmbisonicSignal, channels=None) -> list[int]:
    channels = generated_channels(ref.order) if channels is None else list(channels)
    if not ref.z_present:
        channels = [c for c in channels if c != Z_CHANNEL]
    return channels


def _check_pair(pred: AmbisonicSignal, ref: AmbisonicSignal) -> None:
    if pred.sample_rate != ref.sample_rate:
        raise ValueError(f"sample rates differ: {pred.sample_rate} vs {ref.sample_rate}")
    if len(pred) != len(ref):
        raise ValueError(f"lengths differ: {len(pred)} vs {len(ref)}")
    if pred.order != ref.order:
        raise ValueError(f"orders differ: {pred.order} vs {ref.order}")
    if ref.order < 1:
        raise ValueError("metrics need at least first-order signals")
    if pred.normalization != ref.normalization:
        raise ValueError("normalizations differ")


def stft_mse(pred: AmbisonicSignal, ref: AmbisonicSignal, cfg: StftConfig | None = None,
             channels=None) -> float:
    """Total squared complex STFT error over the generated channels.

    First-order targets score (Y, Z, X), second-order targets the five
    degree-2 channels; Z is skipped when ``ref.z_present`` is false.
    """
    _check_pair(pred, ref)
    cfg = cfg or StftConfig.for_rate(ref.sample_rate)
    ch = scored_channels(ref, channels)
    diff = stft_array(pred.channels[ch] - ref.channels[ch], cfg)
    return float(np.sum(diff.real ** 2 + diff.imag ** 2))


def envelope(x: Waveform | np.ndarray, window: float = 0.025, sample_rate: int | None = None) -> np.ndarray:
    """Hann-weighted sliding RMS with hop ``window / 4``.

    ``window`` is in seconds. Signals shorter than one window yield a single
    frame over the available samples.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    if isinstance(x, Waveform):
        samples, sample_rate = x.samples, x.sample_rate
    else:
        samples = np.asarray(x, dtype=float)
        if sample_rate is None:
            raise ValueError("sample_rate is required for raw arrays")
    n = max(1, int(round(window * sample_rate)))
    if samples.shape[-1] < n:
        n = samples.shape[-1]
    hop = max(1, n // 4)
    w = hann(n) if n > 2 else np.ones(n)
    frames = 1 + (samples.shape[-1] - n) // hop
    idx = np.arange(frames)[:, None] * hop + np.arange(n)[None, :]
    power = (samples[..., idx] ** 2) @ w / w.sum()
    return np.sqrt(power)


def env_distance(pred: AmbisonicSignal, ref: AmbisonicSignal, window: float = 0.025, channels=None) -> float:
    """Sum over scored channels of the Euclidean distance between envelopes."""
    _check_pair(pred, ref)
    ch = scored_channels(ref, channels)
    ep = envelope(pred.channels[ch], window, pred.sample_rate)
    er = envelope(ref.channels[ch], window, ref.sample_rate)
    return float(np.sum(np.linalg.norm(ep - er, axis=-1)))


@dataclass(frozen=True, eq=False)
class EnergyMap:
    sampling: SphereSampling
    weights: np.ndarray
    center_time: float
    window: float
    zero_energy: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.sampling),):
            raise ValueError("weights must match the sampling size")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("energy map weights must be non-negative and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def peak(self) -> int:
        return int(np.argmax(self.weights))


def window_bounds(sig: AmbisonicSignal, t: float, T: float) -> tuple[int, int]:
    start = int(round((t - T / 2) * sig.sample_rate))
    stop = start + max(1, int(round(T * sig.sample_rate)))
    if start < 0 or stop > len(sig):
        raise ValueError(f"window [{t - T / 2:.4f}, {t + T / 2:.4f}] s lies outside the {sig.duration:.4f} s signal")
    return start, stop


def directional_energy(sig: AmbisonicSignal, start: int, stop: int, azimuth, elevation) -> np.ndarray:
    """Unnormalized ``sqrt(mean_tau (y(theta)^T phi(tau))**2)`` for arrays of directions."""
    from .sphmath import sh_matrix

    Y = sh_matrix(sig.order, azimuth, elevation, sig.normalization)
    field_ = Y @ sig.channels[:, start:stop]
    return np.sqrt(np.mean(field_ ** 2, axis=-1))


def energy_map(sig: AmbisonicSignal, t: float, T: float = 0.1, sampling: SphereSampling | None = None) -> EnergyMap:
    """Directional energy over ``[t - T/2, t + T/2]`` sampled on ``sampling`` and normalized to sum 1.

    A silent window gives the uniform map with ``zero_energy`` set.
    """
    sampling = sampling or default_sampling()
    start, stop = window_bounds(sig, t, T)
    energy = directional_energy(sig, start, stop, sampling.azimuth, sampling.elevation)
    total = energy.sum()
    if total <= 1e-300 or not np.isfinite(total):
        return EnergyMap(sampling, np.full(len(sampling), 1.0 / len(sampling)), t, T, zero_energy=True)
    return EnergyMap(sampling, energy / total, t, T)


@lru_cache(maxsize=8)
def default_sampling(n: int = 128) -> SphereSampling:
    return fibonacci_sphere(n)


def ground_cost(sampling: SphereSampling) -> np.ndarray:
    """``1 - u . v`` between lattice points (0 on the diagonal)."""
    C = 1.0 - sampling.unit_vectors @ sampling.unit_vectors.T
    np.fill_diagonal(C, 0.0)
    return np.maximum(C, 0.0)


def emd(a: EnergyMap, b: EnergyMap) -> float:
    """Exact Earth Mover's Distance with cosine ground distance."""
    if not a.sampling.same_as(b.sampling):
        raise ValueError("energy maps use different sphere samplings")
    cost, _ = transport(a.weights, b.weights, ground_cost(a.sampling))
    return max(cost, 0.0)


@dataclass
class EvalConfig:
    stft: StftConfig | None = None
    lattice: int = 128
    chunk: float = 0.1
    env_window: float = 0.025


@dataclass
class MetricReport:
    stft_mse: float
    env: float
    emd: float
    chunks: list[dict] = field(default_factory=list)
    lattice: int = 128

    def __post_init__(self):
        for name in ("stft_mse", "env", "emd"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")

    def to_dict(self) -> dict:
        return {"stft": self.stft_mse, "env": self.env, "emd": self.emd, "chunks": self.chunks,
                "lattice": self.lattice}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_chunks(cls, chunks: list[dict], lattice: int = 128) -> "MetricReport":
        if not chunks:
            raise ValueError("no chunks to average")
        return cls(float(np.mean([c["stft"] for c in chunks])), float(np.mean([c["env"] for c in chunks])),
                   float(np.mean([c["emd"] for c in chunks])), list(chunks), lattice)

    @classmethod
    def mean(cls, reports: list["MetricReport"]) -> "MetricReport":
        """Average of per-signal reports (each signal weighted equally)."""
        if not reports:
            raise ValueError("no reports to average")
        return cls(float(np.mean([r.stft_mse for r in reports])), float(np.mean([r.env for r in reports])),
                   float(np.mean([r.emd for r in reports])), [], reports[0].lattice)


def chunk_centers(duration: float) -> np.ndarray:
    """One evaluation chunk centered in every whole second."""
    return np.arange(int(np.floor(duration + 1e-9))) + 0.5


def evaluate_chunk(pred: AmbisonicSignal, ref: AmbisonicSignal, t: float, cfg: EvalConfig,
                   channels=None, sampling: SphereSampling | None = None) -> dict:
    start, stop = window_bounds(ref, t, cfg.chunk)
    p, r = pred.segment(start, stop), ref.segment(start, stop)
    sampling = sampling or default_sampling(cfg.lattice)
    mid = cfg.chunk / 2
    return {
        "time": float(t),
        "stft": stft_mse(p, r, cfg.stft, channels),
        "env": env_distance(p, r, cfg.env_window, channels),
        "emd": emd(energy_map(p, mid, cfg.chunk, sampling), energy_map(r, mid, cfg.chunk, sampling)),
    }


def evaluate_pair(pred: AmbisonicSignal, ref: AmbisonicSignal, cfg: EvalConfig | None = None,
                  channels=None) -> MetricReport:
    """Score one 0.1 s chunk per second of signal and average over chunks."""
    cfg = cfg or EvalConfig()
    _check_pair(pred, ref)
    if ref.duration < 1.0 - 1e-9:
        raise ValueError(f"evaluation needs at least 1 s of audio, got {ref.duration:.3f} s")
    sampling = default_sampling(cfg.lattice)
    chunks = [evaluate_chunk(pred, ref, t, cfg, channels, sampling) for t in chunk_centers(ref.duration)]
    for i, c in enumerate(chunks):
        c["index"] = i
    return MetricReport.from_chunks(chunks, cfg.lattice)
