"""Hann-windowed STFT / overlap-add inverse and soft masking.

Frame ``f`` covers samples ``[f * hop, f * hop + window_len)``; frames are
zero-padded to ``fft_size`` and transformed with a one-sided real DFT. The
inverse windows each frame again and divides by the accumulated squared
window, which reconstructs every sample covered by a nonzero window value.

The array-level functions accept arbitrary leading batch dimensions and are
shared with the differentiable nodes in :mod:`ambiup.autodiff`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .audio import Waveform

_ENVELOPE_FLOOR = 1e-8


@dataclass(frozen=True)
class StftConfig:
    window_len: int
    hop: int
    fft_size: int

    def __post_init__(self):
        if not 0 < self.hop <= self.window_len <= self.fft_size:
            raise ValueError("need 0 < hop <= window_len <= fft_size")

    @classmethod
    def for_rate(cls, sample_rate: int, window_seconds: float = 0.025, overlap: int = 4) -> "StftConfig":
        """25 ms Hann windows hopped by a quarter window, power-of-two FFT."""
        window_len = int(round(window_seconds * sample_rate))
        fft_size = 1 << int(np.ceil(np.log2(window_len)))
        return cls(window_len, window_len // overlap, fft_size)

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def window(self) -> np.ndarray:
        return hann(self.window_len)

    def num_frames(self, length: int) -> int:
        if length < self.window_len:
            raise ValueError(f"signal of {length} samples is shorter than the {self.window_len}-sample window")
        return 1 + (length - self.window_len) // self.hop

    def bin_frequencies(self, sample_rate: int) -> np.ndarray:
        return np.arange(self.bins) * sample_rate / self.fft_size

    def interior(self, length: int) -> slice:
        """Samples covered by the full overlap of ``window_len / hop`` frames."""
        last = (self.num_frames(length) - 1) * self.hop + self.window_len
        return slice(self.window_len - self.hop, last - (self.window_len - self.hop))


@lru_cache(maxsize=32)
def hann(n: int) -> np.ndarray:
    """Periodic Hann window (COLA at hops of n/2 and n/4)."""
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=32)
def _envelope(cfg: StftConfig, length: int) -> tuple[np.ndarray, np.ndarray]:
    """Accumulated squared window and its guarded reciprocal."""
    env = np.zeros(length)
    w2 = hann(cfg.window_len) ** 2
    for f in range(cfg.num_frames(length)):
        env[f * cfg.hop: f * cfg.hop + cfg.window_len] += w2
    inv = np.zeros(length)
    ok = env > _ENVELOPE_FLOOR
    inv[ok] = 1.0 / env[ok]
    env.setflags(write=False)
    inv.setflags(write=False)
    return env, inv


def squared_window_envelope(cfg: StftConfig, length: int) -> np.ndarray:
    return _envelope(cfg, length)[0]


def _frame_index(cfg: StftConfig, length: int) -> np.ndarray:
    frames = cfg.num_frames(length)
    return np.arange(frames)[:, None] * cfg.hop + np.arange(cfg.window_len)[None, :]


def _overlap_add(frames: np.ndarray, cfg: StftConfig, length: int) -> np.ndarray:
    """Sum ``(..., F, window_len)`` frames into ``(..., length)`` signals."""
    out = np.zeros(frames.shape[:-2] + (length,))
    for f in range(frames.shape[-2]):
        out[..., f * cfg.hop: f * cfg.hop + cfg.window_len] += frames[..., f, :]
    return out


def stft_array(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """``(..., T)`` real -> ``(..., F, bins)`` complex."""
    x = np.asarray(x, dtype=float)
    frames = x[..., _frame_index(cfg, x.shape[-1])] * hann(cfg.window_len)
    return np.fft.rfft(frames, n=cfg.fft_size, axis=-1)


def istft_array(S: np.ndarray, cfg: StftConfig, length: int) -> np.ndarray:
    """``(..., F, bins)`` complex -> ``(..., length)`` real by weighted overlap-add."""
    if S.shape[-1] != cfg.bins:
        raise ValueError(f"expected {cfg.bins} bins, got {S.shape[-1]}")
    if S.shape[-2] != cfg.num_frames(length):
        raise ValueError("frame count does not match the requested length")
    frames = np.fft.irfft(S, n=cfg.fft_size, axis=-1)[..., : cfg.window_len] * hann(cfg.window_len)
    return _overlap_add(frames, cfg, length) * _envelope(cfg, length)[1]


def stft_adjoint(G: np.ndarray, cfg: StftConfig, length: int) -> np.ndarray:
    """Transpose of :func:`stft_array` seen as a real map ``x -> (Re S, Im S)``.

    ``G`` packs the cotangent as ``Re + 1j * Im``; returns the ``(..., length)`` cotangent.
    """
    Z = np.array(G, dtype=complex)
    Z[..., 1:-1] *= 0.5
    if cfg.fft_size % 2:
        Z[..., -1] *= 0.5
    frames = cfg.fft_size * np.fft.irfft(Z, n=cfg.fft_size, axis=-1)[..., : cfg.window_len]
    return _overlap_add(frames * hann(cfg.window_len), cfg, length)


def istft_adjoint(g: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Transpose of :func:`istft_array`; ``(..., T)`` -> ``(..., F, bins)`` packed complex."""
    length = g.shape[-1]
    scaled = np.asarray(g, dtype=float) * _envelope(cfg, length)[1]
    frames = scaled[..., _frame_index(cfg, length)] * hann(cfg.window_len)
    weight = np.full(cfg.bins, 2.0)
    weight[0] = 1.0
    if cfg.fft_size % 2 == 0:
        weight[-1] = 1.0
    out = np.fft.rfft(frames, n=cfg.fft_size, axis=-1) * (weight / cfg.fft_size)
    # irfft discards the imaginary parts of the DC and Nyquist bins
    out[..., 0] = out[..., 0].real
    if cfg.fft_size % 2 == 0:
        out[..., -1] = out[..., -1].real
    return out


def spectral_energy(S: np.ndarray, cfg: StftConfig) -> float:
    """``sum_frames sum_n (windowed frame)_n**2`` computed in the frequency domain."""
    weight = np.full(cfg.bins, 2.0)
    weight[0] = 1.0
    if cfg.fft_size % 2 == 0:
        weight[-1] = 1.0
    return float(np.sum(weight * np.abs(S) ** 2) / cfg.fft_size)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """One-sided complex STFT, ``data`` has shape ``(frames, bins)``."""

    data: np.ndarray
    config: StftConfig
    sample_rate: int
    length: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[1] != self.config.bins:
            raise ValueError(f"spectrogram must be (frames, {self.config.bins})")
        if data.shape[0] != self.config.num_frames(self.length):
            raise ValueError("frame count inconsistent with signal length")
        if not np.all(np.isfinite(data)):
            raise ValueError("spectrogram contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def bins(self) -> int:
        return self.data.shape[1]

    def frame_times(self) -> np.ndarray:
        """Center time (seconds) of each frame."""
        return (np.arange(self.frames) * self.config.hop + self.config.window_len / 2) / self.sample_rate


def stft(x: Waveform, cfg: StftConfig | None = None) -> Spectrogram:
    cfg = cfg or StftConfig.for_rate(x.sample_rate)
    return Spectrogram(stft_array(x.samples, cfg), cfg, x.sample_rate, len(x))


def istft(S: Spectrogram) -> Waveform:
    return Waveform(istft_array(S.data, S.config, S.length), S.sample_rate)


def apply_masks(S: Spectrogram, masks: np.ndarray) -> list[Spectrogram]:
    """Soft attention: ``Phi_i = a_i * Phi`` for each of the ``k`` maps in ``masks``."""
    masks = np.asarray(masks, dtype=float)
    if masks.ndim == 2:
        masks = masks[None]
    if masks.shape[1:] != S.data.shape:
        raise ValueError(f"mask shape {masks.shape[1:]} does not match spectrogram {S.data.shape}")
    if np.any(masks < 0) or np.any(masks > 1):
        raise ValueError("attenuation maps must lie in [0, 1]")
    return [Spectrogram(m * S.data, S.config, S.sample_rate, S.length) for m in masks]
