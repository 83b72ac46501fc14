"""Multichannel WAV input/output in the ambiX convention (ACN, SN3D).

A JSON sidecar ``<file>.wav.json`` travels with every ambisonic file:
``{"order": n, "normalization": "SN3D", "z_present": bool, "sample_rate": hz}``.
Three-channel files are horizontal first-order recordings stored as (W, Y, X).
"""

from __future__ import annotations

import json
import struct
import warnings
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .audio import AmbisonicSignal, Waveform

HORIZONTAL_CHANNELS = (0, 1, 3)  # W, Y, X
_ORDER_BY_CHANNELS = {4: 1, 9: 2}


class WavError(ValueError):
    """Malformed, truncated or unsupported WAV data."""


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _read_raw(path: Path) -> tuple[int, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            head = fh.read(12)
    except OSError as exc:
        raise WavError(f"{path}: cannot open ({exc.strerror})") from exc
    if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except (ValueError, struct.error, wavfile.WavFileWarning, EOFError) as exc:
        raise WavError(f"{path}: malformed or truncated WAV ({exc})") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavError(f"{path}: unsupported sample format {data.dtype}; expected PCM16 or float32")
    if samples.ndim == 1:
        samples = samples[:, None]
    return int(rate), samples.T


def read_wav(path) -> Waveform | AmbisonicSignal:
    """Read a mono (1), horizontal FOA (3), FOA (4) or SOA (9) channel file."""
    path = Path(path)
    rate, data = _read_raw(path)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            raise WavError(f"{side}: malformed sidecar ({exc})") from exc
    count = data.shape[0]
    if count == 1:
        return Waveform(data[0], rate)
    normalization = meta.get("normalization", "SN3D")
    if count == 3:
        full = np.zeros((4, data.shape[1]))
        full[list(HORIZONTAL_CHANNELS)] = data
        return AmbisonicSignal(full, rate, 1, normalization, z_present=False)
    if count in _ORDER_BY_CHANNELS:
        order = _ORDER_BY_CHANNELS[count]
        if "order" in meta and meta["order"] != order:
            raise WavError(f"{path}: sidecar order {meta['order']} disagrees with {count} channels")
        z_present = bool(meta.get("z_present", True))
        if not z_present and order != 1:
            raise WavError(f"{path}: z_present=false on a non-first-order file")
        sig = AmbisonicSignal(data, rate, order, normalization, z_present=z_present)
        if not z_present:
            sig = AmbisonicSignal(sig.channels * np.array([1, 1, 0, 1.0])[:, None], rate, 1,
                                  normalization, z_present=False)
        return sig
    raise WavError(f"{path}: {count} channels; expected 1, 3, 4 or 9")


def write_wav(path, sig: Waveform | AmbisonicSignal, pcm16: bool = False) -> None:
    """Write float32 (default) or PCM16 samples; ambisonic files also get a sidecar."""
    path = Path(path)
    if isinstance(sig, Waveform):
        data = sig.samples[:, None]
    else:
        data = sig.channels[list(HORIZONTAL_CHANNELS)] if not sig.z_present else sig.channels
        data = data.T
    if pcm16:
        out = np.clip(np.round(data * 32768.0), -32768, 32767).astype(np.int16)
    else:
        out = data.astype(np.float32)
    wavfile.write(path, sig.sample_rate, np.ascontiguousarray(out[:, 0] if out.shape[1] == 1 else out))
    if isinstance(sig, AmbisonicSignal):
        meta = {"order": sig.order, "normalization": sig.normalization,
                "z_present": sig.z_present, "sample_rate": sig.sample_rate}
        sidecar_path(path).write_text(json.dumps(meta, sort_keys=True) + "\n")
