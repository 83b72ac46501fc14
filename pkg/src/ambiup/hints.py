"""Scene-hint features: per-frame source activity splatted on an equirectangular grid.

These stand in for visual features. A frame is a ``rows x cols`` grid whose
rows run top-down in elevation and columns run in increasing azimuth from
the front; frame ``f`` summarizes ``[f / rate, (f + 1) / rate)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .sphmath import TWO_PI, vectors_to_angles

HINT_RATE = 10.0
GRID_ROWS, GRID_COLS = 8, 16
SPLAT_SIGMA = np.deg2rad(15.0)


@dataclass(frozen=True, eq=False)
class HintFeatures:
    frames: np.ndarray  # (num_frames, rows, cols)
    frame_rate: float = HINT_RATE

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 3:
            raise ValueError("hint frames must have shape (frames, rows, cols)")
        if np.any(frames < 0) or not np.all(np.isfinite(frames)):
            raise ValueError("hint values must be finite and non-negative")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]

    @property
    def grid_size(self) -> int:
        return self.frames.shape[1] * self.frames.shape[2]

    @property
    def duration(self) -> float:
        return len(self) / self.frame_rate

    @property
    def timestamps(self) -> np.ndarray:
        """Frame center times in seconds."""
        return (np.arange(len(self)) + 0.5) / self.frame_rate

    def frame_index(self, times) -> np.ndarray:
        """Nearest-neighbor frame for each time (seconds)."""
        idx = np.floor(np.asarray(times, dtype=float) * self.frame_rate).astype(int)
        return np.clip(idx, 0, len(self) - 1)

    def at_times(self, times) -> np.ndarray:
        return self.frames[self.frame_index(times)]

    def slice_time(self, start: float, stop: float) -> "HintFeatures":
        """Frames overlapping ``[start, stop)`` seconds; the result starts at frame ``floor(start * rate)``."""
        lo = int(np.floor(start * self.frame_rate + 1e-9))
        hi = int(np.ceil(stop * self.frame_rate - 1e-9))
        return replace(self, frames=self.frames[max(lo, 0): max(hi, lo + 1)])

    def rolled(self, columns: int) -> "HintFeatures":
        """Rotate about the vertical axis by whole grid columns (positive = counterclockwise)."""
        return replace(self, frames=np.roll(self.frames, columns, axis=2))

    def matches_duration(self, duration: float) -> bool:
        return len(self) == num_hint_frames(duration, self.frame_rate)

    def to_json(self) -> str:
        return json.dumps(np.round(self.frames, 9).tolist())

    @classmethod
    def from_json(cls, text: str, frame_rate: float = HINT_RATE) -> "HintFeatures":
        return cls(np.asarray(json.loads(text), dtype=float), frame_rate)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path, frame_rate: float = HINT_RATE) -> "HintFeatures":
        try:
            return cls.from_json(Path(path).read_text(), frame_rate)
        except (json.JSONDecodeError, ValueError) as exc:
            raise ValueError(f"{path}: malformed hint file ({exc})") from exc


def num_hint_frames(duration: float, frame_rate: float = HINT_RATE) -> int:
    return max(1, int(np.ceil(duration * frame_rate - 1e-9)))


def cell_edges(rows: int = GRID_ROWS, cols: int = GRID_COLS):
    el_top = np.pi / 2 - np.arange(rows) * np.pi / rows
    el_bottom = el_top - np.pi / rows
    az_lo = np.arange(cols) * TWO_PI / cols
    return el_bottom, el_top, az_lo, az_lo + TWO_PI / cols


def cell_of(azimuth: float, elevation: float, rows: int = GRID_ROWS, cols: int = GRID_COLS) -> tuple[int, int]:
    row = min(int((np.pi / 2 - elevation) / (np.pi / rows)), rows - 1)
    col = int(np.mod(azimuth, TWO_PI) / (TWO_PI / cols)) % cols
    return row, col


def distance_to_cells(vector: np.ndarray, rows: int = GRID_ROWS, cols: int = GRID_COLS) -> np.ndarray:
    """Angular distance from a direction to the nearest point of every grid cell.

    The nearest point of a latitude/longitude cell lies on the meridian at the
    circularly clamped azimuth, at the clamped elevation of the great-circle
    foot point on that meridian. The containing cell is at distance zero.
    """
    az0, el0 = vectors_to_angles(np.asarray(vector, dtype=float))
    el_bottom, el_top, az_lo, az_hi = cell_edges(rows, cols)
    width = TWO_PI / cols
    # signed azimuth offset of the direction from each column's interval
    rel = np.mod(az0 - az_lo, TWO_PI)
    inside = rel <= width
    to_hi = rel - width
    to_lo = TWO_PI - rel
    az_near = np.where(inside, az0, np.where(to_hi <= to_lo, az_hi, az_lo))
    dlon = az0 - az_near
    foot = np.arctan2(np.sin(el0), np.cos(el0) * np.cos(dlon))
    candidates = (
        np.clip(foot[None, :], el_bottom[:, None], el_top[:, None]),
        np.broadcast_to(el_bottom[:, None], (rows, cols)),
        np.broadcast_to(el_top[:, None], (rows, cols)),
    )
    # beyond 90 degrees of longitude the foot point is a minimum, so check the edges too
    cosang = np.max([np.sin(el0) * np.sin(e) + np.cos(el0) * np.cos(e) * np.cos(dlon)[None, :]
                     for e in candidates], axis=0)
    return np.arccos(np.clip(cosang, -1.0, 1.0))


def splat(vectors: np.ndarray, amplitudes: np.ndarray, rows: int = GRID_ROWS, cols: int = GRID_COLS,
          sigma: float = SPLAT_SIGMA) -> np.ndarray:
    """Sum of angular Gaussians, one per source, scaled by each source's amplitude."""
    grid = np.zeros((rows, cols))
    for v, amp in zip(np.atleast_2d(vectors), np.atleast_1d(amplitudes)):
        if amp <= 0:
            continue
        d = distance_to_cells(v, rows, cols)
        grid += amp * np.exp(-0.5 * (d / sigma) ** 2)
    return grid
