"""Energy-map exports: lattice CSV and equirectangular PGM images."""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from .audio import AmbisonicSignal
from .metrics import EnergyMap, directional_energy, window_bounds


def write_energy_csv(emap: EnergyMap, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["azimuth_deg", "elevation_deg", "weight"])
        for az, el, weight in zip(np.degrees(emap.sampling.azimuth), np.degrees(emap.sampling.elevation),
                                  emap.weights):
            w.writerow([f"{az:.6f}", f"{el:.6f}", repr(float(weight))])


def image_grid(rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel directions: row ``r`` at elevation ``90 - 180 r / (rows - 1)`` degrees, column ``c`` at
    azimuth ``360 c / cols`` degrees (radians returned, both ``(rows, cols)``)."""
    if rows < 2 or cols < 1:
        raise ValueError("image needs at least 2 rows and 1 column")
    el = np.radians(90.0 - 180.0 * np.arange(rows) / (rows - 1))
    az = np.radians(360.0 * np.arange(cols) / cols)
    return np.meshgrid(az, el)


def pixel_of(azimuth: float, elevation: float, rows: int, cols: int) -> tuple[int, int]:
    """Nearest pixel to a direction given in radians."""
    r = int(round((90.0 - np.degrees(elevation)) * (rows - 1) / 180.0))
    c = int(round(np.degrees(azimuth) % 360.0 * cols / 360.0)) % cols
    return r, c


def energy_image(sig: AmbisonicSignal, t: float, T: float = 0.1, rows: int = 37, cols: int = 72) -> np.ndarray:
    """Directional energy over ``[t - T/2, t + T/2]`` on the pixel grid, scaled to peak 1."""
    start, stop = window_bounds(sig, t, T)
    az, el = image_grid(rows, cols)
    img = directional_energy(sig, start, stop, az.ravel(), el.ravel()).reshape(rows, cols)
    peak = img.max()
    return img / peak if peak > 0 else img


def write_pgm(image: np.ndarray, path) -> None:
    """Binary 8-bit greyscale (P5); values in [0, 1] map to 0..255."""
    img = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    rows, cols = img.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + img.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=m.end())
    if pixels.size < rows * cols:
        raise ValueError(f"{path}: truncated PGM")
    return pixels[: rows * cols].reshape(rows, cols)
