"""Real spherical harmonics, sphere directions and sampling lattices.

Conventions used throughout the package:

* channel order is ACN (``n**2 + n + m``),
* azimuth is measured counterclockwise from the front (+x) axis,
  elevation from the horizontal plane (zenith angle = pi/2 - elevation),
* N3D harmonics are orthonormal under the uniform sphere measure
  (``mean(Y_a * Y_b) == delta_ab``), SN3D = N3D / sqrt(2n + 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * np.pi
MAX_ORDER = 2
NORMALIZATIONS = ("N3D", "SN3D")


def acn(n: int, m: int) -> int:
    """ACN channel index of degree ``n`` and order ``m``."""
    return n * n + n + m


def num_channels(order: int) -> int:
    return (order + 1) ** 2


def channel_degrees(order: int) -> np.ndarray:
    """Degree ``n`` of each ACN channel up to ``order``."""
    return np.concatenate([np.full(2 * n + 1, n) for n in range(order + 1)])


def _check_normalization(normalization: str) -> str:
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalization!r}, expected one of {NORMALIZATIONS}")
    return normalization


@dataclass(frozen=True)
class Direction:
    """A direction on the unit sphere, in radians."""

    azimuth: float
    elevation: float = 0.0

    def __post_init__(self):
        el = float(self.elevation)
        if not -np.pi / 2 - 1e-12 <= el <= np.pi / 2 + 1e-12:
            raise ValueError(f"elevation {el} outside [-pi/2, pi/2]")
        object.__setattr__(self, "elevation", float(np.clip(el, -np.pi / 2, np.pi / 2)))
        object.__setattr__(self, "azimuth", wrap_azimuth(float(self.azimuth)))

    @classmethod
    def from_degrees(cls, azimuth: float, elevation: float = 0.0) -> "Direction":
        return cls(np.deg2rad(azimuth), np.deg2rad(elevation))

    @classmethod
    def from_zenith(cls, azimuth: float, zenith: float) -> "Direction":
        return cls(azimuth, np.pi / 2 - zenith)

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "Direction":
        x, y, z = np.asarray(v, dtype=float) / np.linalg.norm(v)
        return cls(np.arctan2(y, x), np.arcsin(np.clip(z, -1.0, 1.0)))

    @property
    def zenith(self) -> float:
        return np.pi / 2 - self.elevation

    @property
    def unit_vector(self) -> np.ndarray:
        return unit_vectors(self.azimuth, self.elevation)

    def degrees(self) -> tuple[float, float]:
        return float(np.rad2deg(self.azimuth)), float(np.rad2deg(self.elevation))


def wrap_azimuth(azimuth):
    """Map azimuth(s) into ``[0, 2*pi)``."""
    wrapped = np.mod(azimuth, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def unit_vectors(azimuth, elevation) -> np.ndarray:
    """Cartesian unit vectors, shape ``(..., 3)``."""
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    ce = np.cos(elevation)
    return np.stack([ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)], axis=-1)


FRONT = Direction(0.0, 0.0)
LEFT = Direction(np.pi / 2, 0.0)
BACK = Direction(np.pi, 0.0)
ZENITH = Direction(0.0, np.pi / 2)


def vectors_to_angles(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`unit_vectors` for arrays of (not necessarily unit) vectors."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1)
    az = wrap_azimuth(np.arctan2(v[..., 1], v[..., 0]))
    el = np.arcsin(np.clip(v[..., 2] / norm, -1.0, 1.0))
    return az, el


def sh_matrix(order: int, azimuth, elevation, normalization: str = "SN3D") -> np.ndarray:
    """Real spherical harmonics for arrays of directions.

    Returns an array of shape ``(..., (order + 1)**2)`` in ACN order.
    Only orders up to 2 are supported.
    """
    _check_normalization(normalization)
    if order < 0:
        raise ValueError("order must be non-negative")
    if order > MAX_ORDER:
        raise ValueError(f"orders above {MAX_ORDER} are not supported")
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    az, el = np.broadcast_arrays(az, el)
    ce, se = np.cos(el), np.sin(el)
    out = np.empty(az.shape + (num_channels(order),))
    out[..., 0] = 1.0
    if order >= 1:
        out[..., 1] = ce * np.sin(az)
        out[..., 2] = se
        out[..., 3] = ce * np.cos(az)
    if order >= 2:
        r3 = np.sqrt(3.0) / 2.0
        out[..., 4] = r3 * ce * ce * np.sin(2 * az)
        out[..., 5] = r3 * 2 * se * ce * np.sin(az)
        out[..., 6] = 0.5 * (3 * se * se - 1)
        out[..., 7] = r3 * 2 * se * ce * np.cos(az)
        out[..., 8] = r3 * ce * ce * np.cos(2 * az)
    if normalization == "N3D":
        out *= np.sqrt(2 * channel_degrees(order) + 1)
    return out


def eval_sh(order: int, direction: Direction, normalization: str = "SN3D") -> "ShVector":
    values = sh_matrix(order, direction.azimuth, direction.elevation, normalization)
    return ShVector(order, values, normalization)


def convert_normalization(values: np.ndarray, order: int, source: str, target: str) -> np.ndarray:
    """Rescale ACN coefficients (last axis) between N3D and SN3D."""
    _check_normalization(source)
    _check_normalization(target)
    values = np.asarray(values, dtype=float)
    if source == target:
        return values.copy()
    scale = np.sqrt(2 * channel_degrees(order) + 1.0)
    return values * scale if target == "N3D" else values / scale


@dataclass(frozen=True)
class ShVector:
    order: int
    values: np.ndarray
    normalization: str = "SN3D"

    def __post_init__(self):
        _check_normalization(self.normalization)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (num_channels(self.order),):
            raise ValueError(f"expected {num_channels(self.order)} values for order {self.order}, got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def to(self, normalization: str) -> "ShVector":
        return ShVector(self.order, convert_normalization(self.values, self.order, self.normalization, normalization),
                        normalization)

    def __getitem__(self, item):
        return self.values[item]

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class SphereSampling:
    """An ordered set of distinct directions with their unit vectors."""

    azimuth: np.ndarray
    elevation: np.ndarray
    unit_vectors: np.ndarray = field(init=False)

    def __post_init__(self):
        az = np.atleast_1d(np.asarray(wrap_azimuth(np.asarray(self.azimuth, dtype=float)), dtype=float))
        el = np.atleast_1d(np.asarray(self.elevation, dtype=float))
        if az.shape != el.shape or az.ndim != 1:
            raise ValueError("azimuth and elevation must be 1-D arrays of equal length")
        vecs = unit_vectors(az, el)
        if len(vecs) > 1:
            gram = vecs @ vecs.T
            np.fill_diagonal(gram, -1.0)
            if np.any(gram > 1.0 - 1e-12):
                raise ValueError("duplicate points in sphere sampling")
        for arr in (az, el, vecs):
            arr.setflags(write=False)
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", el)
        object.__setattr__(self, "unit_vectors", vecs)

    def __len__(self) -> int:
        return len(self.azimuth)

    @property
    def points(self) -> list[Direction]:
        return [Direction(a, e) for a, e in zip(self.azimuth, self.elevation)]

    def same_as(self, other: "SphereSampling") -> bool:
        return len(self) == len(other) and np.array_equal(self.unit_vectors, other.unit_vectors)

    def sh(self, order: int, normalization: str = "SN3D") -> np.ndarray:
        return sh_matrix(order, self.azimuth, self.elevation, normalization)

    def nearest(self, direction: Direction) -> int:
        return int(np.argmax(self.unit_vectors @ direction.unit_vector))

    @cached_property
    def neighbors(self) -> list[frozenset[int]]:
        """Adjacency of the spherical Delaunay triangulation (convex hull edges)."""
        from scipy.spatial import ConvexHull

        n = len(self)
        adj: list[set[int]] = [set() for _ in range(n)]
        if n < 4:
            for i in range(n):
                adj[i] = set(range(n)) - {i}
        else:
            for a, b, c in ConvexHull(self.unit_vectors).simplices:
                adj[a].update((b, c))
                adj[b].update((a, c))
                adj[c].update((a, b))
        return [frozenset(s) for s in adj]

    def ring(self, index: int) -> frozenset[int]:
        """``index`` together with its first neighbor ring."""
        return self.neighbors[index] | {index}


def fibonacci_sphere(n: int = 128) -> SphereSampling:
    """Deterministic near-uniform lattice of ``n`` points (golden-angle spiral)."""
    if n < 1:
        raise ValueError("fibonacci_sphere needs at least one point")
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    golden_angle = np.pi * (3.0 - np.sqrt(5.0))
    return SphereSampling(golden_angle * i, np.arcsin(z))


def equirect_grid(rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell-center (azimuth, elevation) arrays of an equirectangular grid.

    Rows run top-down from the zenith, columns run in increasing azimuth
    starting at the front. Both outputs have shape ``(rows, cols)``.
    """
    el = np.pi / 2 - (np.arange(rows) + 0.5) * np.pi / rows
    az = (np.arange(cols) + 0.5) * TWO_PI / cols
    return np.meshgrid(az, el)


def angular_distance(a: Direction, b: Direction) -> float:
    return float(np.arccos(np.clip(a.unit_vector @ b.unit_vector, -1.0, 1.0)))


def cosine_distance(a: Direction, b: Direction) -> float:
    return float(1.0 - a.unit_vector @ b.unit_vector)


def rotate_direction_z(direction: Direction, psi: float) -> Direction:
    """Rotate counterclockwise about the vertical axis by ``psi`` radians."""
    return Direction(direction.azimuth + psi, direction.elevation)
