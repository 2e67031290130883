"""Centerline splines, rotation-minimizing frames and ring lofting."""
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import splev, splprep

from gemmesh.constants import TWO_PI

DENSE_SAMPLES = 4001


class Centerline:
    """Interpolating cubic spline through control points, parameterized by arc length.

    Straight extensions along the end tangents may be added before and after the spline,
    so valid arc lengths run from -before to length + after.
    """

    def __init__(self, points: np.ndarray, before: float = 0.0, after: float = 0.0):
        points = np.asarray(points, dtype=np.float64)
        self.tck, _ = splprep(points.T, s=0, k=min(3, len(points) - 1))
        u = np.linspace(0.0, 1.0, DENSE_SAMPLES)
        dense = np.array(splev(u, self.tck)).T
        arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(dense, axis=0), axis=1))])
        self._u, self._arc = u, arc
        self.length = float(arc[-1])
        self.before, self.after = float(before), float(after)

    @property
    def start(self) -> float:
        return -self.before

    @property
    def stop(self) -> float:
        return self.length + self.after

    def _parameter(self, s: np.ndarray) -> np.ndarray:
        return np.interp(np.clip(s, 0.0, self.length), self._arc, self._u)

    def _derivative(self, s: np.ndarray, order: int) -> np.ndarray:
        return np.array(splev(self._parameter(s), self.tck, der=order)).T

    def point(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        inside = self._derivative(s, 0)
        head = self._derivative(np.zeros(1), 0)[0] + np.outer(
            np.minimum(s, 0.0), self.tangent(0.0)[0]
        )
        tail = self._derivative(np.full(1, self.length), 0)[0] + np.outer(
            np.maximum(s - self.length, 0.0), self.tangent(self.length)[0]
        )
        return np.where((s < 0)[:, None], head, np.where((s > self.length)[:, None], tail, inside))

    def tangent(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        d1 = self._derivative(s, 1)
        return d1 / np.linalg.norm(d1, axis=1, keepdims=True)

    def curvature(self, s) -> np.ndarray:
        """Curvature of the spline part; the straight extensions have none."""
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        d1, d2 = self._derivative(s, 1), self._derivative(s, 2)
        kappa = np.linalg.norm(np.cross(d1, d2), axis=1) / np.linalg.norm(d1, axis=1) ** 3
        return np.where((s < 0) | (s > self.length), 0.0, kappa)


def rotation_minimizing_frames(
    points: np.ndarray, tangents: np.ndarray, reference: np.ndarray
) -> np.ndarray:
    """Double-reflection frames (u, w, t) along a sampled curve, u x w = t.

    Args:
        points (np.ndarray): (R, 3) curve samples.
        tangents (np.ndarray): (R, 3) unit tangents.
        reference (np.ndarray): Direction projected onto the first normal plane as u_0.

    Returns:
        np.ndarray: (R, 3, 3) frames with rows u, w, t.
    """
    u = reference - np.dot(reference, tangents[0]) * tangents[0]
    u = u / np.linalg.norm(u)
    frames = np.empty((len(points), 3, 3))
    frames[0] = [u, np.cross(tangents[0], u), tangents[0]]
    for i in range(len(points) - 1):
        v1 = points[i + 1] - points[i]
        c1 = np.dot(v1, v1)
        if c1 == 0:
            u_next = u
        else:
            u_l = u - (2.0 / c1) * np.dot(v1, u) * v1
            t_l = tangents[i] - (2.0 / c1) * np.dot(v1, tangents[i]) * v1
            v2 = tangents[i + 1] - t_l
            c2 = np.dot(v2, v2)
            u_next = u_l if c2 == 0 else u_l - (2.0 / c2) * np.dot(v2, u_l) * v2
        u_next = u_next - np.dot(u_next, tangents[i + 1]) * tangents[i + 1]
        u = u_next / np.linalg.norm(u_next)
        frames[i + 1] = [u, np.cross(tangents[i + 1], u), tangents[i + 1]]
    return frames


def align_frames(frames: np.ndarray, index: int, direction: np.ndarray) -> np.ndarray:
    """Rotate every frame about its tangent so that frame `index` has u along `direction`."""
    u, w = frames[index, 0], frames[index, 1]
    angle = np.arctan2(np.dot(direction, w), np.dot(direction, u))
    c, s = np.cos(angle), np.sin(angle)
    rotated = frames.copy()
    rotated[:, 0] = c * frames[:, 0] + s * frames[:, 1]
    rotated[:, 1] = -s * frames[:, 0] + c * frames[:, 1]
    return rotated


def ring_stations(
    start: float,
    stop: float,
    step: Callable[[float], float],
    forced: Sequence[float] = (),
) -> np.ndarray:
    """Arc lengths of lofting rings from start to stop with local spacing step(s).

    Both ends and every forced station are included exactly.
    """
    stations = [start]
    while True:
        s = stations[-1] + step(stations[-1])
        if s >= stop - 0.5 * step(stations[-1]):
            break
        stations.append(s)
    stations.append(stop)
    stations = np.asarray(stations)
    for f in forced:
        if not start < f < stop:
            continue
        near = np.abs(stations - f) < 0.5 * step(f)
        near[[0, -1]] = False
        stations = np.sort(np.append(stations[~near], f))
    return stations


def circle_offsets(frames: np.ndarray, radius: np.ndarray, segments: int) -> np.ndarray:
    """(R, segments, 3) circle offsets counterclockwise about each frame's tangent."""
    phi = TWO_PI * np.arange(segments) / segments
    u, w = frames[:, 0], frames[:, 1]
    return radius[:, None, None] * (
        np.cos(phi)[None, :, None] * u[:, None] + np.sin(phi)[None, :, None] * w[:, None]
    )


def ellipse_offsets(
    frames: np.ndarray, axes: np.ndarray, orientation: np.ndarray, segments: int
) -> np.ndarray:
    """Like circle_offsets with per-ring semi-axes (R, 2) rotated by `orientation` (R,)."""
    phi = TWO_PI * np.arange(segments) / segments
    a = axes[:, 0:1] * np.cos(phi)[None]
    b = axes[:, 1:2] * np.sin(phi)[None]
    c, s = np.cos(orientation)[:, None], np.sin(orientation)[:, None]
    x, y = c * a - s * b, s * a + c * b
    return x[..., None] * frames[:, None, 0] + y[..., None] * frames[:, None, 1]


def ring_faces(rings: Sequence[np.ndarray]) -> np.ndarray:
    """Triangulate bands between consecutive rings given as equal-length vertex-id arrays.

    Rings must run counterclockwise about the forward direction.
    """
    faces = []
    for a, c in zip(rings, rings[1:]):
        b, d = np.roll(a, -1), np.roll(c, -1)
        faces.append(np.column_stack([a, b, c]))
        faces.append(np.column_stack([b, d, c]))
    return np.concatenate(faces)


@dataclass(frozen=True, eq=False)
class RingTable:
    """Centerline samples behind every lofted ring, for label generation.

    Attributes:
        branch (np.ndarray): (R,) branch id per ring.
        s (np.ndarray): (R,) arc length along the branch (mm).
        center, tangent (np.ndarray): (R, 3) centerline point and unit tangent.
        radius (np.ndarray): (R,) nominal lumen radius (mm).
        vertex_ring (np.ndarray): (V,) ring index of every vertex.
    """

    branch: np.ndarray
    s: np.ndarray
    center: np.ndarray
    tangent: np.ndarray
    radius: np.ndarray
    vertex_ring: np.ndarray

    def to_dict(self) -> dict:
        return {name: getattr(self, name).tolist() for name in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> "RingTable":
        return cls(**{name: np.asarray(data[name]) for name in cls.__dataclass_fields__})
