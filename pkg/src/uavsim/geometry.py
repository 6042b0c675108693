"""Axis-aligned building geometry, line-of-sight and obstacle ranging.

Points are plain ``numpy`` arrays of shape ``(3,)`` (x, y, z in meters,
z is altitude). Buildings are axis-aligned boxes standing on the ground.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class CollisionError(ValueError):
    """Raised when a query point lies inside a building."""


def as_vec3(p) -> np.ndarray:
    v = np.asarray(p, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {np.shape(p)}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite coordinates: {v}")
    return v


@dataclass(frozen=True)
class Building:
    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(c) for c in self.min_corner)
        hi = tuple(float(c) for c in self.max_corner)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("building corners must be 3-vectors")
        if lo[2] != 0.0:
            raise ValueError(f"building must stand on the ground (min z = 0), got {lo[2]}")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate building {lo} -> {hi}")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    @property
    def height(self) -> float:
        return self.max_corner[2]

    def contains(self, p, strict: bool = True) -> bool:
        p = np.asarray(p, dtype=float)
        lo, hi = np.array(self.min_corner), np.array(self.max_corner)
        if strict:
            return bool(np.all((p > lo) & (p < hi)))
        return bool(np.all((p >= lo) & (p <= hi)))


class ObstacleReading(NamedTuple):
    distance: float
    direction: np.ndarray


def distance_3d(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def building_arrays(buildings: Sequence[Building]) -> tuple[np.ndarray, np.ndarray]:
    """Stack building corners into ``(B, 3)`` min and max arrays."""
    if not buildings:
        return np.zeros((0, 3)), np.zeros((0, 3))
    lo = np.array([b.min_corner for b in buildings], dtype=float)
    hi = np.array([b.max_corner for b in buildings], dtype=float)
    return lo, hi


def _bounds_of(obj) -> tuple[np.ndarray, np.ndarray]:
    # Scenario caches its stacked arrays; a bare list of buildings is also accepted.
    if isinstance(obj, tuple) and len(obj) == 2 and isinstance(obj[0], np.ndarray):
        return obj
    if hasattr(obj, "building_bounds"):
        return obj.building_bounds
    if hasattr(obj, "buildings"):
        return building_arrays(obj.buildings)
    return building_arrays(obj)


def segments_hit_boxes(p0, p1, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Open-segment versus open-box test, vectorized.

    ``p0`` and ``p1`` broadcast to ``(N, 3)``; ``lo``/``hi`` are ``(B, 3)``.
    Returns an ``(N, B)`` boolean matrix. A segment counts as intersecting a
    box only if some point strictly between its endpoints lies strictly inside
    the box, so grazing a face or touching it with an endpoint does not count.
    """
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    p0, p1 = np.broadcast_arrays(p0, p1)
    if lo.shape[0] == 0:
        return np.zeros((p0.shape[0], 0), dtype=bool)
    d = (p1 - p0)[:, None, :]
    o = p0[:, None, :]
    lo_ = lo[None, :, :]
    hi_ = hi[None, :, :]
    moving = d != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo_ - o) / d
        t2 = (hi_ - o) / d
    inside = (o > lo_) & (o < hi_)
    t_lo = np.where(moving, np.minimum(t1, t2), np.where(inside, -np.inf, np.inf))
    t_hi = np.where(moving, np.maximum(t1, t2), np.where(inside, np.inf, -np.inf))
    enter = np.maximum(t_lo.max(axis=2), 0.0)
    leave = np.minimum(t_hi.min(axis=2), 1.0)
    return enter < leave


def segment_intersects_building(p0, p1, b: Building) -> bool:
    lo, hi = building_arrays([b])
    return bool(segments_hit_boxes(as_vec3(p0), as_vec3(p1), lo, hi)[0, 0])


def is_los(scenario, a, b) -> bool:
    """True when no building blocks the segment between ``a`` and ``b``.

    ``scenario`` may be a Scenario or any sequence of buildings.
    """
    lo, hi = _bounds_of(scenario)
    if lo.shape[0] == 0:
        return True
    return not bool(segments_hit_boxes(as_vec3(a), as_vec3(b), lo, hi).any())


def los_mask(scenario, origin, points) -> np.ndarray:
    """Line-of-sight flags from one ``origin`` to each row of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = _bounds_of(scenario)
    if lo.shape[0] == 0:
        return np.ones(points.shape[0], dtype=bool)
    return ~segments_hit_boxes(np.asarray(origin, dtype=float), points, lo, hi).any(axis=1)


def inside_any(scenario, points) -> np.ndarray:
    """Strict-interior membership of each point in any building."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = _bounds_of(scenario)
    if lo.shape[0] == 0:
        return np.zeros(points.shape[0], dtype=bool)
    p = points[:, None, :]
    return np.all((p > lo[None]) & (p < hi[None]), axis=2).any(axis=1)


def ray_directions(n_rays: int = 16) -> np.ndarray:
    """Unit ray directions: -z, +z, the four horizontal axes, then a
    Fibonacci-sphere fill for the rest. The order fixes tie-breaking."""
    axes = np.array(
        [[0, 0, -1], [0, 0, 1], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]], dtype=float
    )
    if n_rays <= len(axes):
        return axes[: max(n_rays, 1)].copy()
    k = n_rays - len(axes)
    i = np.arange(k) + 0.5
    z = 1.0 - 2.0 * i / k
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    phi = golden * i
    fill = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return np.vstack([axes, fill / np.linalg.norm(fill, axis=1, keepdims=True)])


def _ray_box_entry(o: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Entry distance of each ray into each closed box, ``inf`` on a miss. ``(R, B)``."""
    d = dirs[:, None, :]
    moving = d != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo[None] - o) / d
        t2 = (hi[None] - o) / d
    within = (o >= lo[None]) & (o <= hi[None])
    t_lo = np.where(moving, np.minimum(t1, t2), np.where(within, -np.inf, np.inf))
    t_hi = np.where(moving, np.maximum(t1, t2), np.where(within, np.inf, -np.inf))
    enter = np.maximum(t_lo.max(axis=2), 0.0)
    leave = t_hi.min(axis=2)
    return np.where(enter <= leave, enter, np.inf)


def nearest_obstacle(scenario, p, max_range: float = 50.0, n_rays: int = 16) -> ObstacleReading:
    """Shortest ray hit against buildings, the ground and the area walls."""
    p = as_vec3(p)
    lo, hi = _bounds_of(scenario)
    if lo.shape[0] and inside_any((lo, hi), p[None])[0]:
        raise CollisionError(f"point {p.tolist()} is inside a building")
    dirs = ray_directions(n_rays)
    hits = np.full(len(dirs), np.inf)
    if lo.shape[0]:
        hits = _ray_box_entry(p, dirs, lo, hi).min(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ground = np.where(dirs[:, 2] < 0, -p[2] / dirs[:, 2], np.inf)
        hits = np.minimum(hits, ground)
        area = getattr(scenario, "area", None)
        if area is not None:
            for axis, extent in ((0, area[0]), (1, area[1])):
                dc = dirs[:, axis]
                wall = np.where(dc > 0, (extent - p[axis]) / dc, np.where(dc < 0, -p[axis] / dc, np.inf))
                hits = np.minimum(hits, wall)
    i = int(np.argmin(hits))
    if not hits[i] <= max_range:
        return ObstacleReading(float(max_range), np.array([0.0, 0.0, -1.0]))
    return ObstacleReading(float(max(hits[i], 0.0)), dirs[i].copy())
