"""Planar geometry primitives shared by the simulator, planner and macro matchers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def normalize_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def angle_diff(a: float, b: float) -> float:
    """Signed smallest rotation taking heading ``b`` onto heading ``a``."""
    return normalize_angle(a - b)


def unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def left_normal(v: np.ndarray) -> np.ndarray:
    """Rotate a 2-vector by +90 degrees."""
    return np.array([-v[1], v[0]])


def cross2(a, b) -> float:
    """Scalar cross product of two 2-vectors."""
    return float(a[0] * b[1] - a[1] * b[0])


def segment_intersects_aabb(p0, p1, rect) -> bool:
    """Liang-Barsky clip of segment p0->p1 against rect (xmin, ymin, xmax, ymax)."""
    x0, y0 = float(p0[0]), float(p0[1])
    x1, y1 = float(p1[0]), float(p1[1])
    xmin, ymin, xmax, ymax = rect
    dx, dy = x1 - x0, y1 - y0
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, x0 - xmin), (dx, xmax - x0), (-dy, y0 - ymin), (dy, ymax - y0)):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        r = q / p
        if p < 0.0:
            if r > t1:
                return False
            t0 = max(t0, r)
        else:
            if r < t0:
                return False
            t1 = min(t1, r)
    return t0 <= t1


def point_in_rect(p, rect) -> bool:
    xmin, ymin, xmax, ymax = rect
    return xmin <= p[0] <= xmax and ymin <= p[1] <= ymax


def oriented_box_corners(center, heading: float, length: float, width: float) -> np.ndarray:
    """Corners of a length x width box centred at ``center`` and rotated by ``heading``."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.asarray(center, dtype=float)


def boxes_overlap(corners_a: np.ndarray, corners_b: np.ndarray) -> bool:
    """Separating-axis test for two convex quadrilaterals."""
    for corners in (corners_a, corners_b):
        for i in range(4):
            edge = corners[(i + 1) % 4] - corners[i]
            axis = np.array([-edge[1], edge[0]])
            pa = corners_a @ axis
            pb = corners_b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def segment_intersects_box(p0, p1, corners: np.ndarray) -> bool:
    """True if segment p0->p1 touches the convex quad given by ``corners``.

    Used for line-of-sight tests against vehicle bodies.
    """
    seg = np.array([np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)])
    edge = seg[1] - seg[0]
    axes = [np.array([-edge[1], edge[0]])]
    for i in range(4):
        e = corners[(i + 1) % 4] - corners[i]
        axes.append(np.array([-e[1], e[0]]))
    for axis in axes:
        norm = np.linalg.norm(axis)
        if norm < 1e-12:
            continue
        pa = seg @ axis
        pb = corners @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


@dataclass
class Polyline:
    """A 2D polyline with arclength parametrisation and lateral projection."""

    points: np.ndarray

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[0] < 2:
            raise ValueError("polyline needs at least two points")
        deltas = np.diff(self.points, axis=0)
        seg_len = np.hypot(deltas[:, 0], deltas[:, 1])
        self._seg_len = seg_len
        self.cum_s = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.length = float(self.cum_s[-1])

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum_s, s, side="right")) - 1
        i = min(max(i, 0), len(self._seg_len) - 1)
        seg = self._seg_len[i]
        frac = 0.0 if seg < 1e-12 else (s - self.cum_s[i]) / seg
        return self.points[i] + frac * (self.points[i + 1] - self.points[i])

    def heading_at(self, s: float) -> float:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum_s, s, side="right")) - 1
        i = min(max(i, 0), len(self._seg_len) - 1)
        d = self.points[i + 1] - self.points[i]
        return math.atan2(d[1], d[0])

    def project(self, p) -> tuple[float, float]:
        """Project ``p`` onto the polyline.

        Returns (arclength s, signed lateral offset d); d > 0 lies to the left
        of the direction of travel.
        """
        p = np.asarray(p, dtype=float)
        a = self.points[:-1]
        b = self.points[1:]
        ab = b - a
        denom = np.einsum("ij,ij->i", ab, ab)
        denom[denom < 1e-12] = 1e-12
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / denom, 0.0, 1.0)
        closest = a + t[:, None] * ab
        d2 = np.einsum("ij,ij->i", p - closest, p - closest)
        i = int(np.argmin(d2))
        s = float(self.cum_s[i] + t[i] * self._seg_len[i])
        tangent = ab[i] / max(math.sqrt(denom[i]), 1e-12)
        lateral = cross2(tangent, p - closest[i])
        return s, lateral

    def offset(self, d: float) -> "Polyline":
        """Parallel polyline shifted by ``d`` metres to the left."""
        pts = self.points
        deltas = np.diff(pts, axis=0)
        seg_norm = np.hypot(deltas[:, 0], deltas[:, 1])[:, None]
        tangents = deltas / np.maximum(seg_norm, 1e-12)
        normals = np.column_stack([-tangents[:, 1], tangents[:, 0]])
        vertex_normals = np.empty_like(pts)
        vertex_normals[0] = normals[0]
        vertex_normals[-1] = normals[-1]
        if len(pts) > 2:
            mids = normals[:-1] + normals[1:]
            mid_norm = np.hypot(mids[:, 0], mids[:, 1])[:, None]
            vertex_normals[1:-1] = mids / np.maximum(mid_norm, 1e-12)
        return Polyline(pts + d * vertex_normals)

    def resample(self, spacing: float = 1.0) -> "Polyline":
        n = max(int(math.ceil(self.length / spacing)) + 1, 2)
        ss = np.linspace(0.0, self.length, n)
        return Polyline(np.array([self.point_at(s) for s in ss]))


def quadratic_bezier(p0, p1, p2, n: int = 12) -> np.ndarray:
    """Sample a quadratic Bezier curve, endpoints included."""
    t = np.linspace(0.0, 1.0, n)[:, None]
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t**2 * p2


def ray_intersection(p0, d0, p1, d1):
    """Intersection of two rays (point, direction); None if near-parallel."""
    denom = d0[0] * d1[1] - d0[1] * d1[0]
    if abs(denom) < 1e-9:
        return None
    dp = np.asarray(p1, dtype=float) - np.asarray(p0, dtype=float)
    t = (dp[0] * d1[1] - dp[1] * d1[0]) / denom
    return np.asarray(p0, dtype=float) + t * np.asarray(d0, dtype=float)
