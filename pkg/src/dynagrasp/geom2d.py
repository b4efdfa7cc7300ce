"""Planar geometry: poses, shape primitives, collision and distance queries.

Shapes are treated as closed sets, so boundary contact counts as a
collision.  Distances are exact (no sampling): every shape pair reduces to
point/segment/box primitives whose closest features are vertex-edge or
vertex-vertex pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    r = math.fmod(a + math.pi, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    r -= math.pi
    if r == -math.pi:
        r = math.pi
    return r


@dataclass(frozen=True)
class Pose2:
    """Planar pose (x, y, phi) with phi normalized to (-pi, pi]."""

    x: float
    y: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def compose(self, other: "Pose2") -> "Pose2":
        """self * other: interpret `other` in this pose's frame."""
        c, s = math.cos(self.phi), math.sin(self.phi)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.phi + other.phi,
        )

    def transform_point(self, p) -> np.ndarray:
        c, s = math.cos(self.phi), math.sin(self.phi)
        return np.array([self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]])

    def inverse_transform_point(self, p) -> np.ndarray:
        c, s = math.cos(self.phi), math.sin(self.phi)
        dx, dy = p[0] - self.x, p[1] - self.y
        return np.array([c * dx + s * dy, -s * dx + c * dy])


# --- shape primitives -------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    p0: tuple
    p1: tuple


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("circle radius must be >= 0")


@dataclass(frozen=True)
class OrientedRect:
    pose: Pose2
    half_w: float
    half_h: float

    def __post_init__(self):
        if self.half_w <= 0 or self.half_h <= 0:
            raise ValueError("rect half extents must be > 0")

    def corners(self) -> np.ndarray:
        hw, hh = self.half_w, self.half_h
        local = np.array([[hw, hh], [-hw, hh], [-hw, -hh], [hw, -hh]])
        c, s = math.cos(self.pose.phi), math.sin(self.pose.phi)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.pose.x, self.pose.y])


@dataclass(frozen=True)
class Capsule:
    p0: tuple
    p1: tuple
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("capsule radius must be >= 0")


Shape = Segment | Circle | OrientedRect | Capsule


# --- scalar primitives ------------------------------------------------------


def _d_point_segment(p, a, b) -> float:
    ax, ay = a[0], a[1]
    dx, dy = b[0] - ax, b[1] - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return math.hypot(p[0] - ax, p[1] - ay)
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return (
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


def _segments_intersect(a, b, c, d) -> bool:
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)) and o1 != 0 and o2 != 0 and o3 != 0 and o4 != 0:
        return True
    if o1 == 0 and _on_segment(a, b, c):
        return True
    if o2 == 0 and _on_segment(a, b, d):
        return True
    if o3 == 0 and _on_segment(c, d, a):
        return True
    if o4 == 0 and _on_segment(c, d, b):
        return True
    return False


def _d_segment_segment(a, b, c, d) -> float:
    if _segments_intersect(a, b, c, d):
        return 0.0
    return min(
        _d_point_segment(c, a, b),
        _d_point_segment(d, a, b),
        _d_point_segment(a, c, d),
        _d_point_segment(b, c, d),
    )


def _d_point_box(p_local, hw, hh) -> float:
    dx = max(abs(p_local[0]) - hw, 0.0)
    dy = max(abs(p_local[1]) - hh, 0.0)
    return math.hypot(dx, dy)


def _d_segment_rect(a, b, rect: OrientedRect) -> float:
    al = rect.pose.inverse_transform_point(a)
    bl = rect.pose.inverse_transform_point(b)
    hw, hh = rect.half_w, rect.half_h
    if abs(al[0]) <= hw and abs(al[1]) <= hh:
        return 0.0
    if abs(bl[0]) <= hw and abs(bl[1]) <= hh:
        return 0.0
    corners = np.array([[hw, hh], [-hw, hh], [-hw, -hh], [hw, -hh]])
    for i in range(4):
        if _segments_intersect(al, bl, corners[i], corners[(i + 1) % 4]):
            return 0.0
    d = min(_d_point_box(al, hw, hh), _d_point_box(bl, hw, hh))
    for i in range(4):
        d = min(d, _d_point_segment(corners[i], al, bl))
    return d


def _rects_overlap(r1: OrientedRect, r2: OrientedRect) -> bool:
    # separating-axis test on the four face normals
    c1, c2 = r1.corners(), r2.corners()
    for rect, corners_other in ((r1, c2), (r2, c1)):
        c, s = math.cos(rect.pose.phi), math.sin(rect.pose.phi)
        axes = np.array([[c, s], [-s, c]])
        half = np.array([rect.half_w, rect.half_h])
        center = np.array([rect.pose.x, rect.pose.y])
        proj = (corners_other - center) @ axes.T
        for k in range(2):
            if proj[:, k].min() > half[k] or proj[:, k].max() < -half[k]:
                return False
    return True


def _d_rect_rect(r1: OrientedRect, r2: OrientedRect) -> float:
    if _rects_overlap(r1, r2):
        return 0.0
    d = math.inf
    for p in r1.corners():
        d = min(d, _d_point_box(r2.pose.inverse_transform_point(p), r2.half_w, r2.half_h))
    for p in r2.corners():
        d = min(d, _d_point_box(r1.pose.inverse_transform_point(p), r1.half_w, r1.half_h))
    return d


# --- public queries ---------------------------------------------------------


def distance(a: Shape, b: Shape) -> float:
    """Minimum distance between two closed shapes (0 when they intersect)."""
    # order the pair so we only dispatch on one triangle of the type table
    rank = {Segment: 0, Circle: 1, OrientedRect: 2, Capsule: 3}
    if rank[type(a)] > rank[type(b)]:
        a, b = b, a
    ta, tb = type(a), type(b)

    if ta is Segment and tb is Segment:
        return _d_segment_segment(a.p0, a.p1, b.p0, b.p1)
    if ta is Segment and tb is Circle:
        return max(0.0, _d_point_segment(b.center, a.p0, a.p1) - b.radius)
    if ta is Segment and tb is OrientedRect:
        return _d_segment_rect(a.p0, a.p1, b)
    if ta is Segment and tb is Capsule:
        return max(0.0, _d_segment_segment(a.p0, a.p1, b.p0, b.p1) - b.radius)
    if ta is Circle and tb is Circle:
        dc = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
        return max(0.0, dc - a.radius - b.radius)
    if ta is Circle and tb is OrientedRect:
        d = _d_point_box(b.pose.inverse_transform_point(a.center), b.half_w, b.half_h)
        return max(0.0, d - a.radius)
    if ta is Circle and tb is Capsule:
        d = _d_point_segment(a.center, b.p0, b.p1)
        return max(0.0, d - a.radius - b.radius)
    if ta is OrientedRect and tb is OrientedRect:
        return _d_rect_rect(a, b)
    if ta is OrientedRect and tb is Capsule:
        return max(0.0, _d_segment_rect(b.p0, b.p1, a) - b.radius)
    if ta is Capsule and tb is Capsule:
        return max(0.0, _d_segment_segment(a.p0, a.p1, b.p0, b.p1) - a.radius - b.radius)
    raise TypeError(f"unsupported shape pair {ta} vs {tb}")


def collide(a: Shape, b: Shape) -> bool:
    """True iff the closed shapes intersect."""
    return distance(a, b) <= 0.0


def point_shape_distance(p, shape: Shape) -> float:
    """Distance from a point to a closed shape (0 inside)."""
    if isinstance(shape, Segment):
        return _d_point_segment(p, shape.p0, shape.p1)
    if isinstance(shape, Circle):
        d = math.hypot(p[0] - shape.center[0], p[1] - shape.center[1])
        return max(0.0, d - shape.radius)
    if isinstance(shape, OrientedRect):
        return _d_point_box(shape.pose.inverse_transform_point(p), shape.half_w, shape.half_h)
    if isinstance(shape, Capsule):
        return max(0.0, _d_point_segment(p, shape.p0, shape.p1) - shape.radius)
    raise TypeError(f"unsupported shape {type(shape)}")


# --- vectorized scene kernel ------------------------------------------------


class SceneKernel:
    """Batched capsule-vs-obstacle tests against a fixed shape list.

    Packs circles and oriented rects into arrays once; `any_hit` then
    answers "does any of these capsules touch any obstacle" for a whole
    batch of arm configurations in a few numpy passes.  Results agree
    exactly with the scalar `collide` predicate (same closed-set rule).
    """

    def __init__(self, shapes):
        circles = [s for s in shapes if isinstance(s, Circle)]
        rects = [s for s in shapes if isinstance(s, OrientedRect)]
        if len(circles) + len(rects) != len(shapes):
            raise TypeError("SceneKernel supports Circle and OrientedRect obstacles")
        self.n_shapes = len(shapes)
        self.c_centers = np.array([c.center for c in circles], dtype=float).reshape(-1, 2)
        self.c_radii = np.array([c.radius for c in circles], dtype=float)
        self.r_centers = np.array([[r.pose.x, r.pose.y] for r in rects], dtype=float).reshape(-1, 2)
        phis = np.array([r.pose.phi for r in rects], dtype=float)
        self.r_cos = np.cos(phis)
        self.r_sin = np.sin(phis)
        self.r_half = np.array([[r.half_w, r.half_h] for r in rects], dtype=float).reshape(-1, 2)

    def segment_clearances(self, p0, p1):
        """Per-obstacle distances from a single segment, shape (n_shapes,)."""
        a = np.asarray(p0, dtype=float).reshape(1, 2)
        b = np.asarray(p1, dtype=float).reshape(1, 2)
        return self._min_dist(a[None, :, :], b[None, :, :])[0]

    def any_hit(self, p0s, p1s, radius: float) -> np.ndarray:
        """(B,) bools: capsule i (segments p0s[i,l]->p1s[i,l], radius) hits anything."""
        if self.n_shapes == 0:
            return np.zeros(p0s.shape[0], dtype=bool)
        d = self._min_dist(p0s, p1s)  # (B, n_shapes) min over links
        return (d <= radius).any(axis=1)

    def _min_dist(self, p0s, p1s):
        """Min-over-links distance from each batch entry to each obstacle.

        p0s, p1s: (B, L, 2).  Returns (B, n_shapes) of segment-to-shape
        distances minimized over the L segments.
        """
        B, L, _ = p0s.shape
        out = np.full((B, max(self.n_shapes, 1)), np.inf)
        col = 0
        if len(self.c_radii):
            d = _seg_point_dist(p0s, p1s, self.c_centers)  # (B, L, C)
            d = d - self.c_radii[None, None, :]
            out[:, col:col + len(self.c_radii)] = np.maximum(d, 0.0).min(axis=1)
            col += len(self.c_radii)
        if len(self.r_half):
            d = _seg_box_dist(p0s, p1s, self.r_centers, self.r_cos, self.r_sin, self.r_half)
            out[:, col:col + len(self.r_half)] = d.min(axis=1)
        return out[:, : self.n_shapes]


def _seg_point_dist(p0s, p1s, pts):
    """(B, L, P) distances from segments to points."""
    a = p0s[:, :, None, :]
    d = p1s[:, :, None, :] - a
    L2 = (d * d).sum(-1)
    w = pts[None, None, :, :] - a
    t = (w * d).sum(-1) / np.where(L2 == 0.0, 1.0, L2)
    t = np.clip(np.where(L2 == 0.0, 0.0, t), 0.0, 1.0)
    closest = a + t[..., None] * d
    diff = pts[None, None, :, :] - closest
    return np.sqrt((diff * diff).sum(-1))


def _seg_box_dist(p0s, p1s, centers, coss, sins, halves):
    """(B, L, R) distances from segments to oriented boxes (0 on overlap)."""
    B, L, _ = p0s.shape
    R = centers.shape[0]
    # into box frames: rotate by -phi
    def to_local(p):
        dx = p[:, :, None, 0] - centers[None, None, :, 0]
        dy = p[:, :, None, 1] - centers[None, None, :, 1]
        lx = coss[None, None, :] * dx + sins[None, None, :] * dy
        ly = -sins[None, None, :] * dx + coss[None, None, :] * dy
        return np.stack([lx, ly], axis=-1)  # (B, L, R, 2)

    al, bl = to_local(p0s), to_local(p1s)
    hw = halves[None, None, :, 0]
    hh = halves[None, None, :, 1]

    inside_a = (np.abs(al[..., 0]) <= hw) & (np.abs(al[..., 1]) <= hh)
    inside_b = (np.abs(bl[..., 0]) <= hw) & (np.abs(bl[..., 1]) <= hh)

    # slab clip (Liang-Barsky) for segment-box crossing
    d = bl - al
    t0 = np.zeros((B, L, R))
    t1 = np.ones((B, L, R))
    crossing = np.ones((B, L, R), dtype=bool)
    for axis, half in ((0, hw), (1, hh)):
        p = d[..., axis]
        q0 = al[..., axis]
        lo, hi = -half, half
        parallel = p == 0.0
        outside = parallel & ((q0 < lo) | (q0 > hi))
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo - q0) / p
            tb = (hi - q0) / p
        tmin = np.where(parallel, 0.0, np.minimum(ta, tb))
        tmax = np.where(parallel, 1.0, np.maximum(ta, tb))
        t0 = np.maximum(t0, tmin)
        t1 = np.minimum(t1, tmax)
        crossing &= ~outside
    crossing &= t0 <= t1
    hit = inside_a | inside_b | crossing

    # distance for the non-hit entries: endpoints-to-box and corners-to-segment
    def point_box(p):
        ddx = np.maximum(np.abs(p[..., 0]) - hw, 0.0)
        ddy = np.maximum(np.abs(p[..., 1]) - hh, 0.0)
        return np.sqrt(ddx * ddx + ddy * ddy)

    dist = np.minimum(point_box(al), point_box(bl))
    L2 = (d * d).sum(-1)
    L2safe = np.where(L2 == 0.0, 1.0, L2)
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            cx, cy = sx * hw, sy * hh
            wx = cx - al[..., 0]
            wy = cy - al[..., 1]
            t = np.clip((wx * d[..., 0] + wy * d[..., 1]) / L2safe, 0.0, 1.0)
            ex = wx - t * d[..., 0]
            ey = wy - t * d[..., 1]
            dist = np.minimum(dist, np.sqrt(ex * ex + ey * ey))
    return np.where(hit, 0.0, dist)
