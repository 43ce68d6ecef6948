"""Path-relative geometry, point-mass kinematics and rectangle collision tests.

Every vehicle in the simulator follows a fixed reference line, so most of the
work here is interpolation along sampled polylines.  The Frenet mapping uses a
linearly interpolated vertex normal inside each segment; that keeps
``frenet_to_cartesian`` continuous across vertices and lets ``frenet_project``
invert it exactly by solving a quadratic per segment.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace

import numpy as np

RESOLUTION = 0.5
COLLISION_TOL = 1e-3


def wrap_angle(a: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def wrap_angles(a: np.ndarray) -> np.ndarray:
    out = np.mod(a + np.pi, 2.0 * np.pi)
    out = np.where(out <= 0.0, out + 2.0 * np.pi, out)
    return out - np.pi


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))


@dataclass(frozen=True)
class VehicleState:
    """Ego-style vehicle record; ``s`` is the arc position on the assigned path."""

    pose: Pose2D
    speed: float = 0.0
    accel: float = 0.0
    length: float = 5.0
    width: float = 2.0
    s: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")
        if self.length <= 0 or self.width <= 0:
            raise ValueError("vehicle dimensions must be positive")


@dataclass(frozen=True)
class FrenetState:
    l: float
    d: float = 0.0
    dl: float = 0.0
    dd: float = 0.0
    ddl: float = 0.0
    ddd: float = 0.0
    clamped: bool = False


class ReferenceLine:
    """Sampled polyline with cumulative arc length.

    Parameters
    ----------
    points : array_like, shape (n, 2)
        Ordered samples.  Consecutive duplicates are dropped.
    resample : float or None
        If given, the polyline is re-sampled at this spacing (meters).
    """

    def __init__(self, points, resample: float | None = None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (n, 2)")
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.hypot(*np.diff(pts, axis=0).T) > 1e-9
        pts = pts[keep]
        if len(pts) < 2:
            raise ValueError("a reference line needs at least 2 distinct samples")
        if resample is not None:
            pts = _resample(pts, resample)
        self.xy = pts
        seg = np.diff(pts, axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.s = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.seg_dir = seg / self.seg_len[:, None]
        seg_normal = np.stack([-self.seg_dir[:, 1], self.seg_dir[:, 0]], axis=1)
        vn = np.empty_like(pts)
        vn[0] = seg_normal[0]
        vn[-1] = seg_normal[-1]
        if len(seg_normal) > 1:
            mid = seg_normal[:-1] + seg_normal[1:]
            vn[1:-1] = mid / np.linalg.norm(mid, axis=1)[:, None]
        self.vertex_normal = vn
        self.seg_heading = np.arctan2(self.seg_dir[:, 1], self.seg_dir[:, 0])
        # curvature from finite differences of the segment heading
        dh = wrap_angles(np.diff(self.seg_heading))
        ds = 0.5 * (self.seg_len[:-1] + self.seg_len[1:])
        k = np.zeros(len(pts))
        if len(dh):
            k[1:-1] = dh / ds
        self.curvature = k
        # plain-float copies for the scalar path
        self._s = self.s.tolist()
        self._xy = self.xy.tolist()
        self._vn = vn.tolist()
        self._seg_len = self.seg_len.tolist()

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def __len__(self):
        return len(self.xy)

    def _locate(self, l):
        i = np.clip(np.searchsorted(self.s, l, side="right") - 1, 0, len(self.seg_len) - 1)
        t = (l - self.s[i]) / self.seg_len[i]
        return i, t

    def interpolate(self, l, d=0.0):
        """Vectorized Frenet -> Cartesian.  Returns (x, y, heading) arrays.

        ``l`` is clamped to [0, length].
        """
        l = np.clip(np.asarray(l, dtype=float), 0.0, self.s[-1])
        d = np.asarray(d, dtype=float)
        i, t = self._locate(l)
        a = self.xy[i]
        e = self.xy[i + 1] - a
        n = self.vertex_normal[i] * (1.0 - t)[..., None] + self.vertex_normal[i + 1] * t[..., None]
        p = a + e * t[..., None] + n * d[..., None]
        heading = np.arctan2(-n[..., 0], n[..., 1])
        return p[..., 0], p[..., 1], heading

    def interpolate_scalar(self, l: float, d: float = 0.0):
        """Scalar ``interpolate``; returns bitwise the same floats."""
        s = self._s
        l = min(max(float(l), 0.0), s[-1])
        i = min(max(bisect.bisect_right(s, l) - 1, 0), len(s) - 2)
        t = (l - s[i]) / self._seg_len[i]
        (ax, ay), (bx, by) = self._xy[i], self._xy[i + 1]
        (n0x, n0y), (n1x, n1y) = self._vn[i], self._vn[i + 1]
        u = 1.0 - t
        nx = n0x * u + n1x * t
        ny = n0y * u + n1y * t
        x = ax + (bx - ax) * t + nx * d
        y = ay + (by - ay) * t + ny * d
        return x, y, float(np.arctan2(-nx, ny))

    def pose_at(self, l: float, d: float = 0.0) -> Pose2D:
        x, y, h = self.interpolate(l, d)
        return Pose2D(float(x), float(y), float(h))

    def curvature_at(self, l: float) -> float:
        return float(np.interp(l, self.s, self.curvature))


def _resample(pts: np.ndarray, step: float) -> np.ndarray:
    seg = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(int(math.ceil(s[-1] / step)), 1)
    q = np.linspace(0.0, s[-1], n + 1)
    return np.stack([np.interp(q, s, pts[:, 0]), np.interp(q, s, pts[:, 1])], axis=1)


def frenet_project(point: Pose2D, ref: ReferenceLine) -> FrenetState:
    """Positional Frenet coordinates of ``point``.

    Solves, on every segment, for the parameter where the interpolated normal
    passes through the point and keeps the root with the smallest offset.  A
    point outside the line's projection domain is clamped to the nearest
    endpoint and flagged with ``clamped=True``.
    """
    q = np.array([point.x, point.y]) - ref.xy[:-1]
    e = ref.xy[1:] - ref.xy[:-1]
    n0 = ref.vertex_normal[:-1]
    m = ref.vertex_normal[1:] - n0

    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    c0 = cross(q, n0)
    c1 = cross(q, m) - cross(e, n0)
    c2 = -cross(e, m)
    best = None
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = np.abs(c2) < 1e-12 * np.maximum(np.abs(c1), 1e-300)
        roots = [np.where(lin, -c0 / c1, np.nan)]
        disc = c1 * c1 - 4.0 * c2 * c0
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        # numerically stable quadratic root pair
        qq = -0.5 * (c1 + np.where(c1 >= 0, 1.0, -1.0) * sq)
        roots.append(np.where(lin, np.nan, qq / c2))
        roots.append(np.where(lin, np.nan, c0 / qq))
    eps = 1e-9
    for t in roots:
        ok = np.isfinite(t) & (t >= -eps) & (t <= 1.0 + eps)
        if not ok.any():
            continue
        idx = np.nonzero(ok)[0]
        tt = np.clip(t[idx], 0.0, 1.0)
        nn = n0[idx] + m[idx] * tt[:, None]
        r = q[idx] - e[idx] * tt[:, None]
        d = np.einsum("ij,ij->i", r, nn) / np.einsum("ij,ij->i", nn, nn)
        j = int(np.argmin(np.abs(d)))
        cand = (abs(d[j]), float(ref.s[idx[j]] + tt[j] * ref.seg_len[idx[j]]), float(d[j]))
        if best is None or cand[0] < best[0]:
            best = cand
    if best is not None:
        return FrenetState(l=best[1], d=best[2])
    # outside the projection domain: snap to the closer endpoint
    p = np.array([point.x, point.y])
    d0 = np.hypot(*(p - ref.xy[0]))
    d1 = np.hypot(*(p - ref.xy[-1]))
    if d0 <= d1:
        off = float(np.dot(p - ref.xy[0], ref.vertex_normal[0]))
        return FrenetState(l=0.0, d=off, clamped=True)
    off = float(np.dot(p - ref.xy[-1], ref.vertex_normal[-1]))
    return FrenetState(l=ref.length, d=off, clamped=True)


def frenet_to_cartesian(fs: FrenetState, ref: ReferenceLine) -> Pose2D:
    return ref.pose_at(fs.l, fs.d)


def advance(speed: float, accel: float, dt: float) -> tuple[float, float]:
    """Arc displacement and new speed for one point-mass step (no reversing)."""
    ds = speed * dt + 0.5 * accel * dt * dt
    return max(ds, 0.0), max(speed + accel * dt, 0.0)


def step_kinematics(state: VehicleState, accel: float, dt: float, ref: ReferenceLine) -> VehicleState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    ds, v = advance(state.speed, accel, dt)
    s = min(state.s + ds, ref.length)
    x, y, h = ref.interpolate(s)
    return replace(state, pose=Pose2D(float(x), float(y), float(h)), speed=v, accel=accel, s=s)


def rectangle_corners(x, y, heading, length, width):
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = 0.5 * length, 0.5 * width
    return [
        (x + c * hl - s * hw, y + s * hl + c * hw),
        (x - c * hl - s * hw, y - s * hl + c * hw),
        (x - c * hl + s * hw, y - s * hl - c * hw),
        (x + c * hl + s * hw, y + s * hl - c * hw),
    ]


def obb_overlap(a: VehicleState, b: VehicleState) -> bool:
    """Separating-axis test on two closed rectangles (touching counts)."""
    return bool(
        obb_overlap_arrays(
            a.pose.x, a.pose.y, a.pose.heading, a.length, a.width,
            b.pose.x, b.pose.y, b.pose.heading, b.length, b.width,
        )
    )


def obb_overlap_arrays(ax, ay, ah, al, aw, bx, by, bh, bl, bw):
    """Broadcasting SAT test.  All arguments are scalars or arrays."""
    dx = np.asarray(bx, dtype=float) - ax
    dy = np.asarray(by, dtype=float) - ay
    ca, sa = np.cos(ah), np.sin(ah)
    cb, sb = np.cos(bh), np.sin(bh)
    # |cos| of the relative angle terms
    cc = np.abs(ca * cb + sa * sb)
    cs = np.abs(ca * sb - sa * cb)
    hal, haw = 0.5 * np.asarray(al), 0.5 * np.asarray(aw)
    hbl, hbw = 0.5 * np.asarray(bl), 0.5 * np.asarray(bw)
    sep = np.zeros(np.broadcast(dx, cc).shape, dtype=bool)
    # axes of a
    t = np.abs(dx * ca + dy * sa)
    sep |= t > hal + hbl * cc + hbw * cs
    t = np.abs(-dx * sa + dy * ca)
    sep |= t > haw + hbl * cs + hbw * cc
    # axes of b
    t = np.abs(dx * cb + dy * sb)
    sep |= t > hbl + hal * cc + haw * cs
    t = np.abs(-dx * sb + dy * cb)
    sep |= t > hbw + hal * cs + haw * cc
    return ~sep


def polyline_intersections(pa: np.ndarray, pb: np.ndarray):
    """All transversal crossings between two polylines.

    Returns a list of ``(i, ta, j, tb, x, y)`` with segment indices and the
    in-segment parameters.  Parallel or collinear segment pairs are skipped.
    """
    a0, a1 = pa[:-1], pa[1:]
    b0, b1 = pb[:-1], pb[1:]
    # bounding-box prefilter
    amin, amax = np.minimum(a0, a1), np.maximum(a0, a1)
    bmin, bmax = np.minimum(b0, b1), np.maximum(b0, b1)
    hit = (
        (amin[:, None, 0] <= bmax[None, :, 0]) & (bmin[None, :, 0] <= amax[:, None, 0])
        & (amin[:, None, 1] <= bmax[None, :, 1]) & (bmin[None, :, 1] <= amax[:, None, 1])
    )
    out = []
    for i, j in zip(*np.nonzero(hit)):
        r = a1[i] - a0[i]
        s = b1[j] - b0[j]
        den = r[0] * s[1] - r[1] * s[0]
        if abs(den) < 1e-12:
            continue
        q = b0[j] - a0[i]
        ta = (q[0] * s[1] - q[1] * s[0]) / den
        tb = (q[0] * r[1] - q[1] * r[0]) / den
        if 0.0 <= ta < 1.0 and 0.0 <= tb < 1.0:
            p = a0[i] + ta * r
            out.append((int(i), float(ta), int(j), float(tb), float(p[0]), float(p[1])))
    return out
