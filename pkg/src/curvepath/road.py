"""Road geometry: lane polynomials, poses, arc-length corridors and frames.

The perceived road ahead of the vehicle is a cubic lane polynomial y(x)
over a forward preview window. A Corridor resamples that geometry (or any
other midline source) into arc length with heading and curvature channels,
which is what the planner consumes. Lateral offsets are signed perpendicular
distances from the midline, positive to the left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

DEFAULT_PREVIEW_M = 150.0
DEFAULT_LANE_WIDTH_M = 3.70
DEFAULT_CORRIDOR_STEP_M = 0.5

# Coefficient weighting for the cubic lane model. With CURVATURE_COEFFS the
# quadratic and cubic coefficients are the curvature and curvature rate at
# x = 0, i.e. y = c0 + c1*x + (c2/2)*x^2 + (c3/6)*x^3. RAW_COEFFS instead
# applies weights (1, 1, 2, 6) for data sources that bake the factors into
# the coefficients. All defaults use CURVATURE_COEFFS.
CURVATURE_COEFFS = (1.0, 1.0, 0.5, 1.0 / 6.0)
RAW_COEFFS = (1.0, 1.0, 2.0, 6.0)
DEFAULT_POLY_WEIGHTS = CURVATURE_COEFFS


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


@dataclass(frozen=True)
class Pose:
    """Planar pose. Heading is counterclockwise positive, wrapped to (-pi, pi]."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError("pose components must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True)
class LanePolynomial:
    """Cubic midline model in the vehicle frame.

    c0 is the lateral distance of the midline at x = 0, c1 its slope, c2 the
    curvature and c3 the curvature rate at x = 0 (under the default
    coefficient weighting, see CURVATURE_COEFFS).
    """

    c0: float
    c1: float
    c2: float
    c3: float
    preview_length: float = DEFAULT_PREVIEW_M

    def __post_init__(self):
        if not self.preview_length > 0:
            raise ValueError("preview_length must be positive")
        for name in ("c0", "c1", "c2", "c3"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def coefficients(self) -> tuple[float, float, float, float]:
        return (self.c0, self.c1, self.c2, self.c3)


def eval_lane_polynomial(poly: LanePolynomial, x, weights=DEFAULT_POLY_WEIGHTS):
    """Lateral midline position y(x). x may be a scalar or array in [0, preview]."""
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0.0) or np.any(xs > poly.preview_length):
        raise ValueError(
            f"x outside preview range [0, {poly.preview_length}]"
        )
    w0, w1, w2, w3 = weights
    y = (
        w0 * poly.c0
        + w1 * poly.c1 * xs
        + w2 * poly.c2 * xs**2
        + w3 * poly.c3 * xs**3
    )
    return float(y) if np.isscalar(x) else y


def _poly_slope_curvature(poly: LanePolynomial, xs: np.ndarray, weights=DEFAULT_POLY_WEIGHTS):
    """First and second derivatives of the lane polynomial."""
    w0, w1, w2, w3 = weights
    dy = w1 * poly.c1 + 2.0 * w2 * poly.c2 * xs + 3.0 * w3 * poly.c3 * xs**2
    ddy = 2.0 * w2 * poly.c2 + 6.0 * w3 * poly.c3 * xs
    return dy, ddy


def offset_point(nominal: Pose, delta: float) -> Pose:
    """Shift a midline pose laterally by delta (positive moves left of the midline)."""
    if not math.isfinite(delta):
        raise ValueError("offset must be finite")
    return Pose(
        x=nominal.x - delta * math.sin(nominal.theta),
        y=nominal.y + delta * math.cos(nominal.theta),
        theta=nominal.theta,
    )


@dataclass(frozen=True)
class PlanningFrame:
    """Planning coordinate frame anchored at an origin pose in the global frame."""

    origin: Pose


def to_planning_frame(global_pose: Pose, frame: PlanningFrame) -> Pose:
    o = frame.origin
    dx = global_pose.x - o.x
    dy = global_pose.y - o.y
    c, s = math.cos(o.theta), math.sin(o.theta)
    return Pose(c * dx + s * dy, -s * dx + c * dy, global_pose.theta - o.theta)


def from_planning_frame(local_pose: Pose, frame: PlanningFrame) -> Pose:
    o = frame.origin
    c, s = math.cos(o.theta), math.sin(o.theta)
    return Pose(
        o.x + c * local_pose.x - s * local_pose.y,
        o.y + s * local_pose.x + c * local_pose.y,
        local_pose.theta + o.theta,
    )


# Loose per-step consistency bound between heading increments and integrated
# curvature; catches corrupted corridor data without rejecting legitimate
# discretisation error at curvature jumps.
_HEADING_STEP_TOL = 0.02


@dataclass(frozen=True, eq=False)
class Corridor:
    """Arc-length sampled road midline.

    theta is stored unwrapped (continuous along s) so heading differences
    integrate curvature without 2*pi seams; poses returned by pose_at() carry
    wrapped headings. Arrays are read-only after construction.
    """

    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    lane_width: float = DEFAULT_LANE_WIDTH_M

    def __post_init__(self):
        arrays = {}
        for name in ("s", "x", "y", "theta", "kappa"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arrays[name] = arr
        n = arrays["s"].size
        if n < 2:
            raise ValueError("corridor needs at least two samples")
        for name, arr in arrays.items():
            if arr.shape != (n,):
                raise ValueError(f"corridor array {name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"corridor array {name} contains non-finite values")
        if abs(arrays["s"][0]) > 1e-9:
            raise ValueError("corridor arc length must start at 0")
        arrays["s"] = arrays["s"] - arrays["s"][0]
        ds = np.diff(arrays["s"])
        if np.any(ds <= 0):
            raise ValueError("corridor arc length must be strictly increasing")
        if not self.lane_width > 0:
            raise ValueError("lane_width must be positive")
        dtheta = np.diff(arrays["theta"])
        kappa_step = 0.5 * (arrays["kappa"][:-1] + arrays["kappa"][1:]) * ds
        if np.any(np.abs(dtheta - kappa_step) > _HEADING_STEP_TOL):
            raise ValueError("corridor heading increments inconsistent with curvature")
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.s.size

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def heading_unwrapped_at(self, station) -> np.ndarray | float:
        out = np.interp(station, self.s, self.theta)
        return float(out) if np.isscalar(station) else out

    def kappa_at(self, station):
        out = np.interp(station, self.s, self.kappa)
        return float(out) if np.isscalar(station) else out

    def point_at(self, station) -> tuple:
        return (
            np.interp(station, self.s, self.x),
            np.interp(station, self.s, self.y),
        )

    def pose_at(self, station: float) -> Pose:
        if station < -1e-9 or station > self.length + 1e-9:
            raise ValueError(f"station {station} outside corridor [0, {self.length}]")
        px, py = self.point_at(station)
        return Pose(float(px), float(py), float(self.heading_unwrapped_at(station)))

    def transformed(self, anchor: Pose) -> "Corridor":
        """Map a corridor expressed in a local frame into the frame where the
        local origin sits at `anchor`."""
        c, s = math.cos(anchor.theta), math.sin(anchor.theta)
        return Corridor(
            s=self.s,
            x=anchor.x + c * self.x - s * self.y,
            y=anchor.y + s * self.x + c * self.y,
            theta=self.theta + anchor.theta,
            kappa=self.kappa,
            lane_width=self.lane_width,
        )

    def window(self, start: float, length: float) -> "Corridor":
        """Sub-corridor covering [start, start + length], rebased to s = 0."""
        end = start + length
        if start < -1e-9 or end > self.length + 1e-9:
            raise ValueError("window outside corridor")
        inner = (self.s > start + 1e-12) & (self.s < end - 1e-12)
        stations = np.concatenate(([start], self.s[inner], [end]))
        return Corridor(
            s=stations - start,
            x=np.interp(stations, self.s, self.x),
            y=np.interp(stations, self.s, self.y),
            theta=np.interp(stations, self.s, self.theta),
            kappa=np.interp(stations, self.s, self.kappa),
            lane_width=self.lane_width,
        )

    def project(self, px: float, py: float) -> tuple[float, float]:
        """Project a point onto the midline polyline.

        Returns (station, signed offset); the offset is positive when the
        point lies left of the midline.
        """
        i = int(np.argmin((self.x - px) ** 2 + (self.y - py) ** 2))
        best = None
        for a in (i - 1, i):
            if a < 0 or a + 1 >= len(self):
                continue
            ax, ay = self.x[a], self.y[a]
            bx, by = self.x[a + 1], self.y[a + 1]
            vx, vy = bx - ax, by - ay
            seg_len2 = vx * vx + vy * vy
            t = ((px - ax) * vx + (py - ay) * vy) / seg_len2
            t = min(1.0, max(0.0, t))
            cx, cy = ax + t * vx, ay + t * vy
            d2 = (px - cx) ** 2 + (py - cy) ** 2
            if best is None or d2 < best[0]:
                seg_len = math.sqrt(seg_len2)
                cross = (vx * (py - ay) - vy * (px - ax)) / seg_len
                station = self.s[a] + t * (self.s[a + 1] - self.s[a])
                best = (d2, float(station), float(math.copysign(math.sqrt(d2), cross)))
        return best[1], best[2]


def corridor_from_polynomial(
    poly: LanePolynomial,
    step: float = DEFAULT_CORRIDOR_STEP_M,
    lane_width: float = DEFAULT_LANE_WIDTH_M,
    weights=DEFAULT_POLY_WEIGHTS,
) -> Corridor:
    """Resample a lane polynomial into an arc-length corridor.

    Samples cover x in [0, preview_length]; heading is atan(dy/dx), curvature
    y'' / (1 + y'^2)^(3/2), and arc length accumulates chord lengths.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    n = max(2, int(math.ceil(poly.preview_length / step)) + 1)
    xs = np.linspace(0.0, poly.preview_length, n)
    ys = eval_lane_polynomial(poly, xs, weights)
    dy, ddy = _poly_slope_curvature(poly, xs, weights)
    theta = np.arctan(dy)
    kappa = ddy / (1.0 + dy**2) ** 1.5
    s = np.concatenate(([0.0], np.cumsum(np.hypot(np.diff(xs), np.diff(ys)))))
    return Corridor(s=s, x=xs, y=ys, theta=theta, kappa=kappa, lane_width=lane_width)
