"""Euler-spiral path primitives: evaluation and G1 pose-to-pose fitting.

A segment has curvature kappa(s) = kappa0 + kappa_rate * s, so its heading
is a quadratic polynomial of arc length and positions are integrals of
cos/sin of that polynomial. Those integrals are evaluated with panelised
Gauss-Legendre quadrature, which is uniformly accurate from straight lines
through circular arcs to strong spirals (no special casing near zero
curvature rate is required).

G1 fitting normalises the problem to the chord frame and reduces it to a
scalar root-find in the heading-integral parameter, solved by Newton with a
bracketed bisection fallback. Of the infinitely many spirals joining two
poses, the returned one is the branch whose heading never swings more than
pi away from the chord direction (lane-keeping paths never loop).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .road import Pose, wrap_angle

_GL_ORDER = 24
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)

MAX_FIT_ITERATIONS = 100
FIT_RESIDUAL_TOL = 1e-12
MIN_CHORD_M = 1e-6


class FitError(RuntimeError):
    """Base class for G1 fitting failures."""


class DegenerateFitError(FitError):
    """Endpoints too close together to define a chord."""


class FitConvergenceError(FitError):
    """Root search did not converge; carries the best residual seen."""

    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(message)
        self.residual = residual


def _phase_integrals(a, b, c, tau_moments: bool = False):
    """Integrals of cos/sin((a/2) t^2 + b t + c) over t in [0, 1].

    Broadcasts over array-valued a, b, c. With tau_moments also returns the
    first and second cosine moments (needed for the fit Jacobian). The
    panel count follows the maximum phase slope so each panel sees only a
    few radians of phase.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    shape = np.broadcast_shapes(a.shape, b.shape, c.shape)
    a, b, c = (np.broadcast_to(v, shape) for v in (a, b, c))

    slope = np.max(np.abs(a) + np.abs(b)) if shape else abs(a) + abs(b)
    panels = int(min(256, max(1, math.ceil((float(slope) + 1.0) / 4.0))))

    centers = (np.arange(panels) + 0.5) / panels
    half = 0.5 / panels
    tau = (centers[:, None] + half * _GL_NODES[None, :]).ravel()
    wts = np.broadcast_to(half * _GL_WEIGHTS, (panels, _GL_ORDER)).ravel()

    phase = 0.5 * a[..., None] * tau**2 + b[..., None] * tau + c[..., None]
    cw = np.cos(phase) * wts
    sw = np.sin(phase) * wts
    x0 = cw.sum(axis=-1)
    y0 = sw.sum(axis=-1)
    if not tau_moments:
        return x0, y0
    x1 = (cw * tau).sum(axis=-1)
    x2 = (cw * tau * tau).sum(axis=-1)
    return x0, y0, x1, x2


@dataclass(frozen=True)
class ClothoidSegment:
    """One Euler curve: start pose, initial curvature, curvature rate, length."""

    start: Pose
    kappa0: float
    kappa_rate: float
    length: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("segment length must be positive")
        for name in ("kappa0", "kappa_rate", "length"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def curvature_at(self, s):
        return self.kappa0 + self.kappa_rate * np.asarray(s, dtype=float)

    def heading_at(self, s):
        """Unwrapped heading at arc length s (start heading plus integrated curvature)."""
        s = np.asarray(s, dtype=float)
        return self.start.theta + self.kappa0 * s + 0.5 * self.kappa_rate * s**2

    def sample(self, s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Positions and unwrapped headings at arc lengths s (vectorised)."""
        s = np.asarray(s, dtype=float)
        if np.any(s < -1e-9) or np.any(s > self.length + 1e-9):
            raise ValueError(f"arc length outside [0, {self.length}]")
        a = self.kappa_rate * s**2
        b = self.kappa0 * s
        x0, y0 = _phase_integrals(a, b, np.full_like(s, self.start.theta))
        return (
            self.start.x + s * x0,
            self.start.y + s * y0,
            self.heading_at(s),
        )

    def pose_at(self, s: float) -> Pose:
        if s == 0.0:
            return self.start
        xs, ys, ths = self.sample(np.asarray([float(s)]))
        return Pose(float(xs[0]), float(ys[0]), float(ths[0]))

    def end_pose(self) -> Pose:
        return self.pose_at(self.length)


def _no_loop(big_a: float, delta: float, phi0: float) -> bool:
    """True when the interior heading never exceeds pi away from the chord."""
    if big_a == 0.0:
        return True
    tau_star = (big_a - delta) / (2.0 * big_a)
    if not 0.0 < tau_star < 1.0:
        return True
    q = phi0 + (delta - big_a) * tau_star + big_a * tau_star**2
    return abs(q) <= math.pi + 1e-9


def _root_valid(big_a: float, delta: float, phi0: float) -> bool:
    x0, _ = _phase_integrals(2.0 * big_a, delta - big_a, phi0)
    return float(x0) > 1e-9 and _no_loop(big_a, delta, phi0)


def _solve_flattening(phi0: float, phi1: float) -> float:
    """Solve Y(2A, delta - A, phi0) = 0 for the no-loop branch.

    A controls how the heading bows away from the straight interpolation
    between the end deviations; the linearised solution 3*(phi0 + phi1) is
    exact for straight lines and circular arcs and an excellent Newton seed
    otherwise.
    """
    delta = phi1 - phi0
    big_a = 3.0 * (phi0 + phi1)
    iterations = 0

    for _ in range(32):
        iterations += 1
        x0, y0, x1, x2 = _phase_integrals(2.0 * big_a, delta - big_a, phi0, tau_moments=True)
        g = float(y0)
        if abs(g) < FIT_RESIDUAL_TOL and float(x0) > 1e-9 and _no_loop(big_a, delta, phi0):
            return big_a
        dg = float(x2 - x1)
        if dg == 0.0 or not math.isfinite(dg):
            break
        step = g / dg
        if not math.isfinite(step) or abs(step) > 100.0:
            break
        big_a -= step
        if abs(step) < 1e-15 * max(1.0, abs(big_a)):
            if abs(g) < 1e-9 and _root_valid(big_a, delta, phi0):
                return big_a
            break

    # Bisection fallback around the linearised seed: scan outward for a sign
    # change bracketing a valid root, then bisect.
    seed = 3.0 * (phi0 + phi1)
    best_residual = math.inf
    for radius in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0):
        grid = seed + np.linspace(-radius, radius, 129)
        _, gy = _phase_integrals(2.0 * grid, delta - grid, np.full_like(grid, phi0))
        best_residual = min(best_residual, float(np.min(np.abs(gy))))
        signs = np.sign(gy)
        change = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
        order = np.argsort(np.abs(grid[change] - seed))
        for idx in change[order]:
            lo, hi = float(grid[idx]), float(grid[idx + 1])
            glo = float(gy[idx])
            for _ in range(MAX_FIT_ITERATIONS):
                iterations += 1
                mid = 0.5 * (lo + hi)
                _, gm = _phase_integrals(2.0 * mid, delta - mid, phi0)
                gm = float(gm)
                if abs(gm) < FIT_RESIDUAL_TOL or hi - lo < 1e-14 * max(1.0, abs(mid)):
                    if _root_valid(mid, delta, phi0):
                        return mid
                    break
                if glo * gm < 0:
                    hi = mid
                else:
                    lo, glo = mid, gm
            if iterations >= MAX_FIT_ITERATIONS:
                break
        if iterations >= MAX_FIT_ITERATIONS:
            break
    raise FitConvergenceError(
        f"G1 root search did not converge (phi0={phi0:.6f}, phi1={phi1:.6f}, "
        f"best residual {best_residual:.3e})",
        residual=best_residual,
    )


def fit_g1(start: Pose, end: Pose) -> ClothoidSegment:
    """Fit one Euler curve through two poses, matching positions and headings.

    The three unknowns (initial curvature, curvature rate, length) are fixed
    by the endpoint constraints after normalising to the chord frame.
    """
    dx = end.x - start.x
    dy = end.y - start.y
    chord = math.hypot(dx, dy)
    if chord < MIN_CHORD_M:
        raise DegenerateFitError(f"endpoints are coincident (chord {chord:.2e} m)")
    phi = math.atan2(dy, dx)
    phi0 = wrap_angle(start.theta - phi)
    phi1 = wrap_angle(end.theta - phi)
    delta = phi1 - phi0

    big_a = _solve_flattening(phi0, phi1)
    x0, _ = _phase_integrals(2.0 * big_a, delta - big_a, phi0)
    x0 = float(x0)
    if x0 <= 1e-9:
        raise FitConvergenceError(
            f"degenerate chord projection (phi0={phi0:.6f}, phi1={phi1:.6f})"
        )
    length = chord / x0
    return ClothoidSegment(
        start=start,
        kappa0=(delta - big_a) / length,
        kappa_rate=2.0 * big_a / length**2,
        length=length,
    )


_JOINT_POSITION_TOL = 1e-6
_JOINT_HEADING_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class CompositePath:
    """Chain of Euler curves with G1 continuity at the joints."""

    segments: tuple[ClothoidSegment, ...]

    def __post_init__(self):
        segments = tuple(self.segments)
        if not segments:
            raise ValueError("composite path needs at least one segment")
        object.__setattr__(self, "segments", segments)
        for i in range(len(segments) - 1):
            end = segments[i].end_pose()
            nxt = segments[i + 1].start
            gap = math.hypot(end.x - nxt.x, end.y - nxt.y)
            dth = abs(wrap_angle(end.theta - nxt.theta))
            if gap > _JOINT_POSITION_TOL or dth > _JOINT_HEADING_TOL:
                raise ValueError(
                    f"joint {i} breaks G1 continuity (gap {gap:.3e} m, heading {dth:.3e} rad)"
                )
        bounds = np.concatenate(([0.0], np.cumsum([seg.length for seg in segments])))
        bounds.setflags(write=False)
        object.__setattr__(self, "_bounds", bounds)

    @property
    def length(self) -> float:
        return float(self._bounds[-1])

    def locate(self, s: float) -> tuple[int, float]:
        if s < -1e-9 or s > self.length + 1e-9:
            raise ValueError(f"arc length {s} outside [0, {self.length}]")
        i = int(np.searchsorted(self._bounds, s, side="right")) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return i, min(max(s - self._bounds[i], 0.0), self.segments[i].length)

    def pose_at(self, s: float) -> Pose:
        i, local = self.locate(s)
        return self.segments[i].pose_at(local)

    def curvature_at(self, s: float) -> float:
        i, local = self.locate(s)
        return float(self.segments[i].curvature_at(local))

    def sample(self, stations) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Positions and headings at the given path arc lengths."""
        stations = np.asarray(stations, dtype=float)
        xs = np.empty_like(stations)
        ys = np.empty_like(stations)
        ths = np.empty_like(stations)
        idx = np.clip(np.searchsorted(self._bounds, stations, side="right") - 1, 0, len(self.segments) - 1)
        for i in np.unique(idx):
            seg = self.segments[i]
            mask = idx == i
            local = np.clip(stations[mask] - self._bounds[i], 0.0, seg.length)
            xs[mask], ys[mask], ths[mask] = seg.sample(local)
        return xs, ys, ths


def fit_composite(node_poses) -> CompositePath:
    """Fit one Euler curve between each consecutive pose pair."""
    poses = list(node_poses)
    if len(poses) < 2:
        raise ValueError("need at least two node poses")
    segments = []
    for i, (a, b) in enumerate(zip(poses[:-1], poses[1:])):
        try:
            segments.append(fit_g1(a, b))
        except FitError as exc:
            raise type(exc)(f"segment {i}: {exc}") from exc
    return CompositePath(segments=tuple(segments))


def curvature_profile(path: CompositePath, step: float) -> np.ndarray:
    """Sample kappa(s) over the whole path; returns an (n, 2) array of (s, kappa)."""
    if not step > 0:
        raise ValueError("step must be positive")
    n = max(1, int(math.ceil(path.length / step)))
    stations = np.linspace(0.0, path.length, n + 1)
    idx = np.clip(np.searchsorted(path._bounds, stations, side="right") - 1, 0, len(path.segments) - 1)
    kappas = np.empty_like(stations)
    for i in np.unique(idx):
        seg = path.segments[i]
        mask = idx == i
        local = np.clip(stations[mask] - path._bounds[i], 0.0, seg.length)
        kappas[mask] = seg.curvature_at(local)
    return np.column_stack((stations, kappas))
