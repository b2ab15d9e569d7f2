"""One planning cycle: node points, subsection curvatures, offsets, path fit.

Three node points are nominated on the midline at increasing preview
distances. The average road curvature over the three subsections between
the planning origin and the node points feeds a linear gain matrix that
yields a lateral offset per node point. The offset node poses are then
joined by Euler curves into the planned path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .clothoid import CompositePath, fit_composite
from .road import Corridor, PlanningFrame, Pose, offset_point, to_planning_frame

logger = logging.getLogger(__name__)

MAX_PREVIEW_M = 250.0
DEFAULT_NODE_DISTANCES = (10.0, 39.0, 137.0)
DEFAULT_RETRIGGER_CYCLES = 30


class InsufficientPreviewError(ValueError):
    """The corridor does not reach the far node point."""


@dataclass(frozen=True)
class NodePointParams:
    """Near/mid/far node point distances in metres of midline arc length."""

    d_near: float = DEFAULT_NODE_DISTANCES[0]
    d_mid: float = DEFAULT_NODE_DISTANCES[1]
    d_far: float = DEFAULT_NODE_DISTANCES[2]

    def __post_init__(self):
        if not (0.0 < self.d_near < self.d_mid < self.d_far <= MAX_PREVIEW_M):
            raise ValueError(
                f"node distances must satisfy 0 < near < mid < far <= {MAX_PREVIEW_M}, "
                f"got ({self.d_near}, {self.d_mid}, {self.d_far})"
            )

    @property
    def distances(self) -> tuple[float, float, float]:
        return (self.d_near, self.d_mid, self.d_far)


@dataclass(frozen=True, eq=False)
class GainMatrix:
    """3x3 gain matrix mapping subsection curvatures to node point offsets."""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.shape != (3, 3):
            raise ValueError(f"gain matrix must be 3x3, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("gain matrix entries must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def zeros(cls) -> "GainMatrix":
        return cls(np.zeros((3, 3)))

    @classmethod
    def diagonal(cls, g_near: float, g_mid: float, g_far: float) -> "GainMatrix":
        return cls(np.diag([g_near, g_mid, g_far]))

    @classmethod
    def from_row_major(cls, values) -> "GainMatrix":
        return cls(np.asarray(values, dtype=float).reshape(3, 3))

    def row_major(self) -> list[float]:
        return [float(v) for v in self.p.ravel()]


@dataclass(frozen=True)
class CurvatureInput:
    """Average curvature over the origin-near, near-mid and mid-far subsections."""

    kappa_on: float
    kappa_nm: float
    kappa_mf: float

    def as_array(self) -> np.ndarray:
        return np.array([self.kappa_on, self.kappa_nm, self.kappa_mf])


@dataclass(frozen=True)
class OffsetVector:
    """Lateral offsets at the near, mid and far node points, positive left."""

    delta_near: float
    delta_mid: float
    delta_far: float

    def as_array(self) -> np.ndarray:
        return np.array([self.delta_near, self.delta_mid, self.delta_far])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.as_array())))


@dataclass(frozen=True, eq=False)
class PlannedPath:
    """Planned path with the poses it interpolates, expressed in its frame."""

    path: CompositePath
    node_poses: tuple[Pose, Pose, Pose, Pose]
    frame: PlanningFrame


def select_node_points(
    corridor: Corridor, params: NodePointParams
) -> tuple[tuple[Pose, Pose, Pose], tuple[float, float, float]]:
    """Nominate the midline poses at the near/mid/far arc lengths."""
    if corridor.length + 1e-9 < params.d_far:
        raise InsufficientPreviewError(
            f"corridor length {corridor.length:.2f} m is shorter than the far "
            f"node distance {params.d_far:.2f} m"
        )
    poses = tuple(corridor.pose_at(d) for d in params.distances)
    return poses, params.distances


def average_curvatures(corridor: Corridor, node_arclengths) -> CurvatureInput:
    """Arc-length mean curvature per subsection, computed as heading change
    over arc length (exact for the integral mean)."""
    d_near, d_mid, d_far = node_arclengths
    if d_far > corridor.length + 1e-9:
        raise InsufficientPreviewError(
            f"node arc length {d_far:.2f} m beyond corridor ({corridor.length:.2f} m)"
        )
    bounds = np.array([0.0, d_near, d_mid, d_far])
    headings = corridor.heading_unwrapped_at(bounds)
    means = np.diff(headings) / np.diff(bounds)
    return CurvatureInput(*(float(v) for v in means))


def compute_offsets(gains: GainMatrix, kappas: CurvatureInput) -> OffsetVector:
    """Linear offset model: node offsets are the gain matrix times the
    subsection curvature vector."""
    deltas = gains.p @ kappas.as_array()
    return OffsetVector(*(float(v) for v in deltas))


def plan_path_from_offsets(
    corridor: Corridor,
    offsets: OffsetVector,
    params: NodePointParams,
    frame: PlanningFrame,
    origin_heading: str = "vehicle",
) -> PlannedPath:
    """Fit the three-piece Euler path through explicitly given node offsets.

    The corridor and frame origin must share one coordinate frame; the
    returned path is expressed in the planning frame. The first curve starts
    at the frame origin, by default with the vehicle heading (set
    origin_heading="road" to use the road heading at the corridor start).
    """
    nominal, _ = select_node_points(corridor, params)
    if origin_heading == "vehicle":
        origin = frame.origin
    elif origin_heading == "road":
        at_start = corridor.pose_at(0.0)
        origin = Pose(frame.origin.x, frame.origin.y, at_start.theta)
    else:
        raise ValueError(f"unknown origin_heading {origin_heading!r}")

    if offsets.max_abs() >= 0.5 * corridor.lane_width:
        logger.warning(
            "node offset %.3f m reaches half the lane width (%.2f m)",
            offsets.max_abs(),
            corridor.lane_width,
        )

    node_poses = tuple(
        offset_point(pose, delta)
        for pose, delta in zip(nominal, offsets.as_array())
    )
    path_global = fit_composite((origin, *node_poses))
    segments_local = tuple(
        type(seg)(
            start=to_planning_frame(seg.start, frame),
            kappa0=seg.kappa0,
            kappa_rate=seg.kappa_rate,
            length=seg.length,
        )
        for seg in path_global.segments
    )
    poses_local = tuple(to_planning_frame(p, frame) for p in (origin, *node_poses))
    return PlannedPath(
        path=CompositePath(segments=segments_local),
        node_poses=poses_local,
        frame=frame,
    )


def plan_path(
    corridor: Corridor,
    gains: GainMatrix,
    params: NodePointParams,
    frame: PlanningFrame,
    origin_heading: str = "vehicle",
) -> PlannedPath:
    """One full planning cycle: curvature input, linear offsets, path fit."""
    _, arclengths = select_node_points(corridor, params)
    kappas = average_curvatures(corridor, arclengths)
    offsets = compute_offsets(gains, kappas)
    return plan_path_from_offsets(corridor, offsets, params, frame, origin_heading)
