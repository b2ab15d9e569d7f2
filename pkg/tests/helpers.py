"""Constructors for probe drive logs used by calibration tests."""

import numpy as np

from curvepath.planner import NodePointParams, OffsetVector, PlanningFrame, plan_path_from_offsets
from curvepath.road import corridor_from_polynomial, from_planning_frame
from curvepath.simulate import DriveLog, fit_lane_polynomial, offset_pose_on

ZIGZAG_PATTERNS = (
    (0.45, -0.40, 0.50),
    (-0.40, 0.45, -0.45),
    (0.50, -0.45, 0.40),
    (-0.45, 0.40, -0.50),
)


def build_chained_node_log(
    road,
    params: NodePointParams,
    patterns=ZIGZAG_PATTERNS,
    n_blocks: int = 8,
    block_rows: int = 109,
    speed: float = 25.0,
    sample_time: float = 0.05,
    preview: float = 140.0,
) -> DriveLog:
    """Drive log whose path is a chain of full three-piece plans.

    Each block follows one composite fitted through alternating-sign node
    offsets at the given node distances, so the recorded path carries
    curvature-rate breaks exactly at those distances; the next plan starts
    where the previous one ends. This makes the node distances sharply
    identifiable from the log alone.
    """
    step = speed * sample_time
    rows = {k: [] for k in ("t", "x", "y", "theta", "speed", "c0", "c1", "c2", "c3", "lane_width")}
    cycles = []
    station = 0.0
    pose = offset_pose_on(road, 0.0, 0.0, 0.0)
    i = 0
    for b in range(n_blocks):
        poly = fit_lane_polynomial(road, pose, station=station, preview=preview)
        corr = corridor_from_polynomial(poly, lane_width=road.lane_width).transformed(pose)
        offsets = OffsetVector(*patterns[b % len(patterns)])
        plan = plan_path_from_offsets(corr, offsets, params, PlanningFrame(origin=pose))
        for j in range(block_rows):
            ego = from_planning_frame(plan.path.pose_at(j * step), plan.frame)
            st, off = road.project(ego.x, ego.y)
            p = poly if j == 0 else fit_lane_polynomial(
                road, ego, station=st, preview=preview, anchor_c0=-off
            )
            cycles.append(i)
            rows["t"].append(i * sample_time)
            rows["x"].append(ego.x)
            rows["y"].append(ego.y)
            rows["theta"].append(ego.theta)
            rows["speed"].append(speed)
            for name, value in zip(("c0", "c1", "c2", "c3"), p.coefficients):
                rows[name].append(value)
            rows["lane_width"].append(road.lane_width)
            i += 1
        end = from_planning_frame(
            plan.path.pose_at(min(block_rows * step, plan.path.length)), plan.frame
        )
        station, _ = road.project(end.x, end.y)
        pose = end
    return DriveLog(
        cycle=np.asarray(cycles, dtype=np.int64),
        sample_time=sample_time,
        preview_length=preview,
        **{k: np.asarray(v) for k, v in rows.items()},
    )
