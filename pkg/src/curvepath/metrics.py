"""Safety and human-likeness evaluation over curve segments.

The route is split into curve segments (sustained curvature above a
threshold); safety counts corridor-border violations of the vehicle body
edges and tracks border distances, while performance measures the distance
between a planned trace and a reference trace plus the fraction of samples
on the same side of the midline. Case-study emission writes plot-ready
offset and curvature series for one segment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .road import Corridor
from .simulate import SimTrace, format_float

DEFAULT_KAPPA_THRESHOLD = 0.001
DEFAULT_MIN_CURVE_LENGTH_M = 50.0
ZERO_OFFSET_BAND_M = 0.01
DEFAULT_VEHICLE_WIDTH_M = 1.8

SAFETY_HEADER = "driver_id,border_violation_pct,min_border_distance_m"
PERFORMANCE_HEADER = "driver_id,avg_distance_m,max_distance_m,side_correctness_pct"


@dataclass(frozen=True)
class CurveSegment:
    """Arc-length interval of sustained curvature, labelled by turn direction.

    Detector output always satisfies the threshold/length rules; instances
    may also be constructed manually to define evaluation windows.
    """

    start_s: float
    end_s: float
    peak_kappa: float
    direction: str

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise ValueError("segment end must exceed start")
        if self.peak_kappa < 0:
            raise ValueError("peak curvature is a magnitude, must be >= 0")
        if self.direction not in ("left", "right"):
            raise ValueError(f"direction must be 'left' or 'right', got {self.direction!r}")

    @property
    def length(self) -> float:
        return self.end_s - self.start_s

    def contains(self, stations) -> np.ndarray:
        stations = np.asarray(stations, dtype=float)
        return (stations >= self.start_s) & (stations <= self.end_s)


@dataclass(frozen=True)
class VehicleSpec:
    """Vehicle body reduced to two side-edge points at the ego position."""

    width: float = DEFAULT_VEHICLE_WIDTH_M

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("vehicle width must be positive")


@dataclass(frozen=True, eq=False)
class SafetyReport:
    border_violation_ratio: float
    min_border_distance: float
    per_segment_min: tuple[float, ...]
    violations: int
    samples: int


@dataclass(frozen=True)
class PerformanceReport:
    avg_distance: float
    max_distance: float
    side_correctness: float


def detect_curve_segments(
    corridor: Corridor,
    kappa_threshold: float = DEFAULT_KAPPA_THRESHOLD,
    min_length: float = DEFAULT_MIN_CURVE_LENGTH_M,
) -> list[CurveSegment]:
    """Maximal constant-sign runs with |kappa| >= threshold over >= min_length."""
    if not kappa_threshold > 0 or not min_length > 0:
        raise ValueError("thresholds must be positive")
    above = np.abs(corridor.kappa) >= kappa_threshold
    sign = np.sign(corridor.kappa)
    segments = []
    i = 0
    n = len(corridor)
    while i < n:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and above[j + 1] and sign[j + 1] == sign[i]:
            j += 1
        start_s = float(corridor.s[i])
        end_s = float(corridor.s[j])
        if end_s - start_s >= min_length:
            peak = float(np.max(np.abs(corridor.kappa[i : j + 1])))
            segments.append(
                CurveSegment(
                    start_s=start_s,
                    end_s=end_s,
                    peak_kappa=peak,
                    direction="left" if sign[i] > 0 else "right",
                )
            )
        i = j + 1
    return segments


def project_onto(trace: SimTrace, corridor: Corridor) -> SimTrace:
    """Trace with station and offset recomputed against an evaluation corridor.

    Projects every trace point onto the corridor midline (nearest polyline
    segment); the returned offset is the signed perpendicular distance,
    positive left.
    """
    pts = np.column_stack((trace.x, trace.y))
    tree = cKDTree(np.column_stack((corridor.x, corridor.y)))
    _, nearest = tree.query(pts)
    n_samples = len(corridor)
    stations = np.empty(len(pts))
    offsets = np.empty(len(pts))
    for j, (px, py) in enumerate(pts):
        best = None
        i = int(nearest[j])
        for a in (i - 1, i):
            if a < 0 or a + 1 >= n_samples:
                continue
            ax, ay = corridor.x[a], corridor.y[a]
            vx, vy = corridor.x[a + 1] - ax, corridor.y[a + 1] - ay
            seg2 = vx * vx + vy * vy
            t = min(1.0, max(0.0, ((px - ax) * vx + (py - ay) * vy) / seg2))
            cx, cy = ax + t * vx, ay + t * vy
            d2 = (px - cx) ** 2 + (py - cy) ** 2
            if best is None or d2 < best[0]:
                cross = (vx * (py - ay) - vy * (px - ax)) / math.sqrt(seg2)
                best = (
                    d2,
                    corridor.s[a] + t * (corridor.s[a + 1] - corridor.s[a]),
                    math.copysign(math.sqrt(d2), cross),
                )
        stations[j] = best[1]
        offsets[j] = best[2]
    return replace(trace, station=stations, offset=offsets)


def _require_stations(trace: SimTrace, name: str) -> None:
    if np.any(np.isnan(trace.station)):
        raise ValueError(f"{name} trace has no stations; run project_onto(trace, corridor) first")


def safety_metrics(
    trace: SimTrace,
    corridor: Corridor,
    vehicle: VehicleSpec,
    segments,
) -> SafetyReport:
    """Border-violation ratio over the whole trace plus border distances.

    A sample violates when a vehicle side edge leaves the lane; the border
    distance is the remaining margin of the nearer edge, clamped at zero.
    Minima are reported per curve segment, the headline minimum is the
    route-wide worst case.
    """
    if not vehicle.width < corridor.lane_width:
        raise ValueError(
            f"vehicle width {vehicle.width} m must be below lane width {corridor.lane_width} m"
        )
    projected = trace if not np.any(np.isnan(trace.station)) else project_onto(trace, corridor)
    margin = 0.5 * corridor.lane_width - (np.abs(projected.offset) + 0.5 * vehicle.width)
    violating = margin < 0.0
    border = np.maximum(margin, 0.0)
    per_segment = []
    for seg in segments:
        mask = seg.contains(projected.station)
        per_segment.append(float(border[mask].min()) if np.any(mask) else math.inf)
    return SafetyReport(
        border_violation_ratio=float(np.mean(violating)),
        min_border_distance=float(border.min()),
        per_segment_min=tuple(per_segment),
        violations=int(np.sum(violating)),
        samples=int(violating.size),
    )


def performance_metrics(planned: SimTrace, human: SimTrace, segments) -> PerformanceReport:
    """Distance between traces and side correctness, within curve segments only.

    Distances are point-to-nearest-point between the two traces restricted
    to the segments. Side correctness pairs samples by cycle; two offsets
    match when they share a sign or both sit inside the zero band.
    """
    segments = list(segments)
    if not segments:
        raise ValueError("no curve segments given")
    _require_stations(planned, "planned")
    _require_stations(human, "human")

    def in_segments(trace: SimTrace) -> np.ndarray:
        mask = np.zeros(len(trace), dtype=bool)
        for seg in segments:
            mask |= seg.contains(trace.station)
        return mask

    planned_mask = in_segments(planned)
    human_mask = in_segments(human)
    if not np.any(planned_mask) or not np.any(human_mask):
        raise ValueError("traces do not overlap the curve segments")

    p_pts = np.column_stack((planned.x[planned_mask], planned.y[planned_mask]))
    h_pts = np.column_stack((human.x[human_mask], human.y[human_mask]))
    dists, _ = cKDTree(h_pts).query(p_pts)

    common = np.intersect1d(planned.cycle[planned_mask], human.cycle[human_mask])
    p_idx = np.searchsorted(planned.cycle, common)
    h_idx = np.searchsorted(human.cycle, common)
    p_off = planned.offset[p_idx]
    h_off = human.offset[h_idx]
    both_zero = (np.abs(p_off) < ZERO_OFFSET_BAND_M) & (np.abs(h_off) < ZERO_OFFSET_BAND_M)
    matching = both_zero | (np.sign(p_off) == np.sign(h_off))
    side = float(np.mean(matching)) if matching.size else 0.0

    return PerformanceReport(
        avg_distance=float(np.mean(dists)),
        max_distance=float(np.max(dists)),
        side_correctness=side,
    )


def emit_case_study(
    trace: SimTrace,
    human: SimTrace,
    corridor: Corridor,
    segment: CurveSegment,
    offsets_path,
    curvature_path,
    margin: float = 60.0,
) -> tuple[str, str]:
    """Write offset and curvature series around one curve segment.

    The offsets file holds (s, planned, ref); the curvature file holds
    (s, planned, ref, corridor, planned minus corridor). The window extends
    `margin` metres beyond the segment so lead-in behaviour is visible.
    """
    _require_stations(trace, "planned")
    _require_stations(human, "human")
    lo = max(0.0, segment.start_s - margin)
    hi = min(corridor.length, segment.end_s + margin)
    mask = (trace.station >= lo) & (trace.station <= hi)
    if not np.any(mask):
        raise ValueError("planned trace does not cover the segment window")
    order = np.argsort(trace.station[mask])
    s_grid = trace.station[mask][order]
    off_planned = trace.offset[mask][order]
    kap_planned = trace.kappa[mask][order]

    h_order = np.argsort(human.station)
    h_station = human.station[h_order]
    off_ref = np.interp(s_grid, h_station, human.offset[h_order])
    kap_ref = np.interp(s_grid, h_station, human.kappa[h_order])
    kap_corridor = corridor.kappa_at(s_grid)

    with open(offsets_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("s,offset_planned,offset_ref\n")
        for s, a, b in zip(s_grid, off_planned, off_ref):
            fh.write(f"{format_float(s)},{format_float(a)},{format_float(b)}\n")
    with open(curvature_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("s,kappa_planned,kappa_ref,kappa_corridor,kappa_diff\n")
        for s, a, b, c in zip(s_grid, kap_planned, kap_ref, kap_corridor):
            fh.write(
                f"{format_float(s)},{format_float(a)},{format_float(b)},"
                f"{format_float(c)},{format_float(a - c)}\n"
            )
    return str(offsets_path), str(curvature_path)


# --------------------------------------------------------------------------
# Cohort reports


def write_safety_report(rows, csv_path, json_path=None) -> None:
    """rows: iterable of (driver_id, SafetyReport)."""
    entries = []
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SAFETY_HEADER + "\n")
        for driver_id, report in rows:
            pct = 100.0 * report.border_violation_ratio
            fh.write(f"{driver_id},{format_float(pct)},{format_float(report.min_border_distance)}\n")
            entries.append(
                {
                    "driver_id": driver_id,
                    "border_violation_pct": pct,
                    "min_border_distance_m": report.min_border_distance,
                }
            )
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(entries, fh, indent=2, sort_keys=True)
            fh.write("\n")


def write_performance_report(rows, csv_path, json_path=None) -> None:
    """rows: iterable of (driver_id, PerformanceReport)."""
    entries = []
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(PERFORMANCE_HEADER + "\n")
        for driver_id, report in rows:
            pct = 100.0 * report.side_correctness
            fh.write(
                f"{driver_id},{format_float(report.avg_distance)},"
                f"{format_float(report.max_distance)},{format_float(pct)}\n"
            )
            entries.append(
                {
                    "driver_id": driver_id,
                    "avg_distance_m": report.avg_distance,
                    "max_distance_m": report.max_distance,
                    "side_correctness_pct": pct,
                }
            )
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(entries, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_safety_report(csv_path) -> list[dict]:
    with open(csv_path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != SAFETY_HEADER:
        raise ValueError(f"{csv_path}: bad safety report header")
    out = []
    for line in lines[1:]:
        d, pct, dist = line.split(",")
        out.append(
            {
                "driver_id": d,
                "border_violation_pct": float(pct),
                "min_border_distance_m": float(dist),
            }
        )
    return out


def read_performance_report(csv_path) -> list[dict]:
    with open(csv_path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != PERFORMANCE_HEADER:
        raise ValueError(f"{csv_path}: bad performance report header")
    out = []
    for line in lines[1:]:
        d, avg, mx, side = line.split(",")
        out.append(
            {
                "driver_id": d,
                "avg_distance_m": float(avg),
                "max_distance_m": float(mx),
                "side_correctness_pct": float(side),
            }
        )
    return out
