"""Drive logs, scenario roads, synthetic drivers and the cyclic replay loop.

A drive log is a fixed-rate time series of ego state plus the lane
polynomial the perception stack reported in that cycle. The replay loop
re-plans every `retrigger` cycles and follows the previously planned path
in between, either with offsets produced by the gain matrix (validation
mode) or with offsets read back from the recorded drive (estimation mode).

Synthetic drive logs are generated from a ground-truth gain matrix: at each
replanning instant the driver commits the model offsets (plus optional
noise) as waypoints of its lateral offset profile, and the logged lane
polynomial anchors its intercept to the exact perpendicular midline offset.
That makes the perception channel bias-free, so calibrating on a noise-free
synthetic log recovers the generating gain matrix to numerical precision.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass

import numpy as np

from .clothoid import FitError
from .planner import (
    DEFAULT_RETRIGGER_CYCLES,
    CurvatureInput,
    GainMatrix,
    InsufficientPreviewError,
    NodePointParams,
    OffsetVector,
    PlannedPath,
    average_curvatures,
    compute_offsets,
    plan_path_from_offsets,
)
from .road import (
    DEFAULT_CORRIDOR_STEP_M,
    DEFAULT_LANE_WIDTH_M,
    DEFAULT_PREVIEW_M,
    Corridor,
    LanePolynomial,
    PlanningFrame,
    Pose,
    corridor_from_polynomial,
    from_planning_frame,
)

DEFAULT_SAMPLE_TIME_S = 0.05
DEFAULT_SPEED_MPS = 25.0

LOG_HEADER = "cycle,t,x,y,theta,speed,c0,c1,c2,c3,lane_width"
TRACE_HEADER = "cycle,x,y,theta,offset,path_id"


class LogFormatError(ValueError):
    """Drive log file does not match the CSV schema."""


class ReplayError(RuntimeError):
    """Replay could not produce any valid plan."""


def format_float(value: float) -> str:
    """Fixed-notation float with at least 9 fractional digits, exact round trip."""
    return np.format_float_positional(float(value), unique=True, min_digits=9)


@dataclass(eq=False)
class DriveLog:
    """Columnar drive log: one row per perception cycle."""

    cycle: np.ndarray
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    speed: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    lane_width: np.ndarray
    sample_time: float = DEFAULT_SAMPLE_TIME_S
    preview_length: float = DEFAULT_PREVIEW_M

    _FLOAT_COLUMNS = ("t", "x", "y", "theta", "speed", "c0", "c1", "c2", "c3", "lane_width")

    def __post_init__(self):
        cycles = np.ascontiguousarray(self.cycle, dtype=np.int64)
        object.__setattr__(self, "cycle", cycles)
        n = cycles.size
        if n < 1:
            raise ValueError("drive log must contain at least one record")
        if n > 1 and not np.all(np.diff(cycles) == 1):
            raise ValueError("cycle indices must be contiguous")
        for name in self._FLOAT_COLUMNS:
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"column {name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"column {name} contains non-finite values")
            setattr(self, name, arr)
        if not self.sample_time > 0:
            raise ValueError("sample_time must be positive")
        if np.any(self.speed < 0):
            raise ValueError("speed must be non-negative")
        if np.any(self.lane_width <= 0):
            raise ValueError("lane_width must be positive")

    def __len__(self) -> int:
        return int(self.cycle.size)

    def pose(self, i: int) -> Pose:
        return Pose(float(self.x[i]), float(self.y[i]), float(self.theta[i]))

    def polynomial(self, i: int) -> LanePolynomial:
        return LanePolynomial(
            float(self.c0[i]),
            float(self.c1[i]),
            float(self.c2[i]),
            float(self.c3[i]),
            preview_length=self.preview_length,
        )

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(LOG_HEADER + "\n")
            for i in range(len(self)):
                fields = [str(int(self.cycle[i]))]
                fields += [format_float(getattr(self, name)[i]) for name in self._FLOAT_COLUMNS]
                fh.write(",".join(fields) + "\n")


def load_drive_log(path) -> DriveLog:
    """Parse and validate a drive log CSV."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != LOG_HEADER:
        raise LogFormatError(f"{path}: missing or malformed header (expected '{LOG_HEADER}')")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 11:
            raise LogFormatError(f"{path}: line {lineno}: expected 11 columns, got {len(parts)}")
        try:
            rows.append([int(parts[0])] + [float(p) for p in parts[1:]])
        except ValueError as exc:
            raise LogFormatError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        raise LogFormatError(f"{path}: empty log (no data rows)")
    data = np.asarray(rows, dtype=float)
    if data.shape[0] >= 2:
        sample_time = float(round(float(np.median(np.diff(data[:, 1]))), 9))
        if not sample_time > 0:
            raise LogFormatError(f"{path}: non-increasing timestamps")
    else:
        sample_time = DEFAULT_SAMPLE_TIME_S
    return DriveLog(
        cycle=data[:, 0].astype(np.int64),
        t=data[:, 1],
        x=data[:, 2],
        y=data[:, 3],
        theta=data[:, 4],
        speed=data[:, 5],
        c0=data[:, 6],
        c1=data[:, 7],
        c2=data[:, 8],
        c3=data[:, 9],
        lane_width=data[:, 10],
        sample_time=sample_time,
    )


# --------------------------------------------------------------------------
# Scenario roads


_SEGMENT_KINDS = ("straight", "arc", "clothoid-transition")


@dataclass(frozen=True)
class RoadSegmentSpec:
    """One scenario road piece with affine curvature."""

    kind: str
    length: float
    kappa_start: float = 0.0
    kappa_end: float = 0.0

    def __post_init__(self):
        if self.kind not in _SEGMENT_KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not self.length > 0:
            raise ValueError("segment length must be positive")
        if self.kind == "straight" and (self.kappa_start != 0.0 or self.kappa_end != 0.0):
            raise ValueError("straight segments must have zero curvature")
        if self.kind == "arc" and self.kappa_start != self.kappa_end:
            raise ValueError("arc segments must have constant curvature")

    @classmethod
    def straight(cls, length: float) -> "RoadSegmentSpec":
        return cls("straight", length)

    @classmethod
    def arc(cls, length: float, kappa: float) -> "RoadSegmentSpec":
        return cls("arc", length, kappa, kappa)

    @classmethod
    def transition(cls, length: float, kappa_start: float, kappa_end: float) -> "RoadSegmentSpec":
        return cls("clothoid-transition", length, kappa_start, kappa_end)

    @classmethod
    def from_dict(cls, d: dict) -> "RoadSegmentSpec":
        kind = d["kind"]
        if kind == "straight":
            return cls.straight(float(d["length"]))
        if kind == "arc":
            return cls.arc(float(d["length"]), float(d["kappa"]))
        if kind == "clothoid-transition":
            return cls.transition(float(d["length"]), float(d["kappa_start"]), float(d["kappa_end"]))
        raise ValueError(f"unknown segment kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "straight":
            return {"kind": self.kind, "length": self.length}
        if self.kind == "arc":
            return {"kind": self.kind, "length": self.length, "kappa": self.kappa_start}
        return {
            "kind": self.kind,
            "length": self.length,
            "kappa_start": self.kappa_start,
            "kappa_end": self.kappa_end,
        }


@dataclass(frozen=True)
class ScenarioSpec:
    """Ordered road segments plus lane width and nominal speed."""

    segments: tuple[RoadSegmentSpec, ...]
    lane_width: float = DEFAULT_LANE_WIDTH_M
    speed: float = DEFAULT_SPEED_MPS

    def __post_init__(self):
        segments = tuple(self.segments)
        if not segments:
            raise ValueError("scenario needs at least one segment")
        object.__setattr__(self, "segments", segments)
        if not self.lane_width > 0:
            raise ValueError("lane_width must be positive")
        if not self.speed > 0:
            raise ValueError("speed must be positive")
        for i, seg in enumerate(segments):
            if seg.kind != "clothoid-transition":
                continue
            if i > 0 and abs(segments[i - 1].kappa_end - seg.kappa_start) > 1e-12:
                raise ValueError(f"segment {i}: transition start curvature discontinuous")
            if i + 1 < len(segments) and abs(seg.kappa_end - segments[i + 1].kappa_start) > 1e-12:
                raise ValueError(f"segment {i}: transition end curvature discontinuous")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        return cls(
            segments=tuple(RoadSegmentSpec.from_dict(s) for s in d["segments"]),
            lane_width=float(d.get("lane_width", DEFAULT_LANE_WIDTH_M)),
            speed=float(d.get("speed", DEFAULT_SPEED_MPS)),
        )

    def to_dict(self) -> dict:
        return {
            "segments": [s.to_dict() for s in self.segments],
            "lane_width": self.lane_width,
            "speed": self.speed,
        }


def build_scenario_road(spec: ScenarioSpec, step: float = DEFAULT_CORRIDOR_STEP_M) -> Corridor:
    """Concatenate scenario segments into a global corridor.

    Positions come from the exact Euler-curve integral of each segment, so
    heading and curvature channels are consistent to quadrature accuracy.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    from .clothoid import ClothoidSegment

    x, y, theta_u = 0.0, 0.0, 0.0
    s_base = 0.0
    s_out = [0.0]
    x_out = [0.0]
    y_out = [0.0]
    th_out = [0.0]
    k_out = [spec.segments[0].kappa_start]
    for seg in spec.segments:
        rate = (seg.kappa_end - seg.kappa_start) / seg.length
        curve = ClothoidSegment(
            start=Pose(x, y, theta_u),
            kappa0=seg.kappa_start,
            kappa_rate=rate,
            length=seg.length,
        )
        n = max(1, int(math.ceil(seg.length / step)))
        local = np.linspace(0.0, seg.length, n + 1)
        xs, ys, _ = curve.sample(local)
        ths = theta_u + seg.kappa_start * local + 0.5 * rate * local**2
        ks = seg.kappa_start + rate * local
        s_out.extend((s_base + local[1:]).tolist())
        x_out.extend(xs[1:].tolist())
        y_out.extend(ys[1:].tolist())
        th_out.extend(ths[1:].tolist())
        k_out.extend(ks[1:].tolist())
        s_base += seg.length
        x, y = float(xs[-1]), float(ys[-1])
        theta_u = float(ths[-1])
    return Corridor(
        s=np.asarray(s_out),
        x=np.asarray(x_out),
        y=np.asarray(y_out),
        theta=np.asarray(th_out),
        kappa=np.asarray(k_out),
        lane_width=spec.lane_width,
    )


def s_curve_scenario(
    kappa: float = 0.0045,
    arc_length: float = 50.0,
    transition_length: float = 120.0,
    approach: float = 250.0,
    lane_width: float = DEFAULT_LANE_WIDTH_M,
    speed: float = DEFAULT_SPEED_MPS,
) -> ScenarioSpec:
    """Left-then-right S combination with clothoid transitions.

    Defaults give a compact S whose lateral acceleration stays plausible at
    the nominal speed, with the curve rolling from left to right without a
    steady-state plateau."""
    return ScenarioSpec(
        segments=(
            RoadSegmentSpec.straight(approach),
            RoadSegmentSpec.transition(transition_length, 0.0, kappa),
            RoadSegmentSpec.arc(arc_length, kappa),
            RoadSegmentSpec.transition(2.0 * transition_length, kappa, -kappa),
            RoadSegmentSpec.arc(arc_length, -kappa),
            RoadSegmentSpec.transition(transition_length, -kappa, 0.0),
            RoadSegmentSpec.straight(approach),
        ),
        lane_width=lane_width,
        speed=speed,
    )


_WINDING_CURVATURES = (0.004, -0.006, 0.008, -0.003, 0.005, -0.008, 0.0035, -0.0045)


def winding_scenario(
    n_curves: int = 8,
    lane_width: float = DEFAULT_LANE_WIDTH_M,
    speed: float = DEFAULT_SPEED_MPS,
) -> ScenarioSpec:
    """Alternating curves of varied radius; rich excitation for calibration."""
    segments = [RoadSegmentSpec.straight(200.0)]
    for i in range(n_curves):
        kappa = _WINDING_CURVATURES[i % len(_WINDING_CURVATURES)]
        arc = 150.0 + 40.0 * (i % 3)
        segments.append(RoadSegmentSpec.transition(60.0, 0.0, kappa))
        segments.append(RoadSegmentSpec.arc(arc, kappa))
        segments.append(RoadSegmentSpec.transition(60.0, kappa, 0.0))
        segments.append(RoadSegmentSpec.straight(80.0 + 30.0 * (i % 2)))
    return ScenarioSpec(segments=tuple(segments), lane_width=lane_width, speed=speed)


# --------------------------------------------------------------------------
# Synthetic drivers


@dataclass(frozen=True)
class SyntheticDriverSpec:
    """Ground-truth behaviour of a simulated driver."""

    gains_true: GainMatrix
    offset_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.offset_noise_sigma < 0:
            raise ValueError("offset noise sigma must be non-negative")


class _OffsetProfile:
    """Lateral offset over midline station, interpolated between committed
    waypoints with a C2 smoothstep (flat at each waypoint)."""

    def __init__(self):
        self._s = [0.0]
        self._v = [0.0]

    def commit(self, station: float, value: float) -> bool:
        i = bisect.bisect_left(self._s, station)
        if i < len(self._s) and abs(self._s[i] - station) < 1e-9:
            return False
        self._s.insert(i, station)
        self._v.insert(i, value)
        return True

    def eval(self, station: float) -> tuple[float, float]:
        """Offset and its station derivative."""
        i = bisect.bisect_left(self._s, station)
        if i < len(self._s) and abs(self._s[i] - station) < 1e-9:
            return self._v[i], 0.0
        if i == 0:
            return self._v[0], 0.0
        if i == len(self._s):
            return self._v[-1], 0.0
        a, b = self._s[i - 1], self._s[i]
        va, vb = self._v[i - 1], self._v[i]
        u = (station - a) / (b - a)
        blend = u**3 * (10.0 - 15.0 * u + 6.0 * u**2)
        dblend = 30.0 * u**2 * (1.0 - u) ** 2 / (b - a)
        return va + (vb - va) * blend, (vb - va) * dblend


def _midline_state(road: Corridor, station: float) -> tuple[float, float, float, float]:
    """Interpolated (x, y, theta, kappa) at a station, one binary search."""
    i = int(np.searchsorted(road.s, station, side="right")) - 1
    i = min(max(i, 0), len(road) - 2)
    t = (station - road.s[i]) / (road.s[i + 1] - road.s[i])
    t = min(max(t, 0.0), 1.0)
    return (
        float(road.x[i] + t * (road.x[i + 1] - road.x[i])),
        float(road.y[i] + t * (road.y[i + 1] - road.y[i])),
        float(road.theta[i] + t * (road.theta[i + 1] - road.theta[i])),
        float(road.kappa[i] + t * (road.kappa[i + 1] - road.kappa[i])),
    )


def offset_pose_on(road: Corridor, station: float, delta: float, delta_rate: float = 0.0) -> Pose:
    """Pose of a point riding the midline at a lateral offset.

    delta_rate is d(delta)/d(station); the heading follows the offset curve
    tangent rather than the midline tangent.
    """
    xm, ym, thm, km = _midline_state(road, station)
    heading = thm + math.atan2(delta_rate, 1.0 - km * delta)
    return Pose(xm - delta * math.sin(thm), ym + delta * math.cos(thm), heading)


# Distance weighting of the lane fit: near samples dominate, mirroring the
# falling range confidence of camera lane detection. Without it the far
# field, where a cubic cannot follow strong curves, levers the near-field
# coefficients away from the true local geometry.
_FIT_WEIGHT_SCALE_M = 50.0


def fit_lane_polynomial(
    road: Corridor,
    ego: Pose,
    station: float | None = None,
    preview: float = DEFAULT_PREVIEW_M,
    anchor_c0: float | None = None,
    anchor_c1: float | None = None,
    weight_scale: float = _FIT_WEIGHT_SCALE_M,
) -> LanePolynomial:
    """Distance-weighted cubic fit of the road midline in the ego frame.

    anchor_c0 / anchor_c1 pin the intercept and slope (a calibrated camera's
    lateral offset and relative heading outputs); the remaining coefficients
    are fitted. Pinning both keeps the near field of consecutive fits
    mutually consistent, so replayed plans do not inherit perception jitter.
    """
    if station is None:
        station, _ = road.project(ego.x, ego.y)
    i0 = int(np.searchsorted(road.s, station - 1e-9, side="left"))
    i1 = int(np.searchsorted(road.s, station + preview + 1e-9, side="right"))
    if i1 - i0 < 8:
        raise InsufficientPreviewError(
            f"only {i1 - i0} midline samples in the preview window at station {station:.1f}"
        )
    dx = road.x[i0:i1] - ego.x
    dy = road.y[i0:i1] - ego.y
    c, s = math.cos(ego.theta), math.sin(ego.theta)
    xe = c * dx + s * dy
    ye = -s * dx + c * dy
    weight = 1.0 / (1.0 + (xe / weight_scale) ** 2) ** 2
    columns = [np.ones_like(xe), xe, 0.5 * xe**2, xe**3 / 6.0]
    fixed = [anchor_c0, anchor_c1, None, None]
    free = [i for i, v in enumerate(fixed) if v is None]
    target = ye.copy()
    for i, v in enumerate(fixed):
        if v is not None:
            target -= v * columns[i]
    design = np.column_stack([columns[i] for i in free])
    solved, *_ = np.linalg.lstsq(design * weight[:, None], target * weight, rcond=None)
    coeffs = [0.0] * 4
    for i, v in enumerate(fixed):
        if v is not None:
            coeffs[i] = float(v)
    for i, v in zip(free, solved):
        coeffs[i] = float(v)
    return LanePolynomial(*coeffs, preview_length=preview)


def generate_synthetic_driver_log(
    road: Corridor,
    driver: SyntheticDriverSpec,
    params: NodePointParams | None = None,
    retrigger: int = DEFAULT_RETRIGGER_CYCLES,
    speed: float = DEFAULT_SPEED_MPS,
    sample_time: float = DEFAULT_SAMPLE_TIME_S,
    preview: float = DEFAULT_PREVIEW_M,
    corridor_step: float = DEFAULT_CORRIDOR_STEP_M,
) -> DriveLog:
    """Simulate a driver whose node offsets follow the ground-truth gains.

    The ego advances one midline station step per cycle. At each replanning
    instant the offsets produced by gains_true (plus seeded Gaussian noise)
    are committed as waypoints of the lateral offset profile at the node
    stations, rounded to the nearest whole cycle of travel so every
    committed offset is realised exactly in a logged row.
    """
    params = params or NodePointParams()
    if retrigger < 1:
        raise ValueError("retrigger must be at least 1")
    step = speed * sample_time
    if road.length < preview + step:
        raise ValueError(
            f"road length {road.length:.1f} m cannot host a {preview:.0f} m preview"
        )
    rng = np.random.default_rng(driver.seed)
    profile = _OffsetProfile()
    node_rows = [max(1, round(d / step)) for d in params.distances]
    gains = driver.gains_true.p

    rows_cycle = []
    rows = {name: [] for name in DriveLog._FLOAT_COLUMNS}
    i = 0
    while i * step + preview <= road.length + 1e-9:
        station = i * step
        delta, delta_rate = profile.eval(station)
        xm, ym, thm, km = _midline_state(road, station)
        steer = math.atan2(delta_rate, 1.0 - km * delta)
        pose = Pose(xm - delta * math.sin(thm), ym + delta * math.cos(thm), thm + steer)
        relative_heading = -steer
        poly = fit_lane_polynomial(
            road,
            pose,
            station=station,
            preview=preview,
            anchor_c0=-delta,
            anchor_c1=math.tan(relative_heading),
        )
        if i % retrigger == 0:
            corr = corridor_from_polynomial(poly, corridor_step, lane_width=road.lane_width)
            kappas = average_curvatures(corr, params.distances)
            noise = driver.offset_noise_sigma * rng.standard_normal(3)
            deltas = gains @ kappas.as_array() + noise
            for n_row, value in zip(node_rows, deltas):
                profile.commit((i + n_row) * step, float(value))
        rows_cycle.append(i)
        rows["t"].append(i * sample_time)
        rows["x"].append(pose.x)
        rows["y"].append(pose.y)
        rows["theta"].append(pose.theta)
        rows["speed"].append(speed)
        rows["c0"].append(poly.c0)
        rows["c1"].append(poly.c1)
        rows["c2"].append(poly.c2)
        rows["c3"].append(poly.c3)
        rows["lane_width"].append(road.lane_width)
        i += 1
    if not rows_cycle:
        raise ValueError("road too short to generate any cycle")
    return DriveLog(
        cycle=np.asarray(rows_cycle, dtype=np.int64),
        sample_time=sample_time,
        preview_length=preview,
        **{name: np.asarray(vals) for name, vals in rows.items()},
    )


# --------------------------------------------------------------------------
# Offset measurement and replay


def node_row_indices(log: DriveLog, row: int, distances) -> list[int]:
    """Rows at which the recorded vehicle has travelled closest to each node
    distance ahead of `row` (distance integrates the logged speed)."""
    speeds = log.speed[row:]
    stations = np.concatenate(([0.0], np.cumsum(speeds * log.sample_time)))
    indices = []
    for d in distances:
        k = int(np.searchsorted(stations, d))
        candidates = [j for j in (k - 1, k) if 0 <= j < stations.size]
        best = min(candidates, key=lambda j: abs(stations[j] - d))
        local_step = max(float(np.max(speeds[: best + 1], initial=0.0)) * log.sample_time, 1e-9)
        if abs(stations[best] - d) > local_step:
            raise InsufficientPreviewError(
                f"log ends {d - stations[-1]:.1f} m before the node point "
                f"{d:.1f} m ahead of cycle {int(log.cycle[row])}"
            )
        indices.append(row + best)
    return indices


def extract_measured_offsets(log: DriveLog, row: int, params: NodePointParams) -> OffsetVector:
    """Driver-selected lateral offsets at the node points ahead of `row`.

    Reads the perceived midline offset channel (the polynomial intercept) of
    the rows nearest to each node distance; the intercept is the signed
    perpendicular distance of the midline from the vehicle, so its negation
    is the vehicle's offset, positive left.
    """
    rows = node_row_indices(log, row, params.distances)
    return OffsetVector(*(-float(log.c0[j]) for j in rows))


@dataclass(frozen=True, eq=False)
class ReplanRecord:
    """Outcome of one retrigger: a new plan or a recorded gap."""

    cycle: int
    path: PlannedPath | None
    curvature_input: CurvatureInput | None
    offsets: OffsetVector | None
    gap: bool


@dataclass(eq=False)
class SimTrace:
    """Per-cycle replay trace plus the per-replan planning records.

    station is NaN until the trace is projected onto an evaluation corridor
    (see metrics.project_onto); offset is measured against the perceived
    midline of the most recent replan.
    """

    cycle: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    offset: np.ndarray
    path_id: np.ndarray
    kappa: np.ndarray
    station: np.ndarray
    replans: tuple[ReplanRecord, ...]

    def __len__(self) -> int:
        return int(self.cycle.size)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(TRACE_HEADER + "\n")
            for i in range(len(self)):
                fh.write(
                    ",".join(
                        (
                            str(int(self.cycle[i])),
                            format_float(self.x[i]),
                            format_float(self.y[i]),
                            format_float(self.theta[i]),
                            format_float(self.offset[i]),
                            str(int(self.path_id[i])),
                        )
                    )
                    + "\n"
                )

    def replans_to_json(self, path) -> None:
        def pose_dict(p: Pose) -> dict:
            return {"x": p.x, "y": p.y, "theta": p.theta}

        records = []
        for rec in self.replans:
            entry: dict = {"cycle": rec.cycle, "gap": rec.gap}
            if rec.curvature_input is not None:
                entry["curvature_input"] = [float(v) for v in rec.curvature_input.as_array()]
            if rec.offsets is not None:
                entry["offsets"] = [float(v) for v in rec.offsets.as_array()]
            if rec.path is not None:
                entry["path"] = {
                    "frame_origin": pose_dict(rec.path.frame.origin),
                    "node_poses": [pose_dict(p) for p in rec.path.node_poses],
                    "segments": [
                        {
                            "start": pose_dict(seg.start),
                            "kappa0": seg.kappa0,
                            "kappa_rate": seg.kappa_rate,
                            "length": seg.length,
                        }
                        for seg in rec.path.path.segments
                    ],
                }
            records.append(entry)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(records, fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_replay(
    log: DriveLog,
    gains: GainMatrix,
    params: NodePointParams | None = None,
    retrigger: int = DEFAULT_RETRIGGER_CYCLES,
    mode: str = "validation",
    corridor_step: float = DEFAULT_CORRIDOR_STEP_M,
    origin_heading: str = "vehicle",
) -> SimTrace:
    """Replay a drive log with cyclic replanning.

    Validation mode produces node offsets with the gain matrix; estimation
    mode reads them back from the recorded drive. Between replans the
    vehicle follows the active path by arc length at the logged speed. A
    replan without sufficient preview keeps the previous path active and is
    recorded as a gap.
    """
    if mode not in ("validation", "estimation"):
        raise ValueError(f"mode must be 'validation' or 'estimation', got {mode!r}")
    if retrigger < 1:
        raise ValueError("retrigger must be at least 1")
    params = params or NodePointParams()

    n = len(log)
    ego = log.pose(0)
    active: PlannedPath | None = None
    active_corr: Corridor | None = None
    path_s = 0.0
    path_id = -1
    replans: list[ReplanRecord] = []

    cycles = np.arange(n, dtype=np.int64)
    xs = np.empty(n)
    ys = np.empty(n)
    thetas = np.empty(n)
    offsets = np.full(n, np.nan)
    kappas = np.full(n, np.nan)
    path_ids = np.full(n, -1, dtype=np.int64)

    for i in range(n):
        if i % retrigger == 0:
            try:
                poly = log.polynomial(i)
                corr_full = corridor_from_polynomial(
                    poly, corridor_step, lane_width=float(log.lane_width[i])
                ).transformed(log.pose(i))
                # Node distances are measured from the planning frame, i.e.
                # from the replayed vehicle, which may run slightly ahead of
                # or behind the recording vehicle the perception is tied to.
                s_ego, _ = corr_full.project(ego.x, ego.y)
                if corr_full.length - s_ego < params.d_far:
                    raise InsufficientPreviewError(
                        f"cycle {i}: preview beyond the vehicle is "
                        f"{corr_full.length - s_ego:.1f} m, below the far node"
                    )
                corr = corr_full.window(s_ego, corr_full.length - s_ego)
                kbar = average_curvatures(corr, params.distances)
                if mode == "estimation":
                    node_offsets = extract_measured_offsets(log, i, params)
                else:
                    node_offsets = compute_offsets(gains, kbar)
                planned = plan_path_from_offsets(
                    corr, node_offsets, params, PlanningFrame(origin=ego), origin_heading
                )
            except (InsufficientPreviewError, FitError):
                replans.append(ReplanRecord(cycle=i, path=None, curvature_input=None, offsets=None, gap=True))
            else:
                path_id += 1
                active, active_corr, path_s = planned, corr, 0.0
                replans.append(
                    ReplanRecord(cycle=i, path=planned, curvature_input=kbar, offsets=node_offsets, gap=False)
                )
        xs[i], ys[i], thetas[i] = ego.x, ego.y, ego.theta
        path_ids[i] = path_id
        if active is not None:
            _, offsets[i] = active_corr.project(ego.x, ego.y)
            kappas[i] = active.path.curvature_at(min(path_s, active.path.length))
            path_s = min(path_s + float(log.speed[i]) * log.sample_time, active.path.length)
            ego = from_planning_frame(active.path.pose_at(path_s), active.frame)
    if path_id < 0:
        raise ReplayError("replay produced no valid plan at any retrigger")
    return SimTrace(
        cycle=cycles,
        x=xs,
        y=ys,
        theta=thetas,
        offset=offsets,
        path_id=path_ids,
        kappa=kappas,
        station=np.full(n, np.nan),
        replans=tuple(replans),
    )
