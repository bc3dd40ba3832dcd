"""Core domain types: vehicle states, frames, geometry, groups, trajectories.

Positions are longitudinal front-bumper coordinates in meters along the road
axis, increasing in the travel direction, so the bumper-to-bumper gap between
a leader and its follower is ``leader.x - follower.x - leader.length``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import DataError

#: Tolerance used when comparing sampled frame times.
TIME_TOL = 1e-6


class VehicleType(str, enum.Enum):
    CAR = "car"
    HEAVY = "heavy"
    BUS = "bus"


#: Types counted as "large" vehicles in composition features.
LARGE_VEHICLE_TYPES = frozenset({VehicleType.HEAVY, VehicleType.BUS})


@dataclass(frozen=True, slots=True)
class VehicleState:
    """One vehicle's kinematic record at one timestamp."""

    vehicle_id: str
    t: float
    x: float
    lane_id: int
    v: float
    a: float
    length: float
    vehicle_type: VehicleType = VehicleType.CAR
    lateral_offset: float = 0.0

    def __post_init__(self):
        if self.v < 0:
            raise DataError(f"negative speed for vehicle {self.vehicle_id}", module="data-ingest")
        if self.length <= 0:
            raise DataError(f"non-positive length for vehicle {self.vehicle_id}", module="data-ingest")


@dataclass(frozen=True)
class Frame:
    """All vehicle states observed at one timestamp.

    ``lane_changes`` maps the ids of vehicles flagged as changing lane at this
    frame to the lane they came from (the most recent raw lane that differs
    from the current one inside the detection window).
    """

    t: float
    states: tuple[VehicleState, ...]
    lane_changes: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        ids = [s.vehicle_id for s in self.states]
        if len(ids) != len(set(ids)):
            raise DataError(f"duplicate vehicle_id in frame t={self.t}", module="data-ingest")
        for s in self.states:
            if abs(s.t - self.t) > TIME_TOL:
                raise DataError(f"state time {s.t} does not match frame time {self.t}", module="data-ingest")

    def state_of(self, vehicle_id: str) -> VehicleState:
        for s in self.states:
            if s.vehicle_id == vehicle_id:
                return s
        raise KeyError(vehicle_id)

    def is_lane_change(self, vehicle_id: str) -> bool:
        return vehicle_id in self.lane_changes

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class RoadGeometry:
    """Static description of one directed road segment."""

    segment_id: str
    length: float
    lanes: int
    direction: str = "forward"
    on_ramp_positions: tuple[float, ...] = ()
    off_ramp_positions: tuple[float, ...] = ()
    curve_zones: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.length <= 0:
            raise DataError("segment length must be positive", module="data-ingest")
        if self.lanes < 1:
            raise DataError("segment must have at least one lane", module="data-ingest")
        for pos in (*self.on_ramp_positions, *self.off_ramp_positions):
            if not 0 <= pos <= self.length:
                raise DataError(f"ramp position {pos} outside segment [0, {self.length}]", module="data-ingest")
        for start, end in self.curve_zones:
            if not (0 <= start < end <= self.length):
                raise DataError(f"degenerate curve zone [{start}, {end}]", module="data-ingest")

    def valid_lane(self, lane_id: int) -> bool:
        return 1 <= lane_id <= self.lanes


@dataclass(frozen=True)
class Dataset:
    """Down-sampled frames over one road segment at a fixed interval."""

    geometry: RoadGeometry
    frames: tuple[Frame, ...]
    sample_interval: float

    def __post_init__(self):
        if self.sample_interval <= 0:
            raise DataError("sample interval must be positive", module="data-ingest")
        for prev, cur in zip(self.frames, self.frames[1:]):
            if abs((cur.t - prev.t) - self.sample_interval) > TIME_TOL:
                raise DataError(
                    f"frame spacing {cur.t - prev.t} differs from sample interval {self.sample_interval}",
                    module="data-ingest",
                )

    def __len__(self) -> int:
        return len(self.frames)


class TtcKind(str, enum.Enum):
    IN_LANE = "in_lane"
    ADVERSE = "adverse"
    PROJECTED_ADJACENT = "projected_adjacent"
    LANE_CHANGE_PROJECTION = "lane_change_projection"


#: Replacement value for negative projected TTCs (the 5th percentile of the
#: source data's TTC distribution), in seconds.
TTC_CLAMP = 1.25


@dataclass(frozen=True, slots=True)
class TtcResult:
    """A time-to-collision value in seconds; ``math.inf`` when not closing."""

    value: float
    kind: TtcKind = TtcKind.IN_LANE
    clamped: bool = False

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError(f"TTC must be positive, got {self.value}")
        if self.clamped and self.value != TTC_CLAMP:
            raise ValueError("clamped TTC must equal the clamp constant")


@dataclass(frozen=True, slots=True)
class AdverseParams:
    """Leader braking assumed when amplifying in-lane risk: rate (m/s^2,
    absolute) applied for a fixed duration (s)."""

    decel: float = 3.0
    duration: float = 1.0

    def __post_init__(self):
        if self.decel <= 0 or self.duration <= 0:
            raise ValueError("adverse deceleration and duration must be positive")


@dataclass(frozen=True, slots=True)
class PairTtc:
    """One leader/follower TTC evaluation inside a vehicle group."""

    leader_id: str
    follower_id: str
    value: float
    kind: TtcKind
    clamped: bool = False


@dataclass
class VehicleGroup:
    """A set of vehicles coupled by sub-threshold TTC links at one timestamp.

    ``inv_threshold`` carries a density-conditioned high-risk threshold
    (inverse-TTC space) when the group was formed under adaptive thresholds;
    risk computations fall back to the static threshold when it is None.
    """

    group_id: str
    t: float
    members: frozenset[str]
    head_vehicles: dict[int, str]
    ttc_pairs: tuple[PairTtc, ...] = ()
    inv_threshold: float | None = None

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def head_set(self) -> frozenset[str]:
        return frozenset(self.head_vehicles.values())

    def finite_ttcs(self) -> list[float]:
        return [p.value for p in self.ttc_pairs]


@dataclass
class GroupTrajectory:
    """Time-ordered chain of matched vehicle groups (>= 2 frames)."""

    trajectory_id: str
    entries: tuple[tuple[float, VehicleGroup], ...]

    def __post_init__(self):
        if len(self.entries) < 2:
            raise ValueError("group trajectory must span at least two frames")

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.entries]

    @property
    def groups(self) -> list[VehicleGroup]:
        return [g for _, g in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


class PropagationPattern(enum.IntEnum):
    """Spatial crash-risk propagation pattern of a group trajectory.

    Dissipation is the reference label (0) in the propagation model.
    """

    DISSIPATION = 0
    MAINTAINING = 1
    DIFFUSION = 2
    FLUCTUATION = 3


@dataclass(frozen=True, slots=True)
class GroupRisk:
    """Instantaneous crash risk of one vehicle group."""

    risk: float
    qty_high_risk: int
    is_high: bool
