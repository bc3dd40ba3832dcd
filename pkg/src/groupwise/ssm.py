"""Time-to-collision kernels.

Four TTC variants are computed here:

* standard in-lane TTC of a leader/follower pair,
* adverse-condition TTC, where the leader brakes at a fixed rate for a fixed
  duration before the standard formula is applied to the displaced state,
* projected TTC of vehicles in adjacent lanes, measured along the shared lane
  line (the projection preserves the longitudinal coordinate),
* phantom projections of lane-changing vehicles onto their origin and target
  lanes.

A pair is "closing" when the follower is faster; otherwise the TTC is
``math.inf``.  A closing pair whose gap is already non-positive would produce
a negative TTC; for projected evaluations (cross-lane or phantom) that value
is replaced by the clamp constant ``TTC_CLAMP`` (1.25 s) so the high-risk
event is kept.  A non-positive gap between two vehicles genuinely sharing a
lane is a data-quality problem and raises :class:`OverlapError` instead,
unless the caller widens the clamp scope to ``"all"``.
"""

from __future__ import annotations

import math
from dataclasses import replace

from .errors import DataError, OverlapError
from .types import (
    TTC_CLAMP,
    AdverseParams,
    Frame,
    PairTtc,
    TtcKind,
    TtcResult,
    VehicleState,
)

#: Clamp scopes: "projected" clamps cross-lane and phantom overlaps only
#: (the in-lane overlap stays an error); "all" clamps in-lane overlaps too.
CLAMP_SCOPES = ("projected", "all")


def ttc_value(gap: float, dv: float) -> float:
    """Raw TTC formula: gap over closing speed, inf when not closing.

    The returned value can be <= 0 when the gap is non-positive; callers
    apply the clamp or error policy.
    """
    if dv > 0:
        return gap / dv
    return math.inf


def _wrap(raw: float, kind: TtcKind, *, clampable: bool, context: str) -> TtcResult:
    if math.isinf(raw):
        return TtcResult(math.inf, kind)
    if raw <= 0:
        if clampable:
            return TtcResult(TTC_CLAMP, kind, clamped=True)
        raise OverlapError(f"overlapping vehicles in {context} (non-positive gap)", module="ssm-core")
    return TtcResult(raw, kind)


def ttc(leader: VehicleState, follower: VehicleState, *, clamp_scope: str = "projected") -> TtcResult:
    """Standard in-lane TTC (bumper-to-bumper gap over closing speed).

    Callers order the pair by position: ``leader.x >= follower.x`` and both
    vehicles share a lane.  Overlapping in-lane vehicles raise
    :class:`OverlapError` unless ``clamp_scope="all"``.
    """
    if leader.lane_id != follower.lane_id:
        raise DataError("in-lane TTC requires both vehicles in the same lane", module="ssm-core")
    if leader.x < follower.x:
        raise DataError("leader must not be behind follower", module="ssm-core")
    gap = leader.x - follower.x - leader.length
    raw = ttc_value(gap, follower.v - leader.v)
    if gap <= 0 and math.isinf(raw) and clamp_scope != "all":
        # Not closing, so the formula hides the overlap; still invalid data.
        raise OverlapError("overlapping vehicles in in-lane data (non-positive gap)", module="ssm-core")
    return _wrap(raw, TtcKind.IN_LANE, clampable=clamp_scope == "all", context="in-lane data")


def braked_leader(x: float, v: float, params: AdverseParams) -> tuple[float, float]:
    """Advance a braking leader by the adverse duration.

    Kinematics are integrated piecewise to the stopping instant so the speed
    never goes negative: the leader stops after ``v / decel`` seconds having
    travelled ``v^2 / (2 decel)`` meters.
    """
    t_stop = v / params.decel
    if t_stop >= params.duration:
        t = params.duration
        return x + v * t - 0.5 * params.decel * t * t, v - params.decel * t
    return x + v * v / (2.0 * params.decel), 0.0


def adverse_displaced(
    leader: VehicleState, follower: VehicleState, params: AdverseParams
) -> tuple[float, float]:
    """Gap and closing speed after the leader brakes and the follower holds speed."""
    lx, lv = braked_leader(leader.x, leader.v, params)
    fx = follower.x + follower.v * params.duration
    return lx - fx - leader.length, follower.v - lv


def adverse_ttc(
    leader: VehicleState,
    follower: VehicleState,
    params: AdverseParams = AdverseParams(),
    *,
    clamp_scope: str = "projected",
) -> TtcResult:
    """TTC under adverse conditions: the leader brakes for the whole window,
    the follower holds speed, and the standard formula is applied to the
    displaced state.

    A displaced overlap (the follower would reach the braking leader within
    the window) is a projection artifact and is clamped, not an error; only a
    non-positive gap at the *current* state raises.
    """
    if leader.lane_id != follower.lane_id:
        raise DataError("adverse TTC requires both vehicles in the same lane", module="ssm-core")
    if leader.x - follower.x - leader.length <= 0:
        raise OverlapError("overlapping vehicles in in-lane data (non-positive gap)", module="ssm-core")
    gap, dv = adverse_displaced(leader, follower, params)
    return _wrap(ttc_value(gap, dv), TtcKind.ADVERSE, clampable=True, context="adverse projection")


def projected_ttc(veh_a: VehicleState, veh_b: VehicleState, *, clamp_scope: str = "projected") -> TtcResult:
    """Cross-lane TTC using the projected headway on the shared lane line.

    The projection preserves the longitudinal coordinate, so the leader is
    simply the vehicle with the larger ``x``.  Overlapping closing pairs are
    clamped to ``TTC_CLAMP``.
    """
    if abs(veh_a.lane_id - veh_b.lane_id) != 1:
        raise DataError("projected TTC requires vehicles in adjacent lanes", module="ssm-core")
    lead, follow = (veh_a, veh_b) if veh_a.x >= veh_b.x else (veh_b, veh_a)
    gap = lead.x - follow.x - lead.length
    raw = ttc_value(gap, follow.v - lead.v)
    if gap <= 0 and math.isinf(raw):
        # Laterally overlapping but not closing: no projected conflict.
        return TtcResult(math.inf, TtcKind.PROJECTED_ADJACENT)
    return _wrap(raw, TtcKind.PROJECTED_ADJACENT, clampable=True, context="projected headway")


def lane_change_projections(
    frame: Frame, changer: VehicleState, origin_lane: int, target_lane: int
) -> tuple[VehicleState, VehicleState]:
    """Phantom copies of a lane-changing vehicle on its origin and target lanes.

    The phantoms share the changer's position, speed, length and acceleration;
    they exist only for TTC evaluation within this frame and never take part
    in group matching.  The changer's own record is suppressed wherever the
    phantoms are used.
    """
    if origin_lane == target_lane:
        raise DataError("lane change projection requires distinct origin and target lanes", module="ssm-core")
    if not frame.is_lane_change(changer.vehicle_id):
        raise DataError(
            f"vehicle {changer.vehicle_id} is not flagged as changing lane at t={frame.t}",
            module="ssm-core",
        )
    return (
        replace(changer, lane_id=origin_lane),
        replace(changer, lane_id=target_lane),
    )


# ---------------------------------------------------------------------------
# Pair enumeration
# ---------------------------------------------------------------------------

def _effective_states(frame: Frame, members: set[str]) -> list[tuple[VehicleState, str, bool]]:
    """Member states with lane-changers replaced by their two phantoms.

    Returns (state, source_vehicle_id, is_phantom) tuples; the source id lets
    pair enumeration skip a changer's phantom paired with itself.
    """
    out = []
    for state in frame.states:
        vid = state.vehicle_id
        if vid not in members:
            continue
        origin = frame.lane_changes.get(vid)
        if origin is not None and origin != state.lane_id:
            ph_origin, ph_target = lane_change_projections(frame, state, origin, state.lane_id)
            out.append((ph_origin, vid, True))
            out.append((ph_target, vid, True))
        else:
            out.append((state, vid, False))
    return out


def _pair_result(
    lead: VehicleState,
    follow: VehicleState,
    kind: TtcKind,
    phantom: bool,
    clamp_scope: str,
    include_infinite: bool = False,
    clamp_value: float = TTC_CLAMP,
) -> PairTtc | None:
    gap = lead.x - follow.x - lead.length
    raw = ttc_value(gap, follow.v - lead.v)
    use_kind = TtcKind.LANE_CHANGE_PROJECTION if phantom else kind
    if math.isinf(raw):
        if gap <= 0 and kind is TtcKind.IN_LANE and not phantom and clamp_scope != "all":
            raise OverlapError(
                f"overlapping vehicles {lead.vehicle_id}/{follow.vehicle_id} in lane {lead.lane_id}",
                module="ssm-core",
            )
        if include_infinite:
            return PairTtc(lead.vehicle_id, follow.vehicle_id, math.inf, use_kind)
        return None
    if raw <= 0:
        if kind is TtcKind.IN_LANE and not phantom and clamp_scope != "all":
            raise OverlapError(
                f"overlapping vehicles {lead.vehicle_id}/{follow.vehicle_id} in lane {lead.lane_id}",
                module="ssm-core",
            )
        return PairTtc(lead.vehicle_id, follow.vehicle_id, clamp_value, use_kind, clamped=True)
    return PairTtc(lead.vehicle_id, follow.vehicle_id, raw, use_kind)


def pair_ttcs(
    frame: Frame,
    members: set[str] | frozenset[str],
    *,
    clamp_scope: str = "projected",
    include_infinite: bool = False,
    clamp_value: float = TTC_CLAMP,
) -> tuple[PairTtc, ...]:
    """All TTC evaluations among a member set at one frame.

    Enumerates consecutive leader/follower pairs within each lane plus every
    adjacent-lane pair, with lane-changing members replaced by their two
    phantom projections.  Pairs that are not closing contribute nothing
    unless ``include_infinite`` is set (used when pooling inverse TTCs, where
    a non-closing pair is a zero-risk observation).
    """
    if clamp_scope not in CLAMP_SCOPES:
        raise DataError(f"unknown clamp scope {clamp_scope!r}", module="ssm-core")
    eff = _effective_states(frame, set(members))
    by_lane: dict[int, list[tuple[VehicleState, str, bool]]] = {}
    for entry in eff:
        by_lane.setdefault(entry[0].lane_id, []).append(entry)
    for entries in by_lane.values():
        entries.sort(key=lambda e: (-e[0].x, e[1]))

    pairs: list[PairTtc] = []
    for lane in sorted(by_lane):
        entries = by_lane[lane]
        for (lead, lead_src, lead_ph), (fol, fol_src, fol_ph) in zip(entries, entries[1:]):
            if lead_src == fol_src:
                continue
            res = _pair_result(
                lead, fol, TtcKind.IN_LANE, lead_ph or fol_ph, clamp_scope, include_infinite, clamp_value
            )
            if res is not None:
                pairs.append(res)
        for other in (lane + 1,):
            if other not in by_lane:
                continue
            for lead_entry in entries:
                for other_entry in by_lane[other]:
                    if lead_entry[1] == other_entry[1]:
                        continue
                    a, b = lead_entry[0], other_entry[0]
                    lead, fol = (a, b) if a.x >= b.x else (b, a)
                    phantom = lead_entry[2] or other_entry[2]
                    res = _pair_result(
                        lead, fol, TtcKind.PROJECTED_ADJACENT, phantom, clamp_scope, include_infinite, clamp_value
                    )
                    if res is not None:
                        pairs.append(res)
    return tuple(pairs)


def compute_ttc_clamp(frames, *, percentile: float = 5.0) -> float:
    """Recompute the clamp value as a low percentile of the finite pair TTCs
    pooled over all frames (for replicating the source-data calibration that
    produced the default 1.25 s constant)."""
    values: list[float] = []
    for frame in frames:
        members = {s.vehicle_id for s in frame.states}
        for p in pair_ttcs(frame, members, clamp_scope="all"):
            if math.isfinite(p.value) and not p.clamped:
                values.append(p.value)
    if not values:
        raise DataError("no finite TTC values available to calibrate the clamp", module="ssm-core")
    ordered = sorted(values)
    k = max(1, math.ceil(percentile / 100.0 * len(ordered)))
    return ordered[k - 1]


def links_within(gap: float, dv: float, threshold: float) -> bool:
    """Whether a pair with this gap and closing speed couples under a TTC
    threshold.  Closing overlaps (gap <= 0 with dv > 0) always couple; a
    non-positive threshold disables coupling entirely."""
    if threshold <= 0 or not dv > 0:
        return False
    if math.isinf(threshold):
        return True
    return gap < threshold * dv
