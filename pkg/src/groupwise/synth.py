"""Deterministic synthetic trajectory generator.

Produces raw trajectory data in the input CSV schema from a scenario spec:
background traffic follows an IDM car-following rule with optional desired-
speed oscillation and random lane changes, while "planted" platoons follow
scripted per-pair gap profiles whose kinematics are derived analytically
(follower position chains off the leader, so speeds are exactly the leader
speed minus the gap slope and nothing ever teleports).

Scripted risk pulses drive a pair's gap down through the TTC threshold at a
chosen sample instant and reopen it slowly enough that the platoon stays one
group throughout.  The expected group membership and propagation-pattern
labels in the ground-truth sidecar are computed from the scripted profiles
alone, never by running the analysis pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, UsageError
from .ingest import RawFrames, write_geometry
from .kvfile import parse_float_list, parse_zone_list, read_kv
from .types import RoadGeometry

#: Vehicle lengths by type (m); heavy and bus match the "large vehicle"
#: definition used by the composition features.
VEHICLE_LENGTHS = {"car": 5.0, "heavy": 10.0, "bus": 12.0}

LANE_WIDTH_M = 3.5
LANE_CHANGE_RAMP_S = 2.0

#: Pulse shape: the gap starts closing this many seconds ahead of the
#: scheduled sample instant and bottoms out shortly after it, so the pair is
#: still closing (finite TTC) exactly when sampled.
PULSE_CLOSE_S = 2.0
PULSE_OVERSHOOT_S = 0.5
PULSE_LOW_GAP = 0.8


@dataclass(frozen=True)
class PlatoonSpec:
    """A scripted single-lane platoon.

    ``adverse_ttc`` fixes the equal-speed adverse-condition TTC between
    consecutive members, which determines the base bumper-to-bumper gap.
    ``pulses`` schedules risk pulses as (sample_time, pair_count) entries;
    ``auto_pulse`` is (mean_on_s, mean_off_s) for a seeded ON/OFF episode
    process that keeps one pair pulsing per second while ON.
    """

    name: str
    lane: int
    size: int
    speed: float
    entry_x: float = 0.0
    entry_time: float = 0.0
    adverse_ttc: float = 1.0
    pulses: tuple[tuple[float, int], ...] = ()
    auto_pulse: tuple[float, float] | None = None
    track_truth: bool = False


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 0
    duration_s: float = 120.0
    raw_rate_hz: float = 25.0
    lanes: int = 3
    segment_length_m: float = 2000.0
    arrival_rate: float = 0.0
    speed_mean: float = 22.0
    speed_std: float = 2.0
    idm_max_accel: float = 1.5
    idm_comfort_decel: float = 2.0
    idm_time_headway: float = 1.2
    idm_min_gap: float = 2.0
    lane_change_prob: float = 0.0
    heavy_frac: float = 0.0
    bus_frac: float = 0.0
    on_ramp_m: tuple[float, ...] = ()
    off_ramp_m: tuple[float, ...] = ()
    curve_zones: tuple[tuple[float, float], ...] = ()
    sample_interval_s: float = 5.0
    oscillation_amp: float = 0.0
    oscillation_period_s: float = 40.0
    oscillation_frac: float = 0.0
    platoons: tuple[PlatoonSpec, ...] = ()

    def geometry(self) -> RoadGeometry:
        return RoadGeometry(
            segment_id="synthetic",
            length=self.segment_length_m,
            lanes=self.lanes,
            direction="forward",
            on_ramp_positions=self.on_ramp_m,
            off_ramp_positions=self.off_ramp_m,
            curve_zones=self.curve_zones,
        )


def gap_for_adverse_ttc(target_ttc: float, decel: float = 3.0, duration: float = 1.0) -> float:
    """Equal-speed bumper-to-bumper gap producing a given adverse TTC.

    With both vehicles at the same speed (above ``decel * duration``), the
    braking window displaces the gap by ``decel * duration^2 / 2`` and leaves
    a closing speed of ``decel * duration``.
    """
    return decel * duration * target_ttc + 0.5 * decel * duration * duration


def _pulse_open_s(base_gap: float, low_gap: float = 0.7) -> float:
    """Reopening time slow enough that the adverse-condition link survives
    the whole pulse (the platoon must not split while reopening): the
    adverse TTC stays below 1.5 s as long as gap < 2.5 * closing + 6."""
    if base_gap >= 5.8:
        raise DataError(
            f"platoon base gap {base_gap:.2f} m too large for risk pulses (must stay below 5.8 m)",
            module="synth-sim",
        )
    need = (base_gap - low_gap) * 2.5 / (6.0 - base_gap)
    return max(3.0, math.ceil(need * 1.15 * 4) / 4.0)


@dataclass
class _PairSchedule:
    base_gap: float
    knots_t: list[float] = field(default_factory=list)
    knots_g: list[float] = field(default_factory=list)
    busy: list[tuple[float, float]] = field(default_factory=list)

    def can_pulse(self, t: float, open_s: float) -> bool:
        lo, hi = t - PULSE_CLOSE_S - 0.25, t + PULSE_OVERSHOOT_S + open_s + 0.25
        return all(hi <= b_lo or lo >= b_hi for b_lo, b_hi in self.busy)

    def add_pulse(self, t: float, low_gap: float, open_s: float) -> None:
        bottom = t + PULSE_OVERSHOOT_S
        self.knots_t.extend([t - PULSE_CLOSE_S, bottom, bottom + open_s])
        self.knots_g.extend([self.base_gap, low_gap, self.base_gap])
        self.busy.append((t - PULSE_CLOSE_S - 0.25, bottom + open_s + 0.25))

    def profile(self, t_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gap and gap slope on the time grid (piecewise linear)."""
        if not self.knots_t:
            return np.full_like(t_grid, self.base_gap), np.zeros_like(t_grid)
        order = np.argsort(self.knots_t)
        kt = np.asarray(self.knots_t)[order]
        kg = np.asarray(self.knots_g)[order]
        gap = np.interp(t_grid, kt, kg, left=self.base_gap, right=self.base_gap)
        slope = np.zeros_like(t_grid)
        inside = (t_grid > kt[0]) & (t_grid < kt[-1])
        seg = np.clip(np.searchsorted(kt, t_grid[inside], side="right") - 1, 0, len(kt) - 2)
        seg_dt = kt[seg + 1] - kt[seg]
        slope[inside] = np.where(seg_dt > 0, (kg[seg + 1] - kg[seg]) / np.where(seg_dt > 0, seg_dt, 1.0), 0.0)
        return gap, slope


def _schedule_platoon(platoon: PlatoonSpec, spec: ScenarioSpec, rng: np.random.Generator):
    """Build per-pair gap schedules and the expected Q at each sample time."""
    if platoon.size < 2:
        raise DataError(f"platoon {platoon.name} needs at least 2 vehicles", module="synth-sim")
    if platoon.speed < 5.0:
        raise DataError(f"platoon {platoon.name} speed must be at least 5 m/s", module="synth-sim")
    n_pairs = platoon.size - 1
    base_gap = gap_for_adverse_ttc(platoon.adverse_ttc)
    if (platoon.pulses or platoon.auto_pulse) and platoon.adverse_ttc < 0.5:
        raise DataError(
            f"platoon {platoon.name}: risk pulses need adverse_ttc >= 0.5 (base gap >= 3 m)",
            module="synth-sim",
        )
    open_s = _pulse_open_s(base_gap) if (platoon.pulses or platoon.auto_pulse) else 3.0
    pairs = [_PairSchedule(base_gap=base_gap) for _ in range(n_pairs)]
    expected_q: dict[float, int] = {}

    for t, count in platoon.pulses:
        if count > n_pairs:
            raise DataError(
                f"platoon {platoon.name}: pulse at t={t} wants {count} pairs, only {n_pairs} available",
                module="synth-sim",
            )
        free = [p for p in pairs if p.can_pulse(t, open_s)]
        if len(free) < count:
            raise DataError(
                f"platoon {platoon.name}: pulse at t={t} infeasible, only {len(free)} pair(s) free",
                module="synth-sim",
            )
        for p in free[:count]:
            p.add_pulse(t, PULSE_LOW_GAP, open_s)
        expected_q[round(t, 6)] = count

    if platoon.auto_pulse is not None:
        mean_on, mean_off = platoon.auto_pulse
        t = platoon.entry_time + float(rng.uniform(0.0, mean_off))
        rotation = 0
        while t < spec.duration_s:
            on_len = float(rng.uniform(0.5 * mean_on, 1.5 * mean_on))
            for tsec in range(math.ceil(t), math.floor(min(t + on_len, spec.duration_s)) + 1):
                placed = False
                for k in range(n_pairs):
                    p = pairs[(rotation + k) % n_pairs]
                    if p.can_pulse(float(tsec), open_s):
                        low = float(rng.uniform(0.7, 1.0))
                        p.add_pulse(float(tsec), low, open_s)
                        placed = True
                        break
                rotation += 1
                if placed:
                    expected_q[round(float(tsec), 6)] = expected_q.get(round(float(tsec), 6), 0) + 1
            t += on_len + float(rng.uniform(0.5 * mean_off, 1.5 * mean_off))
    return pairs, expected_q


def _platoon_rows(platoon: PlatoonSpec, spec: ScenarioSpec, pairs, lengths, t_grid):
    """Analytic state arrays for one platoon on the raw grid."""
    rel = t_grid - platoon.entry_time
    active = rel >= -1e-9
    lead_x = platoon.entry_x + platoon.speed * rel
    gaps, slopes = zip(*(p.profile(t_grid) for p in pairs))

    rows = {k: [] for k in ("t", "vehicle_id", "vehicle_type", "x", "lane_id", "v", "a", "length", "lateral_offset")}
    offset = np.zeros_like(t_grid)
    speed_adj = np.zeros_like(t_grid)
    for i in range(platoon.size):
        if i > 0:
            offset = offset + lengths[i - 1] + gaps[i - 1]
            speed_adj = speed_adj + slopes[i - 1]
        x = lead_x - offset
        v = platoon.speed - speed_adj
        mask = active & (x >= 0.0) & (x <= spec.segment_length_m)
        if not mask.any():
            continue
        n = int(mask.sum())
        rows["t"].append(t_grid[mask])
        rows["x"].append(x[mask])
        rows["v"].append(v[mask])
        rows["a"].append(np.zeros(n))
        rows["lane_id"].append(np.full(n, platoon.lane, dtype=np.int64))
        rows["length"].append(np.full(n, lengths[i]))
        rows["lateral_offset"].append(np.zeros(n))
        vid = f"{platoon.name}.{i:02d}"
        rows["vehicle_id"].append(np.full(n, vid, dtype=object))
        vtype = "heavy" if lengths[i] == 10.0 else ("bus" if lengths[i] == 12.0 else "car")
        rows["vehicle_type"].append(np.full(n, vtype, dtype=object))
    return rows


def _full_presence_window(platoon: PlatoonSpec, lengths, spec: ScenarioSpec) -> tuple[float, float]:
    footprint = sum(lengths[:-1]) + (platoon.size - 1) * (gap_for_adverse_ttc(platoon.adverse_ttc) + 1.0)
    t_tail_in = platoon.entry_time + max(0.0, (footprint - platoon.entry_x) / platoon.speed)
    t_lead_out = platoon.entry_time + (spec.segment_length_m - platoon.entry_x) / platoon.speed
    return t_tail_in, t_lead_out


def _classify_q(q: Sequence[int]) -> str:
    """Propagation label from a scripted Q sequence (generator-local rule)."""
    steps = [b - a for a, b in zip(q, q[1:])]
    if not any(steps):
        return "maintaining"
    if min(steps) >= 0 and q[-1] > q[0]:
        return "diffusion"
    if max(steps) <= 0 and q[-1] < q[0]:
        return "dissipation"
    return "fluctuation"


class _IdmLane:
    """Background IDM traffic in one lane (columnar, spawned at x=0)."""

    def __init__(self, lane: int, spec: ScenarioSpec):
        self.lane = lane
        self.spec = spec
        self.ids: list[str] = []
        self.x = np.zeros(0)
        self.v = np.zeros(0)
        self.a = np.zeros(0)
        self.v0 = np.zeros(0)
        self.length = np.zeros(0)
        self.vtype: list[str] = []
        self.phase = np.zeros(0)
        self.oscillates = np.zeros(0, dtype=bool)
        self.change_t = np.full(0, -np.inf)
        self.change_sign = np.zeros(0)


def _simulate_idm(spec: ScenarioSpec, rng: np.random.Generator, platoon_states):
    """Step background traffic; returns columnar rows like _platoon_rows."""
    dt = 1.0 / spec.raw_rate_hz
    n_steps = int(round(spec.duration_s * spec.raw_rate_hz))
    lanes = {lane: _IdmLane(lane, spec) for lane in range(1, spec.lanes + 1)}
    counter = 0
    sqrt_ab = math.sqrt(spec.idm_max_accel * spec.idm_comfort_decel)
    out = {k: [] for k in ("t", "vehicle_id", "vehicle_type", "x", "lane_id", "v", "a", "length", "lateral_offset")}

    def desired_speed(st: _IdmLane, t: float) -> np.ndarray:
        v0 = st.v0.copy()
        if spec.oscillation_amp > 0:
            osc = st.oscillates
            v0[osc] = np.maximum(
                5.0,
                st.v0[osc]
                + spec.oscillation_amp * np.sin(2 * math.pi * t / spec.oscillation_period_s + st.phase[osc]),
            )
        return v0

    for step in range(n_steps + 1):
        t = step * dt
        platoon_here = platoon_states(t)
        for lane in range(1, spec.lanes + 1):
            st = lanes[lane]
            if len(st.x) == 0 and spec.arrival_rate <= 0:
                continue
            px, pv, pd = platoon_here.get(lane, (np.zeros(0), np.zeros(0), np.zeros(0)))
            # Leader lookup over background + platoon vehicles together.
            all_x = np.concatenate([st.x, px])
            all_v = np.concatenate([st.v, pv])
            all_d = np.concatenate([st.length, pd])
            order = np.argsort(all_x, kind="mergesort")
            rank = np.empty(len(order), dtype=int)
            rank[order] = np.arange(len(order))

            v0 = desired_speed(st, t)
            acc = spec.idm_max_accel * (1.0 - (st.v / np.maximum(v0, 0.1)) ** 4)
            for i in range(len(st.x)):
                r = rank[i]
                if r + 1 < len(order):
                    j = order[r + 1]
                    gap = all_x[j] - st.x[i] - all_d[j]
                    dv = st.v[i] - all_v[j]
                    s_star = spec.idm_min_gap + st.v[i] * spec.idm_time_headway + st.v[i] * dv / (2 * sqrt_ab)
                    acc[i] -= spec.idm_max_accel * (max(s_star, 0.0) / max(gap, 0.1)) ** 2
            acc = np.clip(acc, -8.0, spec.idm_max_accel)
            new_v = np.maximum(0.0, st.v + acc * dt)
            st.x = st.x + (st.v + new_v) * 0.5 * dt
            st.v = new_v
            st.a = acc

            # Hard anti-collision guard against the same-lane leader.
            order2 = np.argsort(-st.x, kind="mergesort")
            for pos in range(1, len(order2)):
                lead, fol = order2[pos - 1], order2[pos]
                limit = st.x[lead] - st.length[lead] - 0.2
                if st.x[fol] > limit:
                    st.x[fol] = limit
                    st.v[fol] = min(st.v[fol], st.v[lead])

            keep = st.x <= spec.segment_length_m
            if not keep.all():
                for arr in ("x", "v", "a", "v0", "length", "phase", "change_t", "change_sign"):
                    setattr(st, arr, getattr(st, arr)[keep])
                st.oscillates = st.oscillates[keep]
                st.ids = [vid for vid, k in zip(st.ids, keep) if k]
                st.vtype = [vt for vt, k in zip(st.vtype, keep) if k]

        # Lane changes (background only).
        if spec.lane_change_prob > 0:
            for lane in range(1, spec.lanes + 1):
                st = lanes[lane]
                movers = np.flatnonzero(rng.random(len(st.x)) < spec.lane_change_prob * dt)
                for i in reversed(movers.tolist()):
                    options = [l for l in (lane - 1, lane + 1) if 1 <= l <= spec.lanes]
                    if not options:
                        continue
                    target = int(rng.choice(options))
                    dst = lanes[target]
                    px, pv, pd = platoon_states(t).get(target, (np.zeros(0), np.zeros(0), np.zeros(0)))
                    tx = np.concatenate([dst.x, px])
                    td = np.concatenate([dst.length, pd])
                    ahead = tx[tx >= st.x[i]]
                    behind = tx[tx < st.x[i]]
                    d_ahead = td[tx >= st.x[i]]
                    gap_lead = (ahead - d_ahead).min() - st.x[i] if len(ahead) else np.inf
                    gap_lag = st.x[i] - st.length[i] - behind.max() if len(behind) else np.inf
                    if gap_lead < spec.idm_min_gap + st.v[i] or gap_lag < spec.idm_min_gap + st.v[i] * 0.5:
                        continue
                    _move_vehicle(st, dst, i, lane, target, t)

        # Spawns.
        for lane in range(1, spec.lanes + 1):
            st = lanes[lane]
            if spec.arrival_rate <= 0 or rng.random() >= spec.arrival_rate * dt:
                continue
            px, pv, pd = platoon_here.get(lane, (np.zeros(0), np.zeros(0), np.zeros(0)))
            all_x = np.concatenate([st.x, px])
            all_d = np.concatenate([st.length, pd])
            near = all_x - all_d
            clear = near.min() if len(near) else np.inf
            if clear < spec.idm_min_gap + 2.0 * spec.speed_mean:
                continue
            u = rng.random()
            vtype = "heavy" if u < spec.heavy_frac else ("bus" if u < spec.heavy_frac + spec.bus_frac else "car")
            v0 = float(np.clip(rng.normal(spec.speed_mean, spec.speed_std), 8.0, 45.0))
            vid = f"bg{counter:05d}"
            counter += 1
            st.ids.append(vid)
            st.vtype.append(vtype)
            st.x = np.append(st.x, 0.0)
            st.v = np.append(st.v, min(v0, spec.speed_mean))
            st.a = np.append(st.a, 0.0)
            st.v0 = np.append(st.v0, v0)
            st.length = np.append(st.length, VEHICLE_LENGTHS[vtype])
            st.phase = np.append(st.phase, rng.uniform(0, 2 * math.pi))
            st.oscillates = np.append(st.oscillates, rng.random() < spec.oscillation_frac)
            st.change_t = np.append(st.change_t, -np.inf)
            st.change_sign = np.append(st.change_sign, 0.0)

        # Record rows.
        for lane in range(1, spec.lanes + 1):
            st = lanes[lane]
            n = len(st.x)
            if n == 0:
                continue
            ramp = np.clip(1.0 - (t - st.change_t) / LANE_CHANGE_RAMP_S, 0.0, 1.0)
            out["t"].append(np.full(n, t))
            out["vehicle_id"].append(np.array(st.ids, dtype=object))
            out["vehicle_type"].append(np.array(st.vtype, dtype=object))
            out["x"].append(st.x.copy())
            out["lane_id"].append(np.full(n, lane, dtype=np.int64))
            out["v"].append(st.v.copy())
            out["a"].append(st.a.copy())
            out["length"].append(st.length.copy())
            out["lateral_offset"].append(st.change_sign * ramp * LANE_WIDTH_M)
    return out


def _move_vehicle(src: _IdmLane, dst: _IdmLane, i: int, lane_from: int, lane_to: int, t: float):
    dst.ids.append(src.ids[i])
    dst.vtype.append(src.vtype[i])
    for arr in ("x", "v", "a", "v0", "length", "phase"):
        setattr(dst, arr, np.append(getattr(dst, arr), getattr(src, arr)[i]))
    dst.oscillates = np.append(dst.oscillates, src.oscillates[i])
    dst.change_t = np.append(dst.change_t, t)
    dst.change_sign = np.append(dst.change_sign, float(np.sign(lane_from - lane_to)))
    keep = np.ones(len(src.x), dtype=bool)
    keep[i] = False
    for arr in ("x", "v", "a", "v0", "length", "phase", "change_t", "change_sign"):
        setattr(src, arr, getattr(src, arr)[keep])
    src.oscillates = src.oscillates[keep]
    del src.ids[i]
    del src.vtype[i]


def simulate(spec: ScenarioSpec):
    """Run a scenario; returns (RawFrames, sidecar rows, geometry).

    Sidecar rows are (t_s, expected_member_ids, expected_pattern) tuples for
    every truth-tracked platoon at each sample time inside its full-presence
    window; the pattern is computed from the scripted pulse schedule.
    """
    _validate_spec(spec)
    rng = np.random.default_rng(spec.seed)
    geometry = spec.geometry()
    dt = 1.0 / spec.raw_rate_hz
    t_grid = np.arange(int(round(spec.duration_s * spec.raw_rate_hz)) + 1) * dt

    columns = {k: [] for k in ("t", "vehicle_id", "vehicle_type", "x", "lane_id", "v", "a", "length", "lateral_offset")}
    platoon_tracks = []
    sidecar_rows = []

    type_rng = np.random.default_rng(spec.seed + 1)
    for platoon in spec.platoons:
        lengths = []
        for _ in range(platoon.size):
            u = type_rng.random()
            vt = "heavy" if u < spec.heavy_frac else ("bus" if u < spec.heavy_frac + spec.bus_frac else "car")
            lengths.append(VEHICLE_LENGTHS[vt])
        pairs, expected_q = _schedule_platoon(platoon, spec, rng)
        rows = _platoon_rows(platoon, spec, pairs, lengths, t_grid)
        for k in columns:
            columns[k].extend(rows[k])
        platoon_tracks.append((platoon, lengths, pairs))

        if platoon.track_truth or platoon.pulses:
            t_in, t_out = _full_presence_window(platoon, lengths, spec)
            members = ";".join(f"{platoon.name}.{i:02d}" for i in range(platoon.size))
            sample_ts = [
                k * spec.sample_interval_s
                for k in range(int(spec.duration_s / spec.sample_interval_s) + 1)
                if t_in <= k * spec.sample_interval_s <= min(t_out, spec.duration_s)
            ]
            q_seq = [expected_q.get(round(ts, 6), 0) for ts in sample_ts]
            label = _classify_q(q_seq) if len(q_seq) >= 2 else "maintaining"
            for ts in sample_ts:
                sidecar_rows.append((ts, members, label))

    if spec.arrival_rate > 0 or spec.lane_change_prob > 0:
        def platoon_states(t: float) -> dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]:
            per_lane: dict[int, list] = {}
            for platoon, lengths, pairs in platoon_tracks:
                rel = t - platoon.entry_time
                if rel < 0:
                    continue
                x = platoon.entry_x + platoon.speed * rel
                for i in range(platoon.size):
                    if i > 0:
                        gap_i, _ = pairs[i - 1].profile(np.array([t]))
                        x -= lengths[i - 1] + float(gap_i[0])
                    if 0 <= x <= spec.segment_length_m:
                        per_lane.setdefault(platoon.lane, []).append((x, platoon.speed, lengths[i]))
            return {
                lane: tuple(np.array(col) for col in zip(*vals))
                for lane, vals in per_lane.items()
            }

        bg = _simulate_idm(spec, rng, platoon_states)
        for k in columns:
            columns[k].extend(bg[k])

    if not columns["t"]:
        raise DataError("scenario produced no vehicles", module="synth-sim")
    arrays = {k: np.concatenate(v) for k, v in columns.items()}
    arrays["lane_change_from"] = np.full(len(arrays["t"]), -1, dtype=np.int64)
    frames = RawFrames(arrays, geometry=geometry)
    return frames, sidecar_rows, geometry


def _validate_spec(spec: ScenarioSpec) -> None:
    if spec.duration_s <= 0 or spec.raw_rate_hz <= 0:
        raise DataError("duration and raw rate must be positive", module="synth-sim")
    if spec.heavy_frac + spec.bus_frac > 1.0:
        raise DataError("heavy_frac + bus_frac cannot exceed 1", module="synth-sim")
    names = [p.name for p in spec.platoons]
    if len(names) != len(set(names)):
        raise DataError("platoon names must be unique", module="synth-sim")
    for p in spec.platoons:
        if not 1 <= p.lane <= spec.lanes:
            raise DataError(f"platoon {p.name} lane {p.lane} outside segment lanes", module="synth-sim")
        for t, _ in p.pulses:
            if t - PULSE_CLOSE_S < p.entry_time:
                raise DataError(f"platoon {p.name}: pulse at t={t} starts before entry", module="synth-sim")
            if t > spec.duration_s:
                raise DataError(f"platoon {p.name}: pulse at t={t} beyond scenario duration", module="synth-sim")


def _fmt(val: float, places: int = 4) -> str:
    return f"{val:.{places}f}".rstrip("0").rstrip(".")


def write_raw_csv(path: str | Path, frames: RawFrames) -> None:
    """Serialize raw frames to the trajectory CSV schema, deterministically."""
    cols = frames._cols
    lines = ["t_s,vehicle_id,vehicle_type,x_m,lane_id,v_mps,a_mps2,length_m,lateral_offset_m"]
    for i in range(len(cols["t"])):
        lines.append(
            ",".join(
                (
                    _fmt(float(cols["t"][i]), 4),
                    str(cols["vehicle_id"][i]),
                    str(cols["vehicle_type"][i]),
                    _fmt(float(cols["x"][i]), 4),
                    str(int(cols["lane_id"][i])),
                    _fmt(float(cols["v"][i]), 4),
                    _fmt(float(cols["a"][i]), 4),
                    _fmt(float(cols["length"][i]), 4),
                    _fmt(float(cols["lateral_offset"][i]), 4),
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_sidecar(path: str | Path, rows) -> None:
    lines = ["t_s,expected_group_members,expected_pattern"]
    for t, members, label in rows:
        lines.append(f"{_fmt(float(t), 4)},{members},{label}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def generate(spec: ScenarioSpec, out_dir: str | Path) -> dict[str, Path]:
    """Generate a scenario and write data, sidecar, and geometry files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames, sidecar, geometry = simulate(spec)
    paths = {
        "data": out / "trajectories.csv",
        "sidecar": out / "sidecar.csv",
        "geometry": out / "geometry.cfg",
    }
    write_raw_csv(paths["data"], frames)
    write_sidecar(paths["sidecar"], sidecar)
    write_geometry(paths["geometry"], geometry)
    return paths


# ---------------------------------------------------------------------------
# Scenario spec files
# ---------------------------------------------------------------------------

def _parse_pulses(text: str) -> tuple[tuple[float, int], ...]:
    pulses = []
    for tok in text.split(";"):
        tok = tok.strip()
        if not tok:
            continue
        t, count = tok.split(":")
        pulses.append((float(t), int(count)))
    return tuple(pulses)


def parse_scenario(path: str | Path) -> ScenarioSpec:
    """Read a scenario spec file (flat key-value with platoon.* blocks)."""
    kv = read_kv(path)
    base: dict = {}
    mapping = {
        "seed": int,
        "duration_s": float,
        "raw_rate_hz": float,
        "lanes": int,
        "segment_length_m": float,
        "arrival_rate": float,
        "speed_mean": float,
        "speed_std": float,
        "idm_max_accel": float,
        "idm_comfort_decel": float,
        "idm_time_headway": float,
        "idm_min_gap": float,
        "lane_change_prob": float,
        "heavy_frac": float,
        "bus_frac": float,
        "sample_interval_s": float,
        "oscillation_amp": float,
        "oscillation_period_s": float,
        "oscillation_frac": float,
    }
    platoon_kv: dict[str, dict[str, str]] = {}
    for key, value in kv.items():
        if key.startswith("platoon."):
            try:
                _, name, field_name = key.split(".", 2)
            except ValueError as exc:
                raise UsageError(f"malformed platoon key {key!r}") from exc
            platoon_kv.setdefault(name, {})[field_name] = value
        elif key == "on_ramp_m":
            base["on_ramp_m"] = parse_float_list(value)
        elif key == "off_ramp_m":
            base["off_ramp_m"] = parse_float_list(value)
        elif key == "curve_zones":
            base["curve_zones"] = parse_zone_list(value)
        elif key in mapping:
            base[key] = mapping[key](value)
        else:
            raise UsageError(f"unknown scenario key {key!r}")

    platoons = []
    for name in sorted(platoon_kv):
        fields = platoon_kv[name]
        try:
            platoons.append(
                PlatoonSpec(
                    name=name,
                    lane=int(fields["lane"]),
                    size=int(fields["size"]),
                    speed=float(fields["speed"]),
                    entry_x=float(fields.get("entry_x", "0")),
                    entry_time=float(fields.get("entry_time", "0")),
                    adverse_ttc=float(fields.get("adverse_ttc", "1.0")),
                    pulses=_parse_pulses(fields.get("pulses", "")),
                    auto_pulse=(
                        tuple(float(v) for v in fields["auto_pulse"].split(":"))
                        if "auto_pulse" in fields
                        else None
                    ),
                    track_truth=fields.get("track_truth", "0") in ("1", "true", "yes"),
                )
            )
        except KeyError as exc:
            raise UsageError(f"platoon {name} missing required field {exc.args[0]!r}") from exc
    return ScenarioSpec(platoons=tuple(platoons), **base)
