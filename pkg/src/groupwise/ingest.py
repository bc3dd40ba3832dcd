"""Trajectory CSV parsing, geometry configs, and down-sampling.

Input CSV schema (header required, comma-separated, UTF-8)::

    t_s,vehicle_id,vehicle_type,x_m,lane_id,v_mps,a_mps2,length_m,lateral_offset_m

``vehicle_type`` is one of ``car``/``heavy``/``bus``; ``lateral_offset_m`` may
be empty.  A trailing optional ``lane_change_from`` column (written by this
module when serializing a down-sampled dataset) carries the origin lane of a
flagged lane change so a dataset round-trips losslessly.

Rows violating the schema or the per-vehicle invariants are rejected with a
line-numbered diagnostic.  Line numbers count the header as line 1.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

from .errors import DataError
from .kvfile import parse_float_list, parse_zone_list, read_kv
from .types import Dataset, Frame, RoadGeometry, VehicleState, VehicleType

REQUIRED_COLUMNS = [
    "t_s",
    "vehicle_id",
    "vehicle_type",
    "x_m",
    "lane_id",
    "v_mps",
    "a_mps2",
    "length_m",
    "lateral_offset_m",
]

_TYPE_BY_NAME = {t.value: t for t in VehicleType}


class RawFrames(Sequence[Frame]):
    """Columnar store of raw (full-rate) frames, materialized lazily.

    Keeps the high-frequency source data in numpy arrays sorted by
    (timestamp, vehicle id); indexing materializes one :class:`Frame`.
    """

    def __init__(self, columns: dict[str, np.ndarray], geometry: RoadGeometry | None = None):
        order = np.lexsort((columns["vehicle_id"], columns["t"]))
        self._cols = {k: v[order] for k, v in columns.items()}
        self.geometry = geometry
        self.times, self._starts = np.unique(self._cols["t"], return_index=True)
        self._ends = np.append(self._starts[1:], len(self._cols["t"]))

    def __len__(self) -> int:
        return len(self.times)

    def _frame_at(self, idx: int) -> Frame:
        sl = slice(self._starts[idx], self._ends[idx])
        c = self._cols
        states = tuple(
            VehicleState(
                vehicle_id=str(c["vehicle_id"][i]),
                t=float(c["t"][i]),
                x=float(c["x"][i]),
                lane_id=int(c["lane_id"][i]),
                v=float(c["v"][i]),
                a=float(c["a"][i]),
                length=float(c["length"][i]),
                vehicle_type=VehicleType(str(c["vehicle_type"][i])),
                lateral_offset=float(c["lateral_offset"][i]),
            )
            for i in range(sl.start, sl.stop)
        )
        return Frame(t=float(self.times[idx]), states=states)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return [self._frame_at(i) for i in range(*idx.indices(len(self)))]
        if idx < 0:
            idx += len(self)
        if not 0 <= idx < len(self):
            raise IndexError(idx)
        return self._frame_at(idx)

    def __iter__(self) -> Iterator[Frame]:
        for i in range(len(self)):
            yield self._frame_at(i)

    def raw_interval(self) -> float:
        if len(self.times) < 2:
            raise DataError("cannot infer raw interval from fewer than two frames", module="data-ingest")
        return float(np.min(np.diff(self.times)))

    def vehicle_series(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Per-vehicle (times, lane_ids) arrays in time order."""
        c = self._cols
        order = np.lexsort((c["t"], c["vehicle_id"]))
        vids = c["vehicle_id"][order]
        ts = c["t"][order]
        lanes = c["lane_id"][order]
        out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        uniq, starts = np.unique(vids, return_index=True)
        ends = np.append(starts[1:], len(vids))
        for vid, s, e in zip(uniq, starts, ends):
            out[str(vid)] = (ts[s:e], lanes[s:e])
        return out


def parse_geometry(path: str | Path) -> RoadGeometry:
    """Read a road-geometry config (flat key-value file)."""
    kv = read_kv(path)
    try:
        return RoadGeometry(
            segment_id=kv["segment_id"],
            length=float(kv["length_m"]),
            lanes=int(kv["lanes"]),
            direction=kv.get("direction", "forward"),
            on_ramp_positions=parse_float_list(kv.get("on_ramp_m", "")),
            off_ramp_positions=parse_float_list(kv.get("off_ramp_m", "")),
            curve_zones=parse_zone_list(kv.get("curve_zones", "")),
        )
    except KeyError as exc:
        raise DataError(f"geometry config missing key {exc.args[0]!r}", module="data-ingest") from exc
    except ValueError as exc:
        raise DataError(f"geometry config: {exc}", module="data-ingest") from exc


def write_geometry(path: str | Path, geometry: RoadGeometry) -> None:
    items = {
        "segment_id": geometry.segment_id,
        "length_m": repr(geometry.length),
        "lanes": str(geometry.lanes),
        "direction": geometry.direction,
        "on_ramp_m": ";".join(repr(p) for p in geometry.on_ramp_positions),
        "off_ramp_m": ";".join(repr(p) for p in geometry.off_ramp_positions),
        "curve_zones": ";".join(f"{s}:{e}" for s, e in geometry.curve_zones),
    }
    from .kvfile import write_kv

    write_kv(path, items)


def _fail(message: str, line: int) -> DataError:
    return DataError(f"{message}, line {line}", module="data-ingest")


def parse_trajectories(csv_source: str | Path, geometry: RoadGeometry) -> RawFrames:
    """Parse and validate a trajectory CSV into raw frames.

    Vectorized validation reports the first offending row with its 1-based
    file line number (header = line 1).
    """
    df = pd.read_csv(csv_source, dtype=str, keep_default_na=False)
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"input CSV missing column(s): {', '.join(missing)}", module="data-ingest")

    n = len(df)
    lines = np.arange(n) + 2  # data rows start on file line 2

    def numeric(col: str, default: float | None = None) -> np.ndarray:
        raw = df[col].str.strip()
        if default is not None:
            raw = raw.replace("", str(default))
        vals = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
        bad = np.isnan(vals)
        if bad.any():
            i = int(np.argmax(bad))
            raise _fail(f"unparseable {col} value {df[col].iloc[i]!r}", lines[i])
        return vals

    t = numeric("t_s")
    x = numeric("x_m")
    v = numeric("v_mps")
    a = numeric("a_mps2")
    length = numeric("length_m")
    lateral = numeric("lateral_offset_m", default=0.0)

    lane_f = numeric("lane_id")
    if not np.all(lane_f == np.round(lane_f)):
        i = int(np.argmax(lane_f != np.round(lane_f)))
        raise _fail(f"non-integer lane_id {df['lane_id'].iloc[i]!r}", lines[i])
    lane = lane_f.astype(np.int64)

    vid = df["vehicle_id"].str.strip().to_numpy(dtype=object)
    if (vid == "").any():
        i = int(np.argmax(vid == ""))
        raise _fail("empty vehicle_id", lines[i])

    vtype = df["vehicle_type"].str.strip().to_numpy(dtype=object)
    known = np.isin(vtype, list(_TYPE_BY_NAME))
    if not known.all():
        i = int(np.argmax(~known))
        raise _fail(f"unknown vehicle_type {vtype[i]!r}", lines[i])

    if (v < 0).any():
        i = int(np.argmax(v < 0))
        raise _fail("negative speed", lines[i])
    if (length <= 0).any():
        i = int(np.argmax(length <= 0))
        raise _fail("non-positive length", lines[i])
    bad_lane = (lane < 1) | (lane > geometry.lanes)
    if bad_lane.any():
        i = int(np.argmax(bad_lane))
        raise _fail(f"unknown lane_id {lane[i]} (segment has {geometry.lanes} lanes)", lines[i])

    # Strictly increasing timestamps per vehicle: any duplicate (vehicle, t)
    # breaks monotonicity.
    order = np.lexsort((t, vid))
    same_vid = vid[order][1:] == vid[order][:-1]
    non_increasing = t[order][1:] <= t[order][:-1]
    dup = same_vid & non_increasing
    if dup.any():
        i = int(order[1:][np.argmax(dup)])
        raise _fail(f"non-monotone timestamp for vehicle {vid[i]}", lines[i])

    origin_from = np.full(n, -1, dtype=np.int64)
    if "lane_change_from" in df.columns:
        raw = df["lane_change_from"].str.strip()
        has = raw != ""
        if has.any():
            vals = pd.to_numeric(raw[has], errors="coerce")
            if vals.isna().any():
                i = int(vals.index[vals.isna()][0])
                raise _fail(f"unparseable lane_change_from {df['lane_change_from'].iloc[i]!r}", lines[i])
            origin_from[has.to_numpy()] = vals.to_numpy(dtype=np.int64)

    cols = {
        "t": t,
        "vehicle_id": vid,
        "vehicle_type": vtype,
        "x": x,
        "lane_id": lane,
        "v": v,
        "a": a,
        "length": length,
        "lateral_offset": lateral,
        "lane_change_from": origin_from,
    }
    return RawFrames(cols, geometry=geometry)


def _as_raw(frames, geometry: RoadGeometry | None):
    """Normalize the down-sampling input to (frame list, spacing, geometry)."""
    if isinstance(frames, Dataset):
        return list(frames.frames), frames.sample_interval, frames.geometry
    if isinstance(frames, RawFrames):
        geo = geometry or frames.geometry
        return frames, frames.raw_interval(), geo
    frames = list(frames)
    if len(frames) < 2:
        raise DataError("cannot infer raw interval from fewer than two frames", module="data-ingest")
    spacing = min(b.t - a.t for a, b in zip(frames, frames[1:]))
    return frames, spacing, geometry


def downsample(frames, target_interval: float, geometry: RoadGeometry | None = None) -> Dataset:
    """Keep frames on the grid ``t0 + k * target_interval`` and flag lane changes.

    A vehicle's lane-change flag at sampled time ``t_j`` is set when its raw
    lane id varies anywhere in the right-closed window
    ``(t_j - target_interval, t_j]``; the recorded origin is the most recent
    raw lane that differs from the lane held at ``t_j``.  Flags already
    present on the input frames (re-sampling an existing dataset) are
    preserved, which makes the operation idempotent.
    """
    source, raw_dt, geometry = _as_raw(frames, geometry)
    if geometry is None:
        raise DataError("geometry required to build a dataset", module="data-ingest")
    if raw_dt <= 0:
        raise DataError("raw frames must be strictly time ordered", module="data-ingest")
    ratio = target_interval / raw_dt
    if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
        raise DataError(
            f"target interval {target_interval} s is not an integer multiple of the raw spacing {raw_dt} s",
            module="data-ingest",
        )

    if isinstance(source, RawFrames):
        times = source.times
        t0 = float(times[0])
        per_vehicle = source.vehicle_series()
        n_steps = int(math.floor((float(times[-1]) - t0) / target_interval + 1e-9))
        grid = t0 + np.arange(n_steps + 1) * float(target_interval)
        origins = source._cols["lane_change_from"]

        sampled: list[Frame] = []
        for tj in grid:
            pos = int(np.searchsorted(times, tj))
            idx = None
            for cand in (pos - 1, pos):
                if 0 <= cand < len(times) and abs(float(times[cand]) - tj) < 1e-6:
                    idx = cand
                    break
            base = source[idx] if idx is not None else Frame(t=float(tj), states=())
            changes: dict[str, int] = {}
            for s in base.states:
                ts, lanes = per_vehicle[s.vehicle_id]
                lo = np.searchsorted(ts, tj - target_interval, side="right")
                hi = np.searchsorted(ts, tj + 1e-9, side="right")
                window = lanes[lo:hi]
                diff = window != s.lane_id
                if diff.any():
                    changes[s.vehicle_id] = int(window[np.flatnonzero(diff)[-1]])
            if idx is not None:
                sl = slice(source._starts[idx], source._ends[idx])
                for i in range(sl.start, sl.stop):
                    if origins[i] >= 0:
                        changes.setdefault(str(source._cols["vehicle_id"][i]), int(origins[i]))
            sampled.append(Frame(t=float(tj), states=base.states, lane_changes=changes))
        return Dataset(geometry=geometry, frames=tuple(sampled), sample_interval=float(target_interval))

    # Generic frame-sequence path (small inputs, re-sampling datasets).
    t0 = source[0].t
    frame_at = {round(f.t - t0, 9): f for f in source}
    per_vehicle: dict[str, list[tuple[float, int]]] = {}
    for f in source:
        for s in f.states:
            per_vehicle.setdefault(s.vehicle_id, []).append((f.t, s.lane_id))
    last_t = source[-1].t
    sampled = []
    n_steps = int(math.floor((last_t - t0) / target_interval + 1e-9))
    for k in range(n_steps + 1):
        tj = t0 + k * target_interval
        base = frame_at.get(round(tj - t0, 9), Frame(t=tj, states=()))
        in_window = [f for f in source if tj - target_interval < f.t <= tj + 1e-9]
        changes: dict[str, int] = {}
        for s in base.states:
            series = per_vehicle[s.vehicle_id]
            window = [lane for (ts, lane) in series if tj - target_interval < ts <= tj + 1e-9]
            diffs = [lane for lane in window if lane != s.lane_id]
            if diffs:
                changes[s.vehicle_id] = diffs[-1]
        # Carry forward flags already present on source frames in the window
        # (input may itself be a sampled dataset).
        member_ids = {s.vehicle_id for s in base.states}
        for f in in_window:
            for vid, origin in f.lane_changes.items():
                if vid in member_ids:
                    changes.setdefault(vid, origin)
        sampled.append(Frame(t=base.t if base.states else tj, states=base.states, lane_changes=changes))
    return Dataset(geometry=geometry, frames=tuple(sampled), sample_interval=float(target_interval))


def _format_float(val: float) -> str:
    return repr(round(float(val), 9))


def write_trajectories(path: str | Path, frames, *, include_lane_change: bool | None = None) -> None:
    """Serialize frames (raw sequence or Dataset) back to the input CSV schema.

    Down-sampled datasets gain a ``lane_change_from`` column so that parsing
    the output reproduces the dataset exactly.
    """
    if isinstance(frames, Dataset):
        seq = frames.frames
        if include_lane_change is None:
            include_lane_change = True
    else:
        seq = list(frames)
        if include_lane_change is None:
            include_lane_change = any(f.lane_changes for f in seq)

    header = list(REQUIRED_COLUMNS) + (["lane_change_from"] if include_lane_change else [])
    rows = [",".join(header)]
    for frame in seq:
        for s in sorted(frame.states, key=lambda s: s.vehicle_id):
            row = [
                _format_float(frame.t),
                s.vehicle_id,
                s.vehicle_type.value,
                _format_float(s.x),
                str(s.lane_id),
                _format_float(s.v),
                _format_float(s.a),
                _format_float(s.length),
                _format_float(s.lateral_offset),
            ]
            if include_lane_change:
                origin = frame.lane_changes.get(s.vehicle_id)
                row.append("" if origin is None else str(origin))
            rows.append(",".join(row))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
