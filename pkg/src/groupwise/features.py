"""Feature extraction for the formation and propagation regression models.

Formation features describe one group at one frame (motion statistics,
composition, current risk, and segment context) and are labeled with the
group's high-risk state one prediction interval later, looked up through the
matched trajectory.  Propagation features reduce a whole group trajectory and
are labeled with its propagation pattern.

Standard deviations are population standard deviations: a group at an
instant is the complete population, not a sample.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import DataError
from .risk import STATIC_INVERSE_THRESHOLD, group_risk, trajectory_pattern
from .types import (
    LARGE_VEHICLE_TYPES,
    Dataset,
    Frame,
    GroupTrajectory,
    RoadGeometry,
    VehicleGroup,
)

#: Longitudinal distance within which a vehicle counts as near a ramp gore.
RAMP_RANGE_M = 100.0

FORMATION_COLUMNS = [
    "max_s",
    "min_s",
    "avg_s",
    "std_s",
    "std_a",
    "pctg_large_veh",
    "pctg_change_lane",
    "size",
    "risk",
    "qty_high_risk",
    "segment_density",
    "segment_speed",
    "lanes",
    "on_ramp",
    "off_ramp",
    "curve",
]

PROPAGATION_COLUMNS = [
    "std_avg_s",
    "avg_avg_s",
    "cum_avg_s",
    "std_avg_a",
    "std_size",
    "avg_size",
    "cum_size",
    "avg_change_lane",
    "sum_change_lane",
    "sum_large_veh",
    "sum_on_ramp",
    "sum_off_ramp",
    "timespan_high_risk",
    "ini_risk",
    "max_risk",
    "avg_risk",
]


def _near_any(x: float, positions: Sequence[float]) -> bool:
    return any(abs(x - p) <= RAMP_RANGE_M for p in positions)


def _in_curve(x: float, zones: Sequence[tuple[float, float]]) -> bool:
    return any(start <= x <= end for start, end in zones)


def _member_counts(group: VehicleGroup, frame: Frame, geometry: RoadGeometry) -> dict[str, float]:
    states = [frame.state_of(vid) for vid in sorted(group.members)]
    speeds = np.array([s.v for s in states])
    accels = np.array([s.a for s in states])
    n = len(states)
    n_large = sum(1 for s in states if s.vehicle_type in LARGE_VEHICLE_TYPES)
    n_change = sum(1 for s in states if frame.is_lane_change(s.vehicle_id))
    return {
        "max_s": float(speeds.max()),
        "min_s": float(speeds.min()),
        "avg_s": float(speeds.mean()),
        "std_s": float(speeds.std()),
        "avg_a": float(accels.mean()),
        "std_a": float(accels.std()),
        "pctg_large_veh": n_large / n,
        "pctg_change_lane": n_change / n,
        "large_veh": n_large,
        "change_lane": n_change,
        "size": n,
        "on_ramp": sum(1 for s in states if _near_any(s.x, geometry.on_ramp_positions)),
        "off_ramp": sum(1 for s in states if _near_any(s.x, geometry.off_ramp_positions)),
        "curve": sum(1 for s in states if _in_curve(s.x, geometry.curve_zones)),
    }


def formation_features(
    group: VehicleGroup,
    frame: Frame,
    geometry: RoadGeometry,
    label_group: VehicleGroup,
    *,
    inverse_threshold: float = STATIC_INVERSE_THRESHOLD,
    label_inverse_threshold: float | None = None,
) -> dict[str, float]:
    """One formation observation for a group, labeled by its matched
    successor's high-risk state."""
    row = _member_counts(group, frame, geometry)
    for extra in ("large_veh", "change_lane", "avg_a"):
        row.pop(extra)
    gr = group_risk(group, inverse_threshold=inverse_threshold)
    row["risk"] = gr.risk
    row["qty_high_risk"] = gr.qty_high_risk
    row["segment_density"] = len(frame.states) / geometry.length
    row["segment_speed"] = float(np.mean([s.v for s in frame.states]))
    row["lanes"] = geometry.lanes
    label_thr = inverse_threshold if label_inverse_threshold is None else label_inverse_threshold
    row["label"] = int(group_risk(label_group, inverse_threshold=label_thr).is_high)
    return row


def formation_table(
    dataset: Dataset,
    trajectories: Sequence[GroupTrajectory],
    *,
    horizon_s: float | None = None,
    inverse_threshold: float = STATIC_INVERSE_THRESHOLD,
) -> pd.DataFrame:
    """Formation rows for every group-frame with a matched successor at
    ``t + horizon``; groups without one are dropped.

    ``horizon_s`` defaults to the dataset's sample interval and must be an
    integer multiple of it (the label is looked up that many steps along the
    group's trajectory).
    """
    horizon = dataset.sample_interval if horizon_s is None else horizon_s
    steps = horizon / dataset.sample_interval
    if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
        raise DataError(
            f"label horizon {horizon} s must be a positive multiple of the sample interval "
            f"{dataset.sample_interval} s",
            module="features",
        )
    steps = int(round(steps))
    frame_by_time = {round(f.t, 9): f for f in dataset.frames}
    rows = []
    for traj in trajectories:
        for i in range(len(traj) - steps):
            t, group = traj.entries[i]
            label_group = traj.entries[i + steps][1]
            frame = frame_by_time[round(t, 9)]
            row = formation_features(
                group, frame, dataset.geometry, label_group, inverse_threshold=inverse_threshold
            )
            row["t_s"] = t
            row["group_id"] = group.group_id
            rows.append(row)
    df = pd.DataFrame(rows, columns=["t_s", "group_id", *FORMATION_COLUMNS, "label"])
    return df


def propagation_features(
    trajectory: GroupTrajectory,
    frames_by_time: dict[float, Frame],
    geometry: RoadGeometry,
    sample_interval: float,
    *,
    inverse_threshold: float = STATIC_INVERSE_THRESHOLD,
    strict_monotone: bool = False,
) -> dict[str, float]:
    """One propagation observation reducing a whole group trajectory.

    Cumulative ("cum") features are signed net changes, last frame minus
    first; "sum" features accumulate per-frame member counts.
    """
    per_frame = []
    for t, group in trajectory.entries:
        frame = frames_by_time[round(t, 9)]
        stats = _member_counts(group, frame, geometry)
        stats["risk"] = group_risk(group, inverse_threshold=inverse_threshold).risk
        per_frame.append(stats)

    avg_s = np.array([s["avg_s"] for s in per_frame])
    avg_a = np.array([s["avg_a"] for s in per_frame])
    sizes = np.array([s["size"] for s in per_frame], dtype=float)
    change = np.array([s["change_lane"] for s in per_frame], dtype=float)
    risks = np.array([s["risk"] for s in per_frame])

    return {
        "std_avg_s": float(avg_s.std()),
        "avg_avg_s": float(avg_s.mean()),
        "cum_avg_s": float(avg_s[-1] - avg_s[0]),
        "std_avg_a": float(avg_a.std()),
        "std_size": float(sizes.std()),
        "avg_size": float(sizes.mean()),
        "cum_size": float(sizes[-1] - sizes[0]),
        "avg_change_lane": float(change.mean()),
        "sum_change_lane": float(change.sum()),
        "sum_large_veh": float(sum(s["large_veh"] for s in per_frame)),
        "sum_on_ramp": float(sum(s["on_ramp"] for s in per_frame)),
        "sum_off_ramp": float(sum(s["off_ramp"] for s in per_frame)),
        "timespan_high_risk": float(sum(1 for r in risks if r > inverse_threshold) * sample_interval),
        "ini_risk": float(risks[0]),
        "max_risk": float(risks.max()),
        "avg_risk": float(risks.mean()),
        "label": int(
            trajectory_pattern(
                trajectory, inverse_threshold=inverse_threshold, strict_monotone=strict_monotone
            )
        ),
    }


def propagation_table(
    dataset: Dataset,
    trajectories: Sequence[GroupTrajectory],
    *,
    inverse_threshold: float = STATIC_INVERSE_THRESHOLD,
    strict_monotone: bool = False,
) -> pd.DataFrame:
    frames_by_time = {round(f.t, 9): f for f in dataset.frames}
    rows = []
    for traj in trajectories:
        row = propagation_features(
            traj,
            frames_by_time,
            dataset.geometry,
            dataset.sample_interval,
            inverse_threshold=inverse_threshold,
            strict_monotone=strict_monotone,
        )
        row["trajectory_id"] = traj.trajectory_id
        rows.append(row)
    return pd.DataFrame(rows, columns=["trajectory_id", *PROPAGATION_COLUMNS, "label"])


def write_feature_csv(path: str | Path, table: pd.DataFrame) -> None:
    table.to_csv(path, index=False, float_format="%.9g")


def read_feature_csv(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path)
    if "label" not in df.columns:
        raise DataError(f"feature table {path} has no label column", module="features")
    return df
