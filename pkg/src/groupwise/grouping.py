"""Vehicle-group segmentation within frames and matching across frames.

Segmentation is two-step: consecutive same-lane pairs couple when their
adverse-condition TTC falls below the in-lane threshold (1.5 s), and the
resulting chains merge across adjacent lanes whenever any cross-lane pair's
projected TTC falls below the cross-lane threshold (3 s).  Connected
components under the merge relation become the frame's vehicle groups;
ungrouped vehicles form singleton groups so every frame is partitioned.

Groups at consecutive timestamps are matched by head-vehicle continuity,
disambiguated by composition similarity (shared members over candidate
size).  Matched chains spanning at least two frames form group trajectories.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import ssm
from .errors import DataError, OverlapError
from .types import AdverseParams, Dataset, Frame, GroupTrajectory, VehicleGroup


class UnionFind:
    """Disjoint sets over integer items with path compression."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


def _lane_order(frame: Frame, lane_id: int):
    """States in one lane, foremost first; ties broken by vehicle id."""
    states = [s for s in frame.states if s.lane_id == lane_id]
    states.sort(key=lambda s: (-s.x, s.vehicle_id))
    return states


def segment_lane(
    frame: Frame,
    lane_id: int,
    params: AdverseParams = AdverseParams(),
    ttc_in: float = 1.5,
) -> list[list[str]]:
    """Chains of coupled vehicles within one lane, foremost member first.

    Consecutive pairs (by descending position) couple when the
    adverse-condition TTC is below ``ttc_in``; maximal coupled runs form
    chains and uncoupled vehicles are singleton chains.
    """
    states = _lane_order(frame, lane_id)
    if not states:
        return []
    chains: list[list[str]] = [[states[0].vehicle_id]]
    for lead, fol in zip(states, states[1:]):
        gap = lead.x - fol.x - lead.length
        if gap <= 0:
            raise OverlapError(
                f"overlapping vehicles {lead.vehicle_id}/{fol.vehicle_id} in lane {lane_id} at t={frame.t}",
                module="grouping",
            )
        disp_gap, disp_dv = ssm.adverse_displaced(lead, fol, params)
        if ssm.links_within(disp_gap, disp_dv, ttc_in):
            chains[-1].append(fol.vehicle_id)
        else:
            chains.append([fol.vehicle_id])
    return chains


def _cross_links(frame: Frame, ttc_cross: float):
    """Adjacent-lane vehicle pairs whose projected TTC couples them.

    Yields (vehicle_id_a, vehicle_id_b) for every adjacent-lane pair whose
    projected headway over closing speed is below ``ttc_cross`` (a closing
    overlap always couples).  Screening is windowed on position so dense
    frames stay near-linear.
    """
    if ttc_cross <= 0:
        return []
    by_lane: dict[int, list] = {}
    for s in frame.states:
        by_lane.setdefault(s.lane_id, []).append(s)
    links = []
    for lane in sorted(by_lane):
        if lane + 1 not in by_lane:
            continue
        a_states = sorted(by_lane[lane], key=lambda s: s.x)
        b_states = sorted(by_lane[lane + 1], key=lambda s: s.x)
        ax = np.array([s.x for s in a_states])
        bx = np.array([s.x for s in b_states])
        av = np.array([s.v for s in a_states])
        bv = np.array([s.v for s in b_states])
        ad = np.array([s.length for s in a_states])
        bd = np.array([s.length for s in b_states])
        if np.isinf(ttc_cross):
            window = np.inf
        else:
            vmax = max(av.max(initial=0.0), bv.max(initial=0.0))
            window = ttc_cross * vmax + max(ad.max(initial=0.0), bd.max(initial=0.0))
        lo = np.searchsorted(bx, ax - window)
        hi = np.searchsorted(bx, ax + window, side="right")
        counts = hi - lo
        if counts.sum() == 0:
            continue
        ia = np.repeat(np.arange(len(a_states)), counts)
        ib = np.concatenate([np.arange(l, h) for l, h in zip(lo, hi)]) if counts.sum() else np.array([], dtype=int)
        a_leads = ax[ia] >= bx[ib]
        gap = np.where(a_leads, ax[ia] - bx[ib] - ad[ia], bx[ib] - ax[ia] - bd[ib])
        dv = np.where(a_leads, bv[ib] - av[ia], av[ia] - bv[ib])
        closing = dv > 0
        if np.isinf(ttc_cross):
            linked = closing
        else:
            linked = closing & (gap < ttc_cross * dv)
        for i, j in zip(ia[np.flatnonzero(linked)], ib[np.flatnonzero(linked)]):
            links.append((a_states[int(i)].vehicle_id, b_states[int(j)].vehicle_id))
    return links


def merge_adjacent(
    frame: Frame,
    chains: Sequence[Sequence[str]],
    ttc_cross: float = 3.0,
) -> list[list[str]]:
    """Union in-lane chains whose members couple across adjacent lanes.

    Returns the member lists of the connected components (transitive closure
    of the cross-lane coupling relation over chains).
    """
    chain_of: dict[str, int] = {}
    for ci, chain in enumerate(chains):
        for vid in chain:
            if vid in chain_of:
                raise DataError(f"vehicle {vid} appears in two chains", module="grouping")
            chain_of[vid] = ci
    uf = UnionFind(len(chains))
    for u, w in _cross_links(frame, ttc_cross):
        uf.union(chain_of[u], chain_of[w])
    components: dict[int, list[str]] = {}
    for ci, chain in enumerate(chains):
        components.setdefault(uf.find(ci), []).extend(chain)
    return [sorted(members) for members in components.values()]


def _make_groups(
    frame: Frame,
    member_sets: list[list[str]],
    *,
    clamp_scope: str,
    attach_pairs: bool,
    clamp_value: float,
) -> list[VehicleGroup]:
    state_of = {s.vehicle_id: s for s in frame.states}
    groups = []
    for members in member_sets:
        heads: dict[int, str] = {}
        for vid in members:
            s = state_of[vid]
            cur = heads.get(s.lane_id)
            if cur is None or (s.x, vid) > (state_of[cur].x, cur):
                heads[s.lane_id] = vid
        groups.append(
            VehicleGroup(
                group_id="",
                t=frame.t,
                members=frozenset(members),
                head_vehicles=heads,
                ttc_pairs=(
                    ssm.pair_ttcs(frame, set(members), clamp_scope=clamp_scope, clamp_value=clamp_value)
                    if attach_pairs
                    else ()
                ),
            )
        )
    groups.sort(key=lambda g: (-max(state_of[v].x for v in g.members), min(g.members)))
    for k, g in enumerate(groups):
        g.group_id = f"t{frame.t:.3f}.g{k:03d}"
    return groups


def segment_frame(
    frame: Frame,
    *,
    ttc_in: float = 1.5,
    ttc_cross: float = 3.0,
    params: AdverseParams = AdverseParams(),
    clamp_scope: str = "projected",
    attach_pairs: bool = True,
    clamp_value: float = ssm.TTC_CLAMP,
) -> list[VehicleGroup]:
    """Segment one frame into vehicle groups (in-lane chains, then cross-lane
    merging); the returned groups partition the frame's vehicles."""
    lanes = sorted({s.lane_id for s in frame.states})
    chains: list[list[str]] = []
    for lane in lanes:
        chains.extend(segment_lane(frame, lane, params, ttc_in))
    merged = merge_adjacent(frame, chains, ttc_cross)
    return _make_groups(
        frame, merged, clamp_scope=clamp_scope, attach_pairs=attach_pairs, clamp_value=clamp_value
    )


class GroupSegmenter(BaseEstimator):
    """Frame-by-frame vehicle-group segmentation with fixed or adaptive
    TTC thresholds.

    Parameters follow the scikit-learn convention so the segmenter can be
    cloned and configured through ``get_params`` / ``set_params``.  With
    ``adaptive`` set to a fitted :class:`~groupwise.risk.AdaptiveTtcThresholds`,
    the in-lane and cross-lane thresholds are looked up per frame from the
    segment density.
    """

    def __init__(
        self,
        ttc_in: float = 1.5,
        ttc_cross: float = 3.0,
        adverse_decel: float = 3.0,
        adverse_duration: float = 1.0,
        clamp_scope: str = "projected",
        adaptive=None,
        attach_pairs: bool = True,
        clamp_value: float = ssm.TTC_CLAMP,
    ):
        self.ttc_in = ttc_in
        self.ttc_cross = ttc_cross
        self.adverse_decel = adverse_decel
        self.adverse_duration = adverse_duration
        self.clamp_scope = clamp_scope
        self.adaptive = adaptive
        self.attach_pairs = attach_pairs
        self.clamp_value = clamp_value

    def fit(self, X=None, y=None):
        return self

    def _params(self) -> AdverseParams:
        return AdverseParams(decel=self.adverse_decel, duration=self.adverse_duration)

    def thresholds_for(self, frame: Frame, geometry=None) -> tuple[float, float]:
        if self.adaptive is None:
            return self.ttc_in, self.ttc_cross
        if geometry is None:
            raise DataError("adaptive thresholds require road geometry", module="grouping")
        density = len(frame.states) / geometry.length
        ttc_in, ttc_cross = self.adaptive.grouping_thresholds(density)
        # A zero inverse-TTC percentile (guarded to +inf) means the density
        # regime exhibits no risk: coupling is disabled there, not unbounded.
        return (
            0.0 if math.isinf(ttc_in) else ttc_in,
            0.0 if math.isinf(ttc_cross) else ttc_cross,
        )

    def high_risk_inverse_threshold(self, frame: Frame, geometry=None) -> float:
        """Inverse-TTC threshold above which a group counts as high risk."""
        if self.adaptive is None:
            return 1.0 / 1.5
        if geometry is None:
            raise DataError("adaptive thresholds require road geometry", module="grouping")
        return self.adaptive.eval97(len(frame.states) / geometry.length)

    def segment(self, frame: Frame, geometry=None) -> list[VehicleGroup]:
        ttc_in, ttc_cross = self.thresholds_for(frame, geometry)
        groups = segment_frame(
            frame,
            ttc_in=ttc_in,
            ttc_cross=ttc_cross,
            params=self._params(),
            clamp_scope=self.clamp_scope,
            attach_pairs=self.attach_pairs,
            clamp_value=self.clamp_value,
        )
        if self.adaptive is not None:
            inv_thr = self.high_risk_inverse_threshold(frame, geometry)
            for g in groups:
                g.inv_threshold = inv_thr
        return groups

    def transform(self, dataset: Dataset) -> list[list[VehicleGroup]]:
        return [self.segment(frame, dataset.geometry) for frame in dataset.frames]


def match_groups(
    groups_prev: Sequence[VehicleGroup], groups_next: Sequence[VehicleGroup]
) -> dict[str, str]:
    """One-to-one matching of groups across consecutive frames.

    Candidate pairs share at least one head vehicle; among candidates the
    similarity ``|shared members| / |next group|`` decides, with ties broken
    by larger raw intersection and then by the smallest vehicle id in the
    candidate.  Conflicts are resolved greedily by descending similarity, so
    every group has at most one predecessor and one successor.
    """
    candidates = []
    for g in groups_prev:
        for h in groups_next:
            if not g.head_set & h.head_set:
                continue
            inter = len(g.members & h.members)
            sim = inter / len(h.members)
            candidates.append((-sim, -inter, min(h.members), min(g.members), g.group_id, h.group_id))
    candidates.sort()
    matched: dict[str, str] = {}
    used_next: set[str] = set()
    for _, _, _, _, gid, hid in candidates:
        if gid in matched or hid in used_next:
            continue
        matched[gid] = hid
        used_next.add(hid)
    return matched


def build_trajectories(
    dataset: Dataset,
    segmenter: GroupSegmenter | None = None,
    frame_groups: Sequence[Sequence[VehicleGroup]] | None = None,
) -> tuple[list[list[VehicleGroup]], list[GroupTrajectory]]:
    """Segment every frame, match consecutive frames, and chain the matches.

    Returns the per-frame groups together with the maximal matched chains
    spanning at least two frames.  Every group belongs to at most one
    trajectory.
    """
    if frame_groups is None:
        segmenter = segmenter or GroupSegmenter()
        frame_groups = segmenter.transform(dataset)
    frame_groups = [list(groups) for groups in frame_groups]

    successor: dict[str, VehicleGroup] = {}
    has_pred: set[str] = set()
    index: dict[str, VehicleGroup] = {g.group_id: g for groups in frame_groups for g in groups}
    for prev, nxt in zip(frame_groups, frame_groups[1:]):
        for gid, hid in match_groups(prev, nxt).items():
            successor[gid] = index[hid]
            has_pred.add(hid)

    trajectories: list[GroupTrajectory] = []
    count = 0
    for groups in frame_groups:
        for g in groups:
            if g.group_id in has_pred:
                continue
            chain = [g]
            while chain[-1].group_id in successor:
                chain.append(successor[chain[-1].group_id])
            if len(chain) >= 2:
                trajectories.append(
                    GroupTrajectory(
                        trajectory_id=f"traj{count:05d}",
                        entries=tuple((grp.t, grp) for grp in chain),
                    )
                )
                count += 1
    return frame_groups, trajectories


def write_groups_dump(path: str | Path, dataset: Dataset, frame_groups: Sequence[Sequence[VehicleGroup]]) -> None:
    """Group membership dump: ``t_s,group_id,vehicle_id,is_head,lane_id``."""
    rows = ["t_s,group_id,vehicle_id,is_head,lane_id"]
    for frame, groups in zip(dataset.frames, frame_groups):
        lane_of = {s.vehicle_id: s.lane_id for s in frame.states}
        for g in groups:
            heads = g.head_set
            for vid in sorted(g.members):
                rows.append(f"{frame.t!r},{g.group_id},{vid},{int(vid in heads)},{lane_of[vid]}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_trajectory_table(path: str | Path, trajectories: Sequence[GroupTrajectory]) -> None:
    """Trajectory membership table: ``trajectory_id,t_s,group_id``."""
    rows = ["trajectory_id,t_s,group_id"]
    for traj in trajectories:
        for t, g in traj.entries:
            rows.append(f"{traj.trajectory_id},{t!r},{g.group_id}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
