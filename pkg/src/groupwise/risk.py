"""Vehicle-group risk quantification, propagation patterns, and adaptive
density-conditioned TTC thresholds.

Group risk is the inverse of the smallest finite pair TTC within the group
(0 when no pair is closing); a group is high-risk when that inverse exceeds
the inverse-TTC threshold (1/1.5 per second under static thresholds).  The
count of pairs below the TTC threshold quantifies the spatial extent of the
risk, and its trend along a group trajectory defines the propagation pattern.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from . import ssm
from .errors import DataError, NumericError
from .types import Dataset, GroupRisk, GroupTrajectory, PropagationPattern, VehicleGroup

#: Static high-risk threshold in inverse-TTC space (1 / 1.5 s).
STATIC_INVERSE_THRESHOLD = 1.0 / 1.5


def group_risk(group: VehicleGroup, *, inverse_threshold: float = STATIC_INVERSE_THRESHOLD) -> GroupRisk:
    """Crash risk of one group: inverse of its smallest pair TTC.

    ``qty_high_risk`` counts the pairs whose TTC is below the threshold
    (equivalently, whose inverse TTC exceeds the inverse threshold), so the
    group is high-risk exactly when at least one pair counts.  A group formed
    under adaptive thresholds carries its own density-conditioned threshold,
    which takes precedence.
    """
    threshold = group.inv_threshold if group.inv_threshold is not None else inverse_threshold
    finite = [p.value for p in group.ttc_pairs if math.isfinite(p.value)]
    if not finite:
        return GroupRisk(risk=0.0, qty_high_risk=0, is_high=False)
    risk = 1.0 / min(finite)
    qty = sum(1 for v in finite if 1.0 / v > threshold)
    return GroupRisk(risk=risk, qty_high_risk=qty, is_high=risk > threshold)


def classify_pattern(q_sequence: Sequence[int], *, strict_monotone: bool = False) -> PropagationPattern:
    """Propagation pattern of a quantity-of-high-risk sequence (length >= 2).

    Constant sequences maintain; otherwise a monotone non-decreasing sequence
    with a net increase diffuses, a monotone non-increasing one with a net
    decrease dissipates, and everything else fluctuates.  With
    ``strict_monotone`` the monotone checks require strict steps.
    """
    q = list(q_sequence)
    if len(q) < 2:
        raise DataError("pattern classification needs at least two frames", module="risk-metrics")
    diffs = [b - a for a, b in zip(q, q[1:])]
    if all(d == 0 for d in diffs):
        return PropagationPattern.MAINTAINING
    if strict_monotone:
        rising = all(d > 0 for d in diffs)
        falling = all(d < 0 for d in diffs)
    else:
        rising = all(d >= 0 for d in diffs)
        falling = all(d <= 0 for d in diffs)
    if rising and q[-1] > q[0]:
        return PropagationPattern.DIFFUSION
    if falling and q[-1] < q[0]:
        return PropagationPattern.DISSIPATION
    return PropagationPattern.FLUCTUATION


def q_series(trajectory: GroupTrajectory, *, inverse_threshold: float = STATIC_INVERSE_THRESHOLD) -> list[int]:
    return [group_risk(g, inverse_threshold=inverse_threshold).qty_high_risk for g in trajectory.groups]


def risk_series(trajectory: GroupTrajectory, *, inverse_threshold: float = STATIC_INVERSE_THRESHOLD) -> list[GroupRisk]:
    return [group_risk(g, inverse_threshold=inverse_threshold) for g in trajectory.groups]


def trajectory_pattern(
    trajectory: GroupTrajectory,
    *,
    inverse_threshold: float = STATIC_INVERSE_THRESHOLD,
    strict_monotone: bool = False,
) -> PropagationPattern:
    return classify_pattern(q_series(trajectory, inverse_threshold=inverse_threshold), strict_monotone=strict_monotone)


def pattern_distribution(patterns: Sequence[PropagationPattern]) -> dict[str, int]:
    counts = {p.name.lower(): 0 for p in PropagationPattern}
    for p in patterns:
        counts[p.name.lower()] += 1
    return counts


def nearest_rank_percentile(values: np.ndarray, pct: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if len(values) == 0:
        raise NumericError("percentile of empty sample", module="risk-metrics")
    ordered = np.sort(values)
    k = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return float(ordered[k - 1])


class AdaptiveTtcThresholds(BaseEstimator):
    """Density-conditioned inverse-TTC percentile curves.

    Fitting pools every vehicle-pair inverse TTC (non-closing pairs count as
    zero) against the segment density of its frame, splits the observed
    density range into ``n_bins`` equal intervals, and takes the 97th and
    90th nearest-rank percentile of inverse TTC per bin.  Empty bins are
    filled by linear interpolation between their nearest non-empty
    neighbours; evaluation interpolates piecewise-linearly on bin centers and
    extends the edge values outside the observed range.

    The 97th-percentile curve drives in-lane grouping (and the high-risk
    threshold), the 90th-percentile curve drives adjacent-lane merging.
    """

    def __init__(self, n_bins: int = 100, clamp_scope: str = "projected"):
        self.n_bins = n_bins
        self.clamp_scope = clamp_scope

    def fit(self, dataset: Dataset, y=None):
        densities = []
        observations: list[tuple[float, float]] = []
        for frame in dataset.frames:
            if not frame.states:
                continue
            density = len(frame.states) / dataset.geometry.length
            densities.append(density)
            pairs = ssm.pair_ttcs(
                frame,
                {s.vehicle_id for s in frame.states},
                clamp_scope=self.clamp_scope,
                include_infinite=True,
            )
            for p in pairs:
                inv = 0.0 if math.isinf(p.value) else 1.0 / p.value
                observations.append((density, inv))
        if not observations:
            raise DataError("no vehicle pairs available to build adaptive thresholds", module="risk-metrics")

        dens = np.array([d for d, _ in observations])
        inv = np.array([v for _, v in observations])
        lo, hi = float(min(densities)), float(max(densities))
        if hi <= lo:
            raise DataError("adaptive thresholds require at least 2 non-empty density bins", module="risk-metrics")
        edges = np.linspace(lo, hi, self.n_bins + 1)
        idx = np.clip(np.searchsorted(edges, dens, side="right") - 1, 0, self.n_bins - 1)

        centers = (edges[:-1] + edges[1:]) / 2.0
        p97 = np.full(self.n_bins, np.nan)
        p90 = np.full(self.n_bins, np.nan)
        for b in range(self.n_bins):
            sample = inv[idx == b]
            if len(sample):
                p97[b] = nearest_rank_percentile(sample, 97.0)
                p90[b] = nearest_rank_percentile(sample, 90.0)
        filled = ~np.isnan(p97)
        if filled.sum() < 2:
            raise DataError("adaptive thresholds require at least 2 non-empty density bins", module="risk-metrics")

        self.bin_centers_ = centers
        self.p97_ = np.interp(centers, centers[filled], p97[filled])
        self.p90_ = np.interp(centers, centers[filled], p90[filled])
        self.density_range_ = (lo, hi)
        self.n_observations_ = len(observations)
        return self

    def _check_fitted(self):
        if not hasattr(self, "p97_"):
            raise NumericError("adaptive threshold map is not fitted", module="risk-metrics")

    def eval97(self, density: float) -> float:
        self._check_fitted()
        return float(np.interp(density, self.bin_centers_, self.p97_))

    def eval90(self, density: float) -> float:
        self._check_fitted()
        return float(np.interp(density, self.bin_centers_, self.p90_))

    def grouping_thresholds(self, density: float) -> tuple[float, float]:
        """(in-lane, cross-lane) TTC thresholds at a density; an inverse-TTC
        percentile of zero maps to an infinite TTC threshold."""
        inv97, inv90 = self.eval97(density), self.eval90(density)
        ttc_in = math.inf if inv97 <= 0 else 1.0 / inv97
        ttc_cross = math.inf if inv90 <= 0 else 1.0 / inv90
        return ttc_in, ttc_cross

    def to_frame(self) -> pd.DataFrame:
        self._check_fitted()
        return pd.DataFrame(
            {
                "density_veh_per_m": self.bin_centers_,
                "inv_ttc_p97": self.p97_,
                "inv_ttc_p90": self.p90_,
            }
        )

    def write_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.9g")


def adaptive_grouping_thresholds(thresholds: AdaptiveTtcThresholds, density: float) -> tuple[float, float]:
    """Functional wrapper around :meth:`AdaptiveTtcThresholds.grouping_thresholds`."""
    return thresholds.grouping_thresholds(density)


def group_size_stats(frame_groups: Sequence[Sequence[VehicleGroup]]) -> dict[str, float]:
    """Max and population standard deviation of group sizes over all frames."""
    sizes = np.array([g.size for groups in frame_groups for g in groups], dtype=float)
    if len(sizes) == 0:
        return {"max": 0.0, "std": 0.0}
    return {"max": float(sizes.max()), "std": float(sizes.std())}
