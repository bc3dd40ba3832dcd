"""Vehicle-group trajectory analytics: group segmentation and matching from
high-resolution trajectory data, TTC-based crash-risk quantification,
propagation-pattern classification, and risk formation/propagation models."""

from .errors import DataError, GroupwiseError, NumericError, OverlapError, UsageError
from .features import formation_features, formation_table, propagation_features, propagation_table
from .grouping import (
    GroupSegmenter,
    build_trajectories,
    match_groups,
    merge_adjacent,
    segment_frame,
    segment_lane,
)
from .ingest import downsample, parse_geometry, parse_trajectories, write_trajectories
from .modeling import (
    BinaryLogisticRegression,
    ModelFit,
    MultinomialLogisticRegression,
    PreprocessSpec,
    SelectionProtocol,
    auc_score,
    evaluate,
    evaluate_scores,
    fit_binary_logistic,
    fit_multinomial,
    preprocess,
    select_variables,
)
from .risk import (
    AdaptiveTtcThresholds,
    adaptive_grouping_thresholds,
    classify_pattern,
    group_risk,
    trajectory_pattern,
)
from .ssm import adverse_ttc, lane_change_projections, pair_ttcs, projected_ttc, ttc
from .synth import PlatoonSpec, ScenarioSpec, generate, parse_scenario, simulate
from .types import (
    TTC_CLAMP,
    AdverseParams,
    Dataset,
    Frame,
    GroupRisk,
    GroupTrajectory,
    PropagationPattern,
    RoadGeometry,
    TtcResult,
    VehicleGroup,
    VehicleState,
    VehicleType,
)

__version__ = "0.1.0"
