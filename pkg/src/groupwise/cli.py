"""Command-line interface.

Subcommands run individual stages on prior artifacts (``ingest``, ``group``,
``risk``, ``features``, ``fit-formation``, ``fit-propagation``,
``adaptive-ttc``, ``synth``); ``analyze`` chains the whole pipeline from a
raw trajectory CSV to fitted-model reports.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric error.  The
``GROUPWISE_SEED`` environment variable overrides the configured seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import features as feat
from . import grouping, ingest, modeling, risk, ssm, synth
from .errors import DataError, GroupwiseError, NumericError, UsageError
from .kvfile import read_kv
from .types import Dataset, GroupTrajectory, PropagationPattern, VehicleGroup

PATTERN_NAMES = {int(p): p.name.lower() for p in PropagationPattern}


@dataclass
class RunConfig:
    """Everything a pipeline run needs; every field has a config-file key
    and a CLI flag of the same name."""

    input: str = ""
    geometry: str = ""
    out: str = "out"
    intervals: tuple[float, ...] = (5.0, 2.0, 1.0)
    thresholds: str = "static"
    ttc_in: float = 1.5
    ttc_cross: float = 3.0
    risk_ttc: float = 1.5
    adverse_decel: float = 3.0
    adverse_duration: float = 1.0
    clamp_scope: str = "projected"
    ttc_clamp: float | str = 1.25
    strict_monotone: bool = False
    threshold_build_interval: float = 2.0
    winsor_lo: float = 1.0
    winsor_hi: float = 99.0
    balance_ratio: float = 4.0
    train_fraction: float = 0.7
    class_threshold: float = 0.5
    discretize_bins: int = 0
    equalize: bool = True
    seed: int = 0
    jobs: int = 1

    def echo(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f.name] = list(val) if isinstance(val, tuple) else val
        return out


_CONFIG_PARSERS = {
    "input": str,
    "geometry": str,
    "out": str,
    "intervals": lambda v: tuple(float(x) for x in v.split(";") if x.strip()),
    "thresholds": str,
    "ttc_in": float,
    "ttc_cross": float,
    "risk_ttc": float,
    "adverse_decel": float,
    "adverse_duration": float,
    "clamp_scope": str,
    "ttc_clamp": lambda v: "auto" if v.strip().lower() == "auto" else float(v),
    "strict_monotone": lambda v: v.lower() in ("1", "true", "yes"),
    "threshold_build_interval": float,
    "winsor_lo": float,
    "winsor_hi": float,
    "balance_ratio": float,
    "train_fraction": float,
    "class_threshold": float,
    "discretize_bins": int,
    "equalize": lambda v: v.lower() in ("1", "true", "yes"),
    "seed": int,
    "jobs": int,
}


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        for key, value in read_kv(path).items():
            if key not in _CONFIG_PARSERS:
                raise UsageError(f"unknown config key {key!r}")
            cfg = replace(cfg, **{key: _CONFIG_PARSERS[key](value)})
    if overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    env_seed = os.environ.get("GROUPWISE_SEED")
    if env_seed is not None:
        try:
            cfg = replace(cfg, seed=int(env_seed))
        except ValueError as exc:
            raise UsageError(f"GROUPWISE_SEED must be an integer, got {env_seed!r}") from exc
    return cfg


# ---------------------------------------------------------------------------
# Artifact I/O
# ---------------------------------------------------------------------------

def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise DataError(f"missing upstream artifact {path} (produce it with `groupwise {producer}`)", module="cli")
    return path


def _interval_tag(interval: float) -> str:
    return f"{interval:g}s"


def load_dataset(data_csv: str | Path, geometry_cfg: str | Path, interval: float) -> Dataset:
    geometry = ingest.parse_geometry(geometry_cfg)
    raw = ingest.parse_trajectories(data_csv, geometry)
    return ingest.downsample(raw, interval)


def _segmenter(cfg: RunConfig, adaptive=None, clamp_value: float | None = None) -> grouping.GroupSegmenter:
    if clamp_value is None:
        clamp_value = cfg.ttc_clamp if isinstance(cfg.ttc_clamp, float) else ssm.TTC_CLAMP
    return grouping.GroupSegmenter(
        ttc_in=cfg.ttc_in,
        ttc_cross=cfg.ttc_cross,
        adverse_decel=cfg.adverse_decel,
        adverse_duration=cfg.adverse_duration,
        clamp_scope=cfg.clamp_scope,
        adaptive=adaptive,
        clamp_value=clamp_value,
    )


def _segment_dataset(dataset: Dataset, segmenter: grouping.GroupSegmenter, jobs: int = 1):
    if jobs <= 1:
        return segmenter.transform(dataset)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda f: segmenter.segment(f, dataset.geometry), dataset.frames))


def load_groups_dump(path: str | Path, dataset: Dataset, cfg: RunConfig) -> list[list[VehicleGroup]]:
    """Rebuild per-frame groups from a dump, recomputing pair TTCs."""
    df = pd.read_csv(path)
    needed = {"t_s", "group_id", "vehicle_id", "is_head", "lane_id"}
    if not needed <= set(df.columns):
        raise DataError(f"groups dump {path} missing columns {sorted(needed - set(df.columns))}", module="cli")
    by_frame: dict[float, dict[str, list[str]]] = {}
    for t, gid, vid in zip(df["t_s"], df["group_id"], df["vehicle_id"]):
        by_frame.setdefault(round(float(t), 9), {}).setdefault(str(gid), []).append(str(vid))
    frame_groups = []
    state_index = {}
    for frame in dataset.frames:
        state_index = {s.vehicle_id: s for s in frame.states}
        groups = []
        for gid in sorted(by_frame.get(round(frame.t, 9), {})):
            members = by_frame[round(frame.t, 9)][gid]
            heads: dict[int, str] = {}
            for vid in members:
                s = state_index[vid]
                cur = heads.get(s.lane_id)
                if cur is None or (s.x, vid) > (state_index[cur].x, cur):
                    heads[s.lane_id] = vid
            clamp_value = cfg.ttc_clamp if isinstance(cfg.ttc_clamp, float) else ssm.TTC_CLAMP
            groups.append(
                VehicleGroup(
                    group_id=gid,
                    t=frame.t,
                    members=frozenset(members),
                    head_vehicles=heads,
                    ttc_pairs=ssm.pair_ttcs(
                        frame, set(members), clamp_scope=cfg.clamp_scope, clamp_value=clamp_value
                    ),
                )
            )
        frame_groups.append(groups)
    return frame_groups


def load_trajectory_table(path: str | Path, frame_groups) -> list[GroupTrajectory]:
    df = pd.read_csv(path)
    index = {g.group_id: g for groups in frame_groups for g in groups}
    trajectories = []
    for tid, sub in df.groupby("trajectory_id", sort=True):
        entries = []
        for _, row in sub.iterrows():
            group = index.get(str(row["group_id"]))
            if group is None:
                raise DataError(f"trajectory table references unknown group {row['group_id']}", module="cli")
            entries.append((float(row["t_s"]), group))
        entries.sort(key=lambda e: e[0])
        trajectories.append(GroupTrajectory(trajectory_id=str(tid), entries=tuple(entries)))
    return trajectories


def write_risk_table(path: Path, frame_groups, inverse_threshold: float) -> None:
    rows = ["t_s,group_id,risk_per_s,qty_high_risk,is_high"]
    for groups in frame_groups:
        for g in groups:
            gr = risk.group_risk(g, inverse_threshold=inverse_threshold)
            rows.append(f"{g.t!r},{g.group_id},{gr.risk:.9g},{gr.qty_high_risk},{int(gr.is_high)}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_patterns(path: Path, trajectories, inverse_threshold: float, strict: bool) -> None:
    rows = ["trajectory_id,n_frames,pattern,pattern_name"]
    for traj in trajectories:
        p = risk.trajectory_pattern(traj, inverse_threshold=inverse_threshold, strict_monotone=strict)
        rows.append(f"{traj.trajectory_id},{len(traj)},{int(p)},{p.name.lower()}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Model fitting helpers
# ---------------------------------------------------------------------------

def fit_formation_table(table: pd.DataFrame, cfg: RunConfig, target_size: int | None = None) -> modeling.ModelFit:
    spec = modeling.PreprocessSpec(
        winsor_lo=cfg.winsor_lo,
        winsor_hi=cfg.winsor_hi,
        balance_ratio=cfg.balance_ratio or None,
        train_fraction=cfg.train_fraction,
        seed=cfg.seed,
        discretize_bins=cfg.discretize_bins or None,
    )
    prep = modeling.preprocess(table, spec, target_size=target_size)
    survivors, trace = modeling.select_variables(
        prep.X_train, prep.y_train, prep.feature_names
    )
    idx = [prep.feature_names.index(n) for n in survivors]
    fit = modeling.fit_binary_logistic(prep.X_train[:, idx], prep.y_train, survivors)
    fit.selection_trace = trace
    fit.seed = cfg.seed
    fit.metrics = {
        "training": modeling.evaluate(fit.model, prep.X_train[:, idx], prep.y_train, cfg.class_threshold),
        "validation": modeling.evaluate(fit.model, prep.X_val[:, idx], prep.y_val, cfg.class_threshold),
    }
    fit.config = {"preprocess": prep.info}
    return fit


def fit_propagation_table(table: pd.DataFrame, cfg: RunConfig) -> modeling.ModelFit:
    spec = modeling.PreprocessSpec(
        winsor_lo=cfg.winsor_lo,
        winsor_hi=cfg.winsor_hi,
        balance_ratio=None,  # the propagation protocol skips class down-sampling
        train_fraction=cfg.train_fraction,
        seed=cfg.seed,
        discretize_bins=cfg.discretize_bins or None,
    )
    prep = modeling.preprocess(table, spec)
    fit = modeling.fit_multinomial(
        prep.X_train, prep.y_train, prep.feature_names, class_names=PATTERN_NAMES
    )
    fit.seed = cfg.seed
    pred_train = fit.model.predict(prep.X_train)
    pred_val = fit.model.predict(prep.X_val)
    fit.metrics = {
        "training": {"ACC": float(np.mean(pred_train == prep.y_train))},
        "validation": {"ACC": float(np.mean(pred_val == prep.y_val))},
    }
    fit.config = {"preprocess": prep.info, "reference_pattern": "dissipation (0)"}
    return fit


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

class _Artifacts:
    """Tracks files written by a run so failures can clean up."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.paths: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.paths.append(p)
        return p

    def discard_all(self) -> None:
        for p in self.paths:
            if p.exists():
                p.unlink()


def run_pipeline(cfg: RunConfig) -> dict[str, object]:
    """Run the full analysis chain and write every artifact to ``cfg.out``.

    Returns a summary dict with validation metrics per interval.
    """
    if not cfg.input or not cfg.geometry:
        raise UsageError("analyze requires --input and --geometry")
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    art = _Artifacts(out_dir)
    try:
        return _run_pipeline_inner(cfg, art)
    except Exception:
        art.discard_all()
        raise


def _run_pipeline_inner(cfg: RunConfig, art: _Artifacts) -> dict[str, object]:
    geometry = ingest.parse_geometry(cfg.geometry)
    raw = ingest.parse_trajectories(cfg.input, geometry)

    clamp_value: float | None = None
    if cfg.ttc_clamp == "auto":
        calib_ds = ingest.downsample(raw, cfg.threshold_build_interval)
        clamp_value = ssm.compute_ttc_clamp(calib_ds.frames)

    adaptive_map = None
    if cfg.thresholds == "adaptive":
        build_ds = ingest.downsample(raw, cfg.threshold_build_interval)
        adaptive_map = risk.AdaptiveTtcThresholds(clamp_scope=cfg.clamp_scope).fit(build_ds)
        adaptive_map.write_csv(art.path("adaptive_thresholds.csv"))
    elif cfg.thresholds != "static":
        raise UsageError(f"unknown threshold mode {cfg.thresholds!r}")

    inverse_threshold = 1.0 / cfg.risk_ttc
    per_interval: dict[float, dict] = {}
    size_rows = []
    for interval in cfg.intervals:
        tag = _interval_tag(interval)
        dataset = ingest.downsample(raw, interval)
        static_seg = _segmenter(cfg, clamp_value=clamp_value)
        static_groups = _segment_dataset(dataset, static_seg, cfg.jobs)
        if adaptive_map is not None:
            seg = _segmenter(cfg, adaptive=adaptive_map, clamp_value=clamp_value)
            frame_groups = _segment_dataset(dataset, seg, cfg.jobs)
        else:
            seg = static_seg
            frame_groups = static_groups
        size_rows.append(
            {
                "interval_s": interval,
                "static": risk.group_size_stats(static_groups),
                "adaptive": risk.group_size_stats(frame_groups) if adaptive_map is not None else None,
            }
        )

        frame_groups, trajectories = grouping.build_trajectories(dataset, frame_groups=frame_groups)
        grouping.write_groups_dump(art.path(f"groups_{tag}.csv"), dataset, frame_groups)
        grouping.write_trajectory_table(art.path(f"trajectories_{tag}.csv"), trajectories)
        write_risk_table(art.path(f"risks_{tag}.csv"), frame_groups, inverse_threshold)
        write_patterns(art.path(f"patterns_{tag}.csv"), trajectories, inverse_threshold, cfg.strict_monotone)

        formation = feat.formation_table(dataset, trajectories, inverse_threshold=inverse_threshold)
        propagation = feat.propagation_table(
            dataset, trajectories, inverse_threshold=inverse_threshold, strict_monotone=cfg.strict_monotone
        )
        feat.write_feature_csv(art.path(f"formation_{tag}.csv"), formation)
        feat.write_feature_csv(art.path(f"propagation_{tag}.csv"), propagation)
        patterns = [
            risk.trajectory_pattern(t, inverse_threshold=inverse_threshold, strict_monotone=cfg.strict_monotone)
            for t in trajectories
        ]
        per_interval[interval] = {
            "formation": formation,
            "propagation": propagation,
            "pattern_distribution": risk.pattern_distribution(patterns),
        }

    # Equalize formation sample sizes across intervals before fitting.
    target_size = None
    if cfg.equalize and len(cfg.intervals) > 1:
        balanced_sizes = []
        for interval in cfg.intervals:
            spec = modeling.PreprocessSpec(
                winsor_lo=cfg.winsor_lo,
                winsor_hi=cfg.winsor_hi,
                balance_ratio=cfg.balance_ratio or None,
                train_fraction=cfg.train_fraction,
                seed=cfg.seed,
            )
            balanced_sizes.append(
                modeling.preprocess(per_interval[interval]["formation"], spec).info["rows_used"]
            )
        target_size = int(min(balanced_sizes))

    summary: dict[str, object] = {"intervals": {}, "config": cfg.echo()}
    summary["resolved_ttc_clamp_s"] = clamp_value if clamp_value is not None else (
        cfg.ttc_clamp if isinstance(cfg.ttc_clamp, float) else ssm.TTC_CLAMP
    )
    for interval in cfg.intervals:
        tag = _interval_tag(interval)
        formation_fit = fit_formation_table(per_interval[interval]["formation"], cfg, target_size)
        title = f"Formation model (prediction interval {tag})"
        formation_fit.config["run"] = cfg.echo()
        art.path(f"formation_model_{tag}.txt").write_text(
            modeling.fit_report_text(formation_fit, title), encoding="utf-8"
        )
        art.path(f"formation_model_{tag}.json").write_text(
            modeling.fit_report_json(formation_fit, title), encoding="utf-8"
        )

        prop_table = per_interval[interval]["propagation"]
        entry: dict[str, object] = {
            "formation_validation": formation_fit.metrics["validation"],
            "pattern_distribution": per_interval[interval]["pattern_distribution"],
        }
        try:
            propagation_fit = fit_propagation_table(prop_table, cfg)
            title = f"Propagation model (interval {tag})"
            propagation_fit.config["run"] = cfg.echo()
            art.path(f"propagation_model_{tag}.txt").write_text(
                modeling.fit_report_text(propagation_fit, title), encoding="utf-8"
            )
            art.path(f"propagation_model_{tag}.json").write_text(
                modeling.fit_report_json(propagation_fit, title), encoding="utf-8"
            )
            entry["propagation_validation"] = propagation_fit.metrics["validation"]
        except (DataError, NumericError) as exc:
            entry["propagation_skipped"] = str(exc)
        summary["intervals"][tag] = entry

    dist_payload = {
        _interval_tag(i): per_interval[i]["pattern_distribution"] for i in cfg.intervals
    }
    art.path("pattern_distribution.json").write_text(
        json.dumps(dist_payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_size_comparison(art.path("group_size_comparison.csv"), size_rows)
    art.path("run_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8"
    )
    return summary


def _write_size_comparison(path: Path, size_rows) -> None:
    lines = ["interval_s,metric,static_ttc_threshold,adaptive_ttc_threshold"]
    for row in size_rows:
        adaptive = row["adaptive"]
        for metric in ("max", "std"):
            a_val = "" if adaptive is None else f"{adaptive[metric]:.9g}"
            lines.append(f"{row['interval_s']:g},{metric},{row['static'][metric]:.9g},{a_val}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="run config file (flat key-value)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="groupwise", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest", help="parse and down-sample a trajectory CSV")
    p.add_argument("--input", "--in", dest="input", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--interval", type=float, required=True)
    p.add_argument("--out", required=True, help="output dataset CSV")

    p = sub.add_parser("group", help="segment and match vehicle groups")
    p.add_argument("--input", "--in", dest="input", required=True, help="trajectory CSV (raw or dataset)")
    p.add_argument("--geometry", required=True)
    p.add_argument("--interval", type=float, required=True)
    _add_common(p)

    p = sub.add_parser("risk", help="quantify group risk from a groups dump")
    p.add_argument("--input", "--in", dest="input", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--interval", type=float, required=True)
    p.add_argument("--groups", required=True, help="groups dump from `group`")
    p.add_argument("--trajectories", required=True, help="trajectory table from `group`")
    p.add_argument("--strict-monotone", action="store_true", default=None)
    _add_common(p)

    p = sub.add_parser("features", help="extract formation/propagation features")
    p.add_argument("--input", "--in", dest="input", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--interval", type=float, required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--strict-monotone", action="store_true", default=None)
    _add_common(p)

    p = sub.add_parser("fit-formation", help="fit the binary risk-formation model")
    p.add_argument("--features", required=True, help="formation feature CSV")
    _add_common(p)

    p = sub.add_parser("fit-propagation", help="fit the multinomial propagation model")
    p.add_argument("--features", required=True, help="propagation feature CSV")
    _add_common(p)

    p = sub.add_parser("adaptive-ttc", help="build density-adaptive TTC thresholds")
    p.add_argument("--input", "--in", dest="input", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--interval", type=float, default=2.0, help="build interval (default 2 s = 0.5 Hz)")
    _add_common(p)

    p = sub.add_parser("analyze", help="run the full pipeline")
    p.add_argument("--input", "--in", dest="input", default=None)
    p.add_argument("--geometry", default=None)
    p.add_argument("--interval", type=float, action="append", dest="intervals", default=None)
    p.add_argument("--thresholds", choices=("static", "adaptive"), default=None)
    p.add_argument("--strict-monotone", action="store_true", default=None,
                   help="classify patterns with strict monotonicity")
    p.add_argument("--clamp-scope", choices=("projected", "all"), default=None,
                   help="clamp negative TTCs for projections only, or for all pairs")
    p.add_argument("--ttc-clamp", default=None,
                   help="clamp value in seconds, or 'auto' to calibrate the 5th TTC percentile from the data")
    p.add_argument("--jobs", type=int, default=None)
    _add_common(p)
    return parser


def _cfg_from_args(args, extra: dict | None = None) -> RunConfig:
    overrides = dict(extra or {})
    for key in ("input", "geometry", "out", "seed", "thresholds", "jobs", "strict_monotone", "clamp_scope"):
        if hasattr(args, key) and getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if getattr(args, "intervals", None):
        overrides["intervals"] = tuple(args.intervals)
    if getattr(args, "ttc_clamp", None) is not None:
        overrides["ttc_clamp"] = _CONFIG_PARSERS["ttc_clamp"](args.ttc_clamp)
    return load_config(getattr(args, "config", None), overrides)


def _cmd_synth(args) -> int:
    spec = synth.parse_scenario(args.spec)
    paths = synth.generate(spec, args.out)
    print("\n".join(f"{k}: {v}" for k, v in sorted(paths.items())))
    return 0


def _cmd_ingest(args) -> int:
    geometry = ingest.parse_geometry(args.geometry)
    raw = ingest.parse_trajectories(args.input, geometry)
    dataset = ingest.downsample(raw, args.interval)
    ingest.write_trajectories(args.out, dataset)
    print(f"dataset: {args.out} ({len(dataset)} frames at {args.interval:g} s)")
    return 0


def _cmd_group(args) -> int:
    cfg = _cfg_from_args(args)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(args.input, args.geometry, args.interval)
    frame_groups, trajectories = grouping.build_trajectories(dataset, _segmenter(cfg))
    tag = _interval_tag(args.interval)
    grouping.write_groups_dump(out_dir / f"groups_{tag}.csv", dataset, frame_groups)
    grouping.write_trajectory_table(out_dir / f"trajectories_{tag}.csv", trajectories)
    print(f"groups: {out_dir / f'groups_{tag}.csv'}")
    print(f"trajectories: {out_dir / f'trajectories_{tag}.csv'} ({len(trajectories)} chains)")
    return 0


def _cmd_risk(args) -> int:
    cfg = _cfg_from_args(args)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(args.input, args.geometry, args.interval)
    frame_groups = load_groups_dump(_require(Path(args.groups), "group"), dataset, cfg)
    trajectories = load_trajectory_table(_require(Path(args.trajectories), "group"), frame_groups)
    tag = _interval_tag(args.interval)
    inverse_threshold = 1.0 / cfg.risk_ttc
    write_risk_table(out_dir / f"risks_{tag}.csv", frame_groups, inverse_threshold)
    write_patterns(out_dir / f"patterns_{tag}.csv", trajectories, inverse_threshold, cfg.strict_monotone)
    patterns = [
        risk.trajectory_pattern(t, inverse_threshold=inverse_threshold, strict_monotone=cfg.strict_monotone)
        for t in trajectories
    ]
    dist = risk.pattern_distribution(patterns)
    (out_dir / "pattern_distribution.json").write_text(
        json.dumps({tag: dist}, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"risks: {out_dir / f'risks_{tag}.csv'}")
    print(f"patterns: {out_dir / f'patterns_{tag}.csv'} ({dist})")
    return 0


def _cmd_features(args) -> int:
    cfg = _cfg_from_args(args)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(args.input, args.geometry, args.interval)
    frame_groups = load_groups_dump(_require(Path(args.groups), "group"), dataset, cfg)
    trajectories = load_trajectory_table(_require(Path(args.trajectories), "group"), frame_groups)
    inverse_threshold = 1.0 / cfg.risk_ttc
    tag = _interval_tag(args.interval)
    formation = feat.formation_table(dataset, trajectories, inverse_threshold=inverse_threshold)
    propagation = feat.propagation_table(
        dataset, trajectories, inverse_threshold=inverse_threshold, strict_monotone=cfg.strict_monotone
    )
    feat.write_feature_csv(out_dir / f"formation_{tag}.csv", formation)
    feat.write_feature_csv(out_dir / f"propagation_{tag}.csv", propagation)
    print(f"formation: {out_dir / f'formation_{tag}.csv'} ({len(formation)} rows)")
    print(f"propagation: {out_dir / f'propagation_{tag}.csv'} ({len(propagation)} rows)")
    return 0


def _cmd_fit_formation(args) -> int:
    cfg = _cfg_from_args(args)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = feat.read_feature_csv(_require(Path(args.features), "features"))
    fit = fit_formation_table(table, cfg)
    fit.config["run"] = cfg.echo()
    title = "Formation model"
    (out_dir / "formation_model.txt").write_text(modeling.fit_report_text(fit, title), encoding="utf-8")
    (out_dir / "formation_model.json").write_text(modeling.fit_report_json(fit, title), encoding="utf-8")
    print(modeling.fit_report_text(fit, title))
    return 0


def _cmd_fit_propagation(args) -> int:
    cfg = _cfg_from_args(args)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = feat.read_feature_csv(_require(Path(args.features), "features"))
    fit = fit_propagation_table(table, cfg)
    fit.config["run"] = cfg.echo()
    title = "Propagation model"
    (out_dir / "propagation_model.txt").write_text(modeling.fit_report_text(fit, title), encoding="utf-8")
    (out_dir / "propagation_model.json").write_text(modeling.fit_report_json(fit, title), encoding="utf-8")
    print(modeling.fit_report_text(fit, title))
    return 0


def _cmd_adaptive_ttc(args) -> int:
    cfg = _cfg_from_args(args)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(args.input, args.geometry, args.interval)
    adaptive_map = risk.AdaptiveTtcThresholds(clamp_scope=cfg.clamp_scope).fit(dataset)
    adaptive_map.write_csv(out_dir / "adaptive_thresholds.csv")
    static_groups = _segment_dataset(dataset, _segmenter(cfg), cfg.jobs)
    adaptive_groups = _segment_dataset(dataset, _segmenter(cfg, adaptive=adaptive_map), cfg.jobs)
    _write_size_comparison(
        out_dir / "group_size_comparison.csv",
        [
            {
                "interval_s": args.interval,
                "static": risk.group_size_stats(static_groups),
                "adaptive": risk.group_size_stats(adaptive_groups),
            }
        ],
    )
    print(f"thresholds: {out_dir / 'adaptive_thresholds.csv'}")
    print(f"size comparison: {out_dir / 'group_size_comparison.csv'}")
    return 0


def _cmd_analyze(args) -> int:
    cfg = _cfg_from_args(args)
    summary = run_pipeline(cfg)
    for tag, entry in summary["intervals"].items():
        metrics = entry["formation_validation"]
        print(
            f"[{tag}] validation AUC={metrics['AUC']:.3f} TPR={metrics['TPR']:.3f} "
            f"TNR={metrics['TNR']:.3f} ACC={metrics['ACC']:.3f}"
        )
    print(f"artifacts: {cfg.out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "group": _cmd_group,
    "risk": _cmd_risk,
    "features": _cmd_features,
    "fit-formation": _cmd_fit_formation,
    "fit-propagation": _cmd_fit_propagation,
    "adaptive-ttc": _cmd_adaptive_ttc,
    "analyze": _cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except GroupwiseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
