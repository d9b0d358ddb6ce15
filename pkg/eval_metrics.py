"""
Success, SPL, SoftSPL and DTS over episode records, and policy comparison runs.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import pandas as pd
from tabulate import tabulate

from errors import MetricsError
from gcn_embed import EmbeddingTable
from graph_core import SRG
from navigator import EpisodeConfig, EpisodeRecord, EpisodeSpec, Policy, run_spec, sample_episode_specs, episode_spec_hash
from scene_world import CategorySpace, Scene, derive_seeds
from utils import FLOAT_FORMAT

logger = logging.getLogger(__name__)

ALL_SCENES = "all"
REPORT_COLUMNS = ["policy", "scene_id", "episodes", "success", "spl", "soft_spl", "dts_mean_m"]


def _check(records: Sequence[EpisodeRecord]):
    if not records:
        raise MetricsError("no episode records")
    for r in records:
        if not r.shortest_length_m > 0:
            raise MetricsError(f"episode in {r.scene_id} has shortest path length {r.shortest_length_m} <= 0")


def success_rate(records: Sequence[EpisodeRecord]) -> float:
    if not records:
        raise MetricsError("no episode records")
    return sum(1.0 for r in records if r.success) / len(records)


def spl_term(record: EpisodeRecord) -> float:
    l, p = record.shortest_length_m, record.path_length_m
    return (1.0 if record.success else 0.0) * l / max(p, l)


def soft_spl_term(record: EpisodeRecord) -> float:
    l, p, d = record.shortest_length_m, record.path_length_m, record.terminal_geodesic_m
    return (1.0 - d / max(l, d)) * (l / max(p, l))


def spl(records: Sequence[EpisodeRecord]) -> float:
    """(1/N) sum S_i * l_i / max(p_i, l_i)"""
    _check(records)
    return sum(spl_term(r) for r in records) / len(records)


def soft_spl(records: Sequence[EpisodeRecord]) -> float:
    """(1/N) sum (1 - d_i / max(l_i, d_i)) * l_i / max(p_i, l_i), d_i geodesic at termination"""
    _check(records)
    return sum(soft_spl_term(r) for r in records) / len(records)


def dts(record: EpisodeRecord, success_radius_m: float = 1.0) -> float:
    return max(record.terminal_distance_m - success_radius_m, 0.0)


def dts_mean(records: Sequence[EpisodeRecord], success_radius_m: float = 1.0) -> float:
    if not records:
        raise MetricsError("no episode records")
    return sum(dts(r, success_radius_m) for r in records) / len(records)


@dataclass
class MetricsRow:
    policy: str
    scene_id: str
    episodes: int
    success: float
    spl: float
    soft_spl: float
    dts_mean_m: float


def metrics_row(policy: str, scene_id: str, records: Sequence[EpisodeRecord],
                success_radius_m: float = 1.0) -> MetricsRow:
    return MetricsRow(
        policy=policy,
        scene_id=scene_id,
        episodes=len(records),
        success=success_rate(records),
        spl=spl(records),
        soft_spl=soft_spl(records),
        dts_mean_m=dts_mean(records, success_radius_m),
    )


@dataclass
class MetricsReport:
    policy: str
    rows: List[MetricsRow]
    config: Dict = field(default_factory=dict)
    spec_hash: str = ""

    @property
    def aggregate(self) -> MetricsRow:
        return next(r for r in self.rows if r.scene_id == ALL_SCENES)

    @property
    def per_scene(self) -> List[MetricsRow]:
        return [r for r in self.rows if r.scene_id != ALL_SCENES]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rows], columns=REPORT_COLUMNS)


def build_report(policy: str, records: Sequence[EpisodeRecord], config: Optional[EpisodeConfig] = None,
                 spec_hash: str = "") -> MetricsReport:
    """Per-scene rows in order of first appearance, then the aggregate row."""
    config = config or EpisodeConfig()
    by_scene: Dict[str, List[EpisodeRecord]] = {}
    for r in records:
        by_scene.setdefault(r.scene_id, []).append(r)
    rows = [metrics_row(policy, sid, recs, config.success_radius_m) for sid, recs in by_scene.items()]
    rows.append(metrics_row(policy, ALL_SCENES, list(records), config.success_radius_m))
    return MetricsReport(policy, rows, asdict(config), spec_hash)


def reports_frame(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    return pd.concat([r.to_frame() for r in reports], ignore_index=True)


def format_report_table(reports: Sequence[MetricsReport]) -> str:
    df = reports_frame(reports)
    return tabulate(df, headers="keys", tablefmt="github", floatfmt=".4f", showindex=False) + "\n"


def format_report_csv(reports: Sequence[MetricsReport]) -> str:
    return reports_frame(reports).to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def records_frame(records: Sequence[EpisodeRecord], space: CategorySpace) -> pd.DataFrame:
    """Flat per-episode table for the run ledger."""
    return pd.DataFrame([
        {
            "policy": r.policy,
            "scene_id": r.scene_id,
            "episode": r.spec_index,
            "target": space.object_categories[r.target],
            "success": int(r.success),
            "steps": r.steps,
            "path_length_m": r.path_length_m,
            "shortest_length_m": r.shortest_length_m,
            "terminal_distance_m": r.terminal_distance_m,
            "terminal_geodesic_m": r.terminal_geodesic_m,
            "termination": r.termination,
        }
        for r in records
    ])


@dataclass
class Comparison:
    reports: List[MetricsReport]
    records: Dict[str, List[EpisodeRecord]]
    specs: Dict[str, List[EpisodeSpec]]
    spec_hash: str


def _run_task(task):
    scene, policy, spec, config, index = task
    return run_spec(scene, policy, spec, config, index)


def compare_policies(scenes: Sequence[Scene], policies: Sequence[str], episodes_per_scene: int, seed: int,
                     config: EpisodeConfig = EpisodeConfig(), srg: Optional[SRG] = None,
                     table: Optional[EmbeddingTable] = None, workers: int = 1) -> Comparison:
    """
    Run every policy on the same episode specifications. Assets are checked
    for every policy before the first episode starts.
    """
    if not policies:
        raise ValueError("at least one policy is required")
    if episodes_per_scene < 1:
        raise ValueError("episodes_per_scene must be >= 1")
    built = [Policy(kind, srg, table) for kind in policies]

    specs: Dict[str, List[EpisodeSpec]] = {}
    for scene, scene_seed in zip(scenes, derive_seeds(seed, len(scenes))):
        specs[scene.id] = sample_episode_specs(scene, episodes_per_scene, scene_seed, config)
    spec_hash = episode_spec_hash([s for scene in scenes for s in specs[scene.id]])
    logger.info("Episode specifications: %d scenes x %d episodes (hash %s)",
                len(scenes), episodes_per_scene, spec_hash[:16])

    reports, records = [], {}
    for policy in built:
        tasks = [
            (scene, policy, spec, config, i)
            for scene in scenes
            for i, spec in enumerate(specs[scene.id])
        ]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_task, tasks))
        else:
            results = [_run_task(t) for t in tasks]
        records[policy.kind] = results
        report = build_report(policy.kind, results, config, spec_hash)
        reports.append(report)
        agg = report.aggregate
        logger.info("%s: success %.3f, SPL %.3f, SoftSPL %.3f, DTS %.2f m",
                    policy.kind, agg.success, agg.spl, agg.soft_spl, agg.dts_mean_m)
    return Comparison(reports, records, specs, spec_hash)
