"""
Valid trajectories and the training pairs derived from them.

A valid trajectory is the region-category sequence of the shortest path from
a start pose to the nearest instance of a target object category.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from errors import MalformedFileError, NoPathError, TargetMissingError, HashMismatchError
from scene_world import CategorySpace, Cell, Pose, Scene, ShortestPathTree, region_sequence_of_path
from utils import read_text, write_text

logger = logging.getLogger(__name__)

CORPUS_FORMAT_VERSION = 1
POSITIVE = 1
NEGATIVE = 0


@dataclass(frozen=True)
class Trajectory:
    scene_id: str
    start_region: int
    target_object: int
    region_sequence: Tuple[int, ...]
    geometric_length: float
    start_cell: Cell = (0, 0)
    target_instance: int = -1

    def __post_init__(self):
        if not self.region_sequence:
            raise ValueError("trajectory region sequence must be non-empty")
        object.__setattr__(self, "region_sequence", tuple(int(r) for r in self.region_sequence))


@dataclass(frozen=True)
class TrainingPair:
    anchor: int
    other: int
    label: int

    def __post_init__(self):
        if self.anchor == self.other:
            raise ValueError(f"training pair needs two distinct nodes, got {self.anchor} twice")
        if self.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


def generate_valid_trajectory(scene: Scene, start: Pose, target: int) -> Trajectory:
    instances = scene.objects_of_category(target)
    if not instances:
        raise TargetMissingError(f"scene {scene.id} holds no instance of object category {target}")
    tree = ShortestPathTree(scene, start.cell)
    reachable = [o for o in instances if tree.reachable(o.cell)]
    if not reachable:
        raise NoPathError(f"no instance of object category {target} reachable from {start.cell} in {scene.id}")
    nearest = min(reachable, key=lambda o: (tree.dist[o.cell], o.id))
    path = tree.path_to(nearest.cell)
    return Trajectory(
        scene_id=scene.id,
        start_region=scene.region_at(start.cell).category,
        target_object=target,
        region_sequence=tuple(region_sequence_of_path(scene, path)),
        geometric_length=path.length_m,
        start_cell=start.cell,
        target_instance=nearest.id,
    )


def make_positive_pairs(traj: Trajectory, space: CategorySpace) -> List[TrainingPair]:
    """
    For every interior index x: (i_x, i_n) and (i_x, i_j) for each j < x,
    then (i_n, target). Pairs that would join a category to itself are skipped.
    """
    seq = traj.region_sequence
    n = len(seq)
    target = space.object_node(traj.target_object)
    pairs = []
    for x in range(1, n - 1):
        candidates = [seq[n - 1]] + [seq[j] for j in range(x)]
        for other in candidates:
            if other != seq[x]:
                pairs.append(TrainingPair(seq[x], other, POSITIVE))
    pairs.append(TrainingPair(seq[n - 1], target, POSITIVE))
    return pairs


def make_negative_pairs(traj: Trajectory, space: CategorySpace,
                        regions: Optional[Sequence[int]] = None) -> List[TrainingPair]:
    """
    Each interior node of the trajectory substituted by every region outside
    the trajectory gives one invalid prefix path; the substituted region is
    paired with the target as a negative.
    """
    seq = traj.region_sequence
    valid = set(seq)
    pool = range(space.num_regions) if regions is None else regions
    invalid = [r for r in pool if r not in valid]
    target = space.object_node(traj.target_object)
    pairs = []
    for _ in range(1, len(seq) - 1):
        pairs.extend(TrainingPair(r, target, NEGATIVE) for r in invalid)
    return pairs


def corpus_pairs(corpus: Iterable[Trajectory], space: CategorySpace) -> List[TrainingPair]:
    pairs = []
    for traj in corpus:
        pairs.extend(make_positive_pairs(traj, space))
        pairs.extend(make_negative_pairs(traj, space))
    return pairs


def collapse_pairs(pairs: Iterable[TrainingPair]) -> List[Tuple[TrainingPair, int]]:
    """Unique pairs with their multiplicity, sorted by (anchor, other, label)."""
    counts = Counter(pairs)
    return sorted(counts.items(), key=lambda item: (item[0].anchor, item[0].other, item[0].label))


@dataclass
class CorpusSummary:
    count: int
    per_target: Dict[str, int]
    scenes: int


def generate_corpus(scenes: Sequence[Scene], space: CategorySpace) -> List[Trajectory]:
    """One trajectory per (scene, start region instance, target category present in the scene)."""
    corpus = []
    for scene in scenes:
        targets = scene.object_categories_present()
        for region in scene.regions:
            start = Pose(region.centroid_cell, 0)
            for target in targets:
                corpus.append(generate_valid_trajectory(scene, start, target))
    summary = summarize_corpus(corpus, space, len(scenes))
    logger.info("Generated %d valid trajectories over %d scenes", summary.count, summary.scenes)
    return corpus


def summarize_corpus(corpus: Sequence[Trajectory], space: CategorySpace, scenes: int) -> CorpusSummary:
    counts = Counter(space.object_categories[t.target_object] for t in corpus)
    return CorpusSummary(count=len(corpus), per_target=dict(sorted(counts.items())), scenes=scenes)


# ---------------------------------------------------------------------------
# Persistence (JSON lines, header first)
# ---------------------------------------------------------------------------

def _dumps(data) -> str:
    return json.dumps(data, sort_keys=True, ensure_ascii=False)


def corpus_to_jsonl(corpus: Sequence[Trajectory], space: CategorySpace) -> str:
    lines = [_dumps({
        "format_version": CORPUS_FORMAT_VERSION,
        "category_space_hash": space.hash,
        "count": len(corpus),
    })]
    for t in corpus:
        lines.append(_dumps({
            "scene_id": t.scene_id,
            "start_region": space.region_categories[t.start_region],
            "target": space.object_categories[t.target_object],
            "region_sequence": [space.region_categories[r] for r in t.region_sequence],
            "length_m": t.geometric_length,
            "start_cell": list(t.start_cell),
            "target_instance": t.target_instance,
        }))
    return "\n".join(lines) + "\n"


def corpus_from_jsonl(text: str, space: CategorySpace) -> List[Trajectory]:
    lines = [line for line in text.splitlines() if line.strip()]
    try:
        header = json.loads(lines[0])
        if header["format_version"] != CORPUS_FORMAT_VERSION:
            raise MalformedFileError(f"unsupported corpus format_version {header['format_version']}")
        if header["category_space_hash"] != space.hash:
            raise HashMismatchError(
                f"corpus built for category space {header['category_space_hash']}, expected {space.hash}"
            )
        corpus = []
        for line in lines[1:]:
            rec = json.loads(line)
            corpus.append(Trajectory(
                scene_id=rec["scene_id"],
                start_region=space.region_index(rec["start_region"]),
                target_object=space.object_index(rec["target"]),
                region_sequence=tuple(space.region_index(r) for r in rec["region_sequence"]),
                geometric_length=float(rec["length_m"]),
                start_cell=(int(rec["start_cell"][0]), int(rec["start_cell"][1])),
                target_instance=int(rec["target_instance"]),
            ))
    except (IndexError, KeyError, TypeError, json.JSONDecodeError) as e:
        raise MalformedFileError(f"malformed trajectory corpus: {e}") from e
    if len(corpus) != header["count"]:
        raise MalformedFileError(f"corpus header says {header['count']} records, found {len(corpus)}")
    return corpus


def save_corpus(path, corpus: Sequence[Trajectory], space: CategorySpace):
    return write_text(path, corpus_to_jsonl(corpus, space))


def load_corpus(path, space: CategorySpace) -> List[Trajectory]:
    return corpus_from_jsonl(read_text(path), space)
