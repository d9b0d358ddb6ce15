"""
Episode controller and baseline policies.

srg_gcn: sense objects, label them with regions from the SRG, move toward the
visible region whose embedding is most similar to the target's, pursue the
target once it is in view. random: uniform random actions.
greedy_unexplored: walk to the nearest cell not yet stood on, pursue the
target once it is in view.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from errors import ConfigError, NoPathError, PolicyAssetError, TargetMissingError, ZeroNormError
from gcn_embed import EmbeddingTable, cosine_similarity
from graph_core import SRG
from region_bayes import DEFAULT_K, VisibleRegionMap, visible_regions
from scene_world import (
    AXIS_DIRECTIONS,
    HEADING_DEG,
    NUM_HEADINGS,
    CategorySpace,
    Cell,
    ObjectInstance,
    Pose,
    RegionInstance,
    Scene,
    ShortestPathTree,
    visible_objects,
)
from utils import make_rng, stable_hash

logger = logging.getLogger(__name__)

FORWARD = "forward"
BACKWARD = "backward"
ROTATE_LEFT = "rotate_left"
ROTATE_RIGHT = "rotate_right"
ACTIONS = (FORWARD, BACKWARD, ROTATE_LEFT, ROTATE_RIGHT)

SRG_GCN = "srg_gcn"
RANDOM = "random"
GREEDY_UNEXPLORED = "greedy_unexplored"
POLICY_KINDS = (SRG_GCN, RANDOM, GREEDY_UNEXPLORED)
POLICY_ALIASES = {"greedy": GREEDY_UNEXPLORED}

SUCCESS = "success"
MAX_STEPS = "max_steps"
EXHAUSTED = "exhausted"
PLANNER_FAILURE = "planner_failure"


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 350
    success_radius_m: float = 1.0
    sense_radius_m: float = 10.0
    k: int = DEFAULT_K
    step_translation_m: float = 0.3
    step_rotation_deg: int = 30
    # weight of Sim(Emb(current region), Emb(candidate)) added to the target similarity
    history_weight: float = 0.0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")
        if self.success_radius_m <= 0 or self.sense_radius_m <= 0:
            raise ConfigError("success and sensing radii must be positive")
        if self.k < 0:
            raise ConfigError("k must be >= 0")
        if self.step_translation_m <= 0:
            raise ConfigError("step_translation_m must be positive")
        if self.step_rotation_deg not in (HEADING_DEG, 2 * HEADING_DEG, 3 * HEADING_DEG):
            raise ConfigError(f"step_rotation_deg must be 30, 60 or 90, got {self.step_rotation_deg}")

    @property
    def rotation_units(self) -> int:
        return self.step_rotation_deg // HEADING_DEG


@dataclass
class Policy:
    kind: str
    srg: Optional[SRG] = None
    table: Optional[EmbeddingTable] = None

    def __post_init__(self):
        self.kind = POLICY_ALIASES.get(self.kind, self.kind)
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.kind == SRG_GCN and (self.srg is None or self.table is None):
            raise PolicyAssetError("srg_gcn needs both an SRG and an embedding table")


@dataclass(frozen=True)
class EpisodeSpec:
    scene_id: str
    start_cell: Cell
    heading: int
    target: int
    seed: int

    @property
    def start(self) -> Pose:
        return Pose(self.start_cell, self.heading)

    def to_dict(self) -> Dict:
        return {
            "scene_id": self.scene_id,
            "start_cell": list(self.start_cell),
            "heading": self.heading,
            "target": self.target,
            "seed": self.seed,
        }


@dataclass
class Decision:
    step: int
    cell: Cell
    reason: str
    visible_objects: List[Tuple[int, int]] = field(default_factory=list)
    assignments: List[Dict] = field(default_factory=list)
    similarities: Dict[int, Optional[float]] = field(default_factory=dict)
    chosen_region: Optional[int] = None
    goal_cell: Optional[Cell] = None

    def to_dict(self, space: CategorySpace) -> Dict:
        regions = space.region_categories
        return {
            "step": self.step,
            "cell": list(self.cell),
            "reason": self.reason,
            "visible_objects": [
                {"id": oid, "category": space.object_categories[cat]} for oid, cat in self.visible_objects
            ],
            "assignments": self.assignments,
            "similarities": {regions[r]: s for r, s in sorted(self.similarities.items())},
            "chosen_region": None if self.chosen_region is None else regions[self.chosen_region],
            "goal_cell": None if self.goal_cell is None else list(self.goal_cell),
        }


@dataclass
class EpisodeRecord:
    scene_id: str
    policy: str
    target: int
    start: Pose
    success: bool
    steps: int
    path_length_m: float
    shortest_length_m: float
    terminal_distance_m: float
    terminal_geodesic_m: float
    termination: str
    planner_failed: bool = False
    region_sequence: List[int] = field(default_factory=list)
    actions: List[str] = field(default_factory=list)
    poses: List[Pose] = field(default_factory=list)
    decisions: List[Decision] = field(default_factory=list)
    spec_index: int = 0

    def to_dict(self, space: CategorySpace) -> Dict:
        return {
            "scene_id": self.scene_id,
            "episode": self.spec_index,
            "policy": self.policy,
            "target": space.object_categories[self.target],
            "start": {"cell": list(self.start.cell), "heading": self.start.heading},
            "success": self.success,
            "steps": self.steps,
            "path_length_m": self.path_length_m,
            "shortest_length_m": self.shortest_length_m,
            "terminal_distance_m": self.terminal_distance_m,
            "terminal_geodesic_m": self.terminal_geodesic_m,
            "termination": self.termination,
            "planner_failed": self.planner_failed,
            "region_sequence": [space.region_categories[r] for r in self.region_sequence],
            "actions": self.actions,
            "poses": [[p.cell[0], p.cell[1], p.heading] for p in self.poses],
            "decisions": [d.to_dict(space) for d in self.decisions],
        }


# ---------------------------------------------------------------------------
# Motion
# ---------------------------------------------------------------------------

def apply_action(scene: Scene, pose: Pose, action: str, rotation_units: int = 1) -> Tuple[Pose, bool]:
    """New pose and whether the agent changed cell. Blocked translations leave the pose as is."""
    if action == ROTATE_LEFT:
        return Pose(pose.cell, (pose.heading + rotation_units) % NUM_HEADINGS), False
    if action == ROTATE_RIGHT:
        return Pose(pose.cell, (pose.heading - rotation_units) % NUM_HEADINGS), False
    if action not in (FORWARD, BACKWARD):
        raise ValueError(f"unknown action {action!r}")
    dr, dc = pose.direction
    sign = 1 if action == FORWARD else -1
    nxt = (pose.cell[0] + sign * dr, pose.cell[1] + sign * dc)
    if not scene.is_free(nxt):
        return pose, False
    return Pose(nxt, pose.heading), True


def _axis_of_step(a: Cell, b: Cell) -> int:
    return AXIS_DIRECTIONS.index((b[0] - a[0], b[1] - a[1]))


def rotation_towards(heading: int, axis: int, rotation_units: int = 1) -> Optional[str]:
    """Rotation that reaches the given axis in the fewest turns (left on ties); None if already aligned."""
    if Pose((0, 0), heading).axis == axis:
        return None
    for n in range(1, NUM_HEADINGS + 1):
        for action, sign in ((ROTATE_LEFT, 1), (ROTATE_RIGHT, -1)):
            if Pose((0, 0), (heading + sign * n * rotation_units) % NUM_HEADINGS).axis == axis:
                return action
    raise ConfigError(f"axis {axis} unreachable with rotation step {rotation_units * HEADING_DEG} deg")


def random_policy_step(pose: Pose, rng: np.random.Generator) -> str:
    """Uniform over the four actions; legality is resolved by apply_action."""
    return ACTIONS[int(rng.integers(len(ACTIONS)))]


def greedy_unexplored_policy(scene: Scene, pose: Pose, visited: Set[Cell]) -> Optional[Cell]:
    """Nearest reachable cell not in `visited`, or None when every reachable cell was visited."""
    seen = {pose.cell}
    queue = deque([pose.cell])
    while queue:
        cell = queue.popleft()
        if cell not in visited:
            return cell
        for nxt in scene.neighbors(cell):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return None


# ---------------------------------------------------------------------------
# Region choice
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionChoice:
    region: int
    score: float
    similarities: Dict[int, Optional[float]]


def _similarity(table: EmbeddingTable, a: str, b: str) -> Optional[float]:
    try:
        return cosine_similarity(table.vector(a), table.vector(b))
    except ZeroNormError:
        return None


def select_next_region(table: EmbeddingTable, visible: VisibleRegionMap, target: int, space: CategorySpace,
                       allowed_regions: Optional[Sequence[int]] = None, history_region: Optional[int] = None,
                       history_weight: float = 0.0) -> Optional[RegionChoice]:
    """
    Visible region category maximizing cosine(Emb(target), Emb(region)), ties
    to the lowest region index. None when there is nothing to choose from.
    """
    regions = visible.regions()
    if allowed_regions is not None:
        allowed = set(allowed_regions)
        regions = [r for r in regions if r in allowed]
    if not regions:
        return None
    target_name = space.object_categories[target]
    similarities: Dict[int, Optional[float]] = {}
    best: Optional[Tuple[float, int]] = None
    for r in regions:
        name = space.region_categories[r]
        sim = _similarity(table, target_name, name)
        similarities[r] = sim
        if sim is None:
            continue
        score = sim
        if history_weight and history_region is not None:
            hist = _similarity(table, space.region_categories[history_region], name)
            score += history_weight * (hist or 0.0)
        if best is None or score > best[0]:
            best = (score, r)
    if best is None:
        return None
    return RegionChoice(best[1], best[0], similarities)


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------

class _Episode:
    """Mutable state of one running episode."""

    def __init__(self, scene: Scene, policy: Policy, target: int, start: Pose, config: EpisodeConfig,
                 rng: np.random.Generator):
        self.scene = scene
        self.policy = policy
        self.target = target
        self.config = config
        self.rng = rng
        self.targets = scene.objects_of_category(target)
        if not self.targets:
            raise TargetMissingError(f"scene {scene.id} holds no instance of object category {target}")
        if not scene.is_free(start.cell):
            raise NoPathError(f"start cell {start.cell} is blocked")
        self.start = start
        self.pose = start
        self.steps = 0
        self.translations = 0
        self.visited_cells: Set[Cell] = {start.cell}
        self.visited_regions: Set[int] = {scene.region_id_at(start.cell)}
        self.region_sequence: List[int] = [scene.region_at(start.cell).category]
        self.actions: List[str] = []
        self.poses: List[Pose] = [start]
        self.decisions: List[Decision] = []
        self.termination: Optional[str] = None
        self.planner_failed = False

    # -- sensing -------------------------------------------------------------

    def nearest_target_distance(self) -> float:
        return min(self.scene.euclidean_m(self.pose.cell, o.cell) for o in self.targets)

    def succeeded(self) -> bool:
        return self.nearest_target_distance() <= self.config.success_radius_m

    def budget_left(self) -> bool:
        return self.steps < self.config.max_steps

    def sense(self) -> List[ObjectInstance]:
        return visible_objects(self.scene, self.pose, self.config.sense_radius_m)

    def target_in_view(self) -> bool:
        return bool(visible_objects(self.scene, self.pose, self.config.sense_radius_m, self.targets))

    # -- acting --------------------------------------------------------------

    def act(self, action: str):
        self.pose, moved = apply_action(self.scene, self.pose, action, self.config.rotation_units)
        self.steps += 1
        self.actions.append(action)
        self.poses.append(self.pose)
        if moved:
            self.translations += 1
            self.visited_cells.add(self.pose.cell)
            region = self.scene.region_at(self.pose.cell)
            if not self.in_wall_gap(region, self.pose.cell):
                self.visited_regions.add(region.id)
            if self.region_sequence[-1] != region.category:
                self.region_sequence.append(region.category)

    def follow(self, cells: Sequence[Cell], interrupt: Callable[[], bool]) -> bool:
        """Walk along consecutive cells; True when `interrupt` fired after a move."""
        for nxt in cells[1:]:
            axis = _axis_of_step(self.pose.cell, nxt)
            while True:
                if not self.budget_left():
                    return False
                turn = rotation_towards(self.pose.heading, axis, self.config.rotation_units)
                if turn is None:
                    break
                self.act(turn)
            self.act(FORWARD)
            if interrupt():
                return True
        return False

    def stop_condition(self) -> bool:
        return self.succeeded() or self.target_in_view()

    def pursue_target(self, visible_targets: List[ObjectInstance]) -> None:
        tree = ShortestPathTree(self.scene, self.pose.cell)
        reachable = [o for o in visible_targets if tree.reachable(o.cell)]
        if not reachable:
            raise NoPathError("visible target is unreachable")
        goal = min(reachable, key=lambda o: (tree.dist[o.cell], o.id))
        self.decisions.append(Decision(self.steps, self.pose.cell, "target_visible",
                                       visible_objects=[(o.id, o.category) for o in visible_targets],
                                       goal_cell=goal.cell))
        self.follow(tree.path_to(goal.cell).cells, self.succeeded)

    def go_to(self, goal: Cell, tree: ShortestPathTree) -> None:
        self.follow(tree.path_to(goal).cells, self.stop_condition)

    # -- exploration targets -------------------------------------------------

    def inner_neighbors(self, region: RegionInstance, door: Cell) -> List[Cell]:
        return [c for c in self.scene.neighbors(door) if c in region.cells and c not in region.doorways]

    def in_wall_gap(self, region: RegionInstance, cell: Cell) -> bool:
        """A doorway with one inner neighbour: the room is not in view from it yet."""
        return cell in region.doorways and len(self.inner_neighbors(region, cell)) == 1

    def entry_goal(self, region_id: int, tree: ShortestPathTree) -> Optional[Cell]:
        """
        Nearest doorway cell of a region instance, moved one cell further in
        when that doorway sits in a wall gap.
        """
        region = self.scene.region(region_id)
        doors = [d for d in region.doorways if tree.reachable(d) and d != self.pose.cell]
        if not doors:
            return None
        door = min(doors, key=lambda d: (tree.dist[d], d))
        inner = self.inner_neighbors(region, door)
        if len(inner) == 1:
            return inner[0]
        return door

    def fallback_goal(self, tree: ShortestPathTree) -> Tuple[Optional[Cell], str]:
        unvisited = [r.id for r in self.scene.regions if r.id not in self.visited_regions]
        goals = [(self.entry_goal(rid, tree), rid) for rid in unvisited]
        goals = [(g, rid) for g, rid in goals if g is not None]
        if goals:
            goal = min(goals, key=lambda item: (tree.dist[item[0]], item[1]))[0]
            return goal, "unvisited_region"
        return greedy_unexplored_policy(self.scene, self.pose, self.visited_cells), "unvisited_cell"

    # -- policies ------------------------------------------------------------

    def srg_gcn_decision(self, visible: List[ObjectInstance], tree: ShortestPathTree) -> Decision:
        scene, space = self.scene, self.policy.srg.space
        region_map = visible_regions(self.policy.srg, visible, self.config.k)
        current = scene.region_id_at(self.pose.cell)

        # instance ids holding the anchors of each labelled region category
        instances: Dict[int, Set[int]] = {}
        for a in region_map:
            instances.setdefault(a.label, set()).add(scene.region_id_at(a.cell))
        # only categories with an unvisited instance; otherwise fall back to exploration
        fresh = [r for r, ids in instances.items() if any(i not in self.visited_regions for i in ids)]

        choice = select_next_region(self.policy.table, region_map, self.target, space, fresh,
                                    scene.region(current).category, self.config.history_weight)
        decision = Decision(
            self.steps, self.pose.cell, "region",
            visible_objects=[(o.id, o.category) for o in visible],
            assignments=[
                {
                    "object": a.object_id,
                    "category": space.object_categories[a.object_category],
                    "candidates": [space.object_categories[c] for c in a.candidate_categories],
                    "scores": [float(s) for s in a.posterior.distribution],
                    "label": space.region_categories[a.label],
                    "degenerate": a.posterior.degenerate,
                }
                for a in region_map
            ],
        )
        if choice is None:
            return decision
        decision.similarities = dict(choice.similarities)
        decision.chosen_region = choice.region
        candidates = sorted(i for i in instances[choice.region] if i not in self.visited_regions)
        goals = [(self.entry_goal(i, tree), i) for i in candidates]
        goals = [(g, i) for g, i in goals if g is not None]
        if goals:
            decision.goal_cell = min(goals, key=lambda item: (tree.dist[item[0]], item[1]))[0]
        return decision

    def run(self) -> None:
        while True:
            if self.succeeded():
                self.termination = SUCCESS
                return
            if not self.budget_left():
                self.termination = MAX_STEPS
                return
            if self.policy.kind == RANDOM:
                self.act(random_policy_step(self.pose, self.rng))
                continue

            visible = self.sense()
            visible_targets = [o for o in visible if o.category == self.target]
            if visible_targets:
                self.pursue_target(visible_targets)
                continue

            tree = ShortestPathTree(self.scene, self.pose.cell)
            goal: Optional[Cell] = None
            if self.policy.kind == SRG_GCN:
                decision = self.srg_gcn_decision(visible, tree)
                goal = decision.goal_cell
                if goal is None:
                    goal, decision.reason = self.fallback_goal(tree)
                    decision.goal_cell = goal
                self.decisions.append(decision)
            else:
                goal = greedy_unexplored_policy(self.scene, self.pose, self.visited_cells)
            if goal is None:
                self.termination = EXHAUSTED
                return
            self.go_to(goal, tree)


def _geodesic_to_targets(scene: Scene, cell: Cell, targets: Sequence[ObjectInstance]) -> float:
    tree = ShortestPathTree(scene, cell)
    reachable = [tree.dist[o.cell] for o in targets if tree.reachable(o.cell)]
    if not reachable:
        raise NoPathError(f"no target instance reachable from {cell}")
    return float(min(reachable)) * scene.cell_size


def run_episode(scene: Scene, policy: Policy, target: int, start: Pose,
                config: EpisodeConfig = EpisodeConfig(), seed: int = 0) -> EpisodeRecord:
    if policy.kind == SRG_GCN and scene.space_hash and policy.srg.space.hash != scene.space_hash:
        raise PolicyAssetError("policy assets and scene use different category spaces")
    if abs(config.step_translation_m - scene.cell_size) > 1e-9:
        raise ConfigError(
            f"one translation step ({config.step_translation_m} m) must cover one cell ({scene.cell_size} m)"
        )
    episode = _Episode(scene, policy, target, start, config, make_rng(seed))
    shortest = _geodesic_to_targets(scene, start.cell, episode.targets)
    try:
        episode.run()
    except NoPathError as e:
        logger.warning("%s: planner failure (%s); episode ends as a failure", scene.id, e)
        episode.termination = PLANNER_FAILURE
        episode.planner_failed = True
    success = episode.succeeded()
    return EpisodeRecord(
        scene_id=scene.id,
        policy=policy.kind,
        target=target,
        start=start,
        success=success,
        steps=episode.steps,
        path_length_m=episode.translations * config.step_translation_m,
        shortest_length_m=shortest,
        terminal_distance_m=episode.nearest_target_distance(),
        terminal_geodesic_m=_geodesic_to_targets(scene, episode.pose.cell, episode.targets),
        termination=SUCCESS if success else episode.termination,
        planner_failed=episode.planner_failed,
        region_sequence=episode.region_sequence,
        actions=episode.actions,
        poses=episode.poses,
        decisions=episode.decisions,
    )


def run_spec(scene: Scene, policy: Policy, spec: EpisodeSpec, config: EpisodeConfig = EpisodeConfig(),
             index: int = 0) -> EpisodeRecord:
    record = run_episode(scene, policy, spec.target, spec.start, config, spec.seed)
    record.spec_index = index
    return record


def sample_episode_specs(scene: Scene, count: int, seed: int,
                         config: EpisodeConfig = EpisodeConfig()) -> List[EpisodeSpec]:
    """
    Targets uniform over categories present in the scene; start cells uniform
    over free cells farther than the success radius from every target
    instance, both in a straight line and along the grid.
    """
    rng = make_rng(seed)
    free = scene.free_cells()
    eligible: Dict[int, List[Cell]] = {}
    for target in scene.object_categories_present():
        instances = scene.objects_of_category(target)
        trees = [ShortestPathTree(scene, o.cell) for o in instances]
        cells = []
        for cell in free:
            euclid = min(scene.euclidean_m(cell, o.cell) for o in instances)
            geo = min(t.distance_m(cell) for t in trees if t.reachable(cell))
            if euclid > config.success_radius_m and geo > config.success_radius_m:
                cells.append(cell)
        if cells:
            eligible[target] = cells
    if not eligible:
        raise TargetMissingError(f"scene {scene.id} has no target with a valid start cell")
    targets = sorted(eligible)
    specs = []
    for _ in range(count):
        target = targets[int(rng.integers(len(targets)))]
        cells = eligible[target]
        cell = cells[int(rng.integers(len(cells)))]
        heading = int(rng.integers(NUM_HEADINGS))
        specs.append(EpisodeSpec(scene.id, cell, heading, target, int(rng.integers(2 ** 31))))
    return specs


def episode_spec_hash(specs: Sequence[EpisodeSpec]) -> str:
    return stable_hash([s.to_dict() for s in specs], length=64)
