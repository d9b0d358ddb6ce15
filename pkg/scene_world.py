"""
Procedural indoor scenes on an occupancy grid.

A cell holds -1 when blocked, otherwise the id of the region instance it
belongs to. Coordinates are (row, col); a cell is `cell_size` meters wide and
the agent moves between 4-connected cells.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from errors import (
    ConfigError,
    HashMismatchError,
    NoPathError,
    SceneFormatError,
    SceneGenerationError,
)
from utils import canonical_json, clean_name, clean_names, make_rng, read_text, stable_hash, write_text

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]

BLOCKED = -1
SCENE_FORMAT_VERSION = 1
NUM_HEADINGS = 12
HEADING_DEG = 30
WALL_CHAR = "#"
GRID_CHARS = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"

# E, N, W, S as (d_row, d_col)
AXIS_DIRECTIONS: Tuple[Cell, ...] = ((0, 1), (-1, 0), (0, -1), (1, 0))

DEFAULT_REGION_CATEGORIES = (
    "bathroom", "bedroom", "closet", "dining_room", "entryway", "family_room",
    "garage", "hallway", "library", "laundry_room", "kitchen", "living_room",
    "meeting_room", "lounge", "office", "porch", "rec_room", "stairs",
    "utility_room", "tv_room", "workout_room", "outdoor", "balcony", "bar",
    "classroom", "dining_booth", "spa", "other_room",
)

DEFAULT_OBJECT_CATEGORIES = (
    "chair", "table", "picture", "cabinet", "cushion", "sofa", "bed",
    "chest_of_drawers", "plant", "sink", "toilet", "stool", "towel",
    "tv_monitor", "shower", "bathtub", "counter", "fireplace", "gym_equipment",
)


@dataclass(frozen=True)
class CategorySpace:
    """Ordered region and object categories; the order defines one-hot indices."""

    region_categories: Tuple[str, ...]
    object_categories: Tuple[str, ...]

    def __post_init__(self):
        regions = tuple(clean_names(self.region_categories))
        objects = tuple(clean_names(self.object_categories))
        names = regions + objects
        if any(not n for n in names):
            raise ConfigError("category names must be non-empty")
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ConfigError(f"duplicate category names: {', '.join(duplicates)}")
        object.__setattr__(self, "region_categories", regions)
        object.__setattr__(self, "object_categories", objects)

    @classmethod
    def default(cls) -> "CategorySpace":
        return cls(DEFAULT_REGION_CATEGORIES, DEFAULT_OBJECT_CATEGORIES)

    @property
    def num_regions(self) -> int:
        return len(self.region_categories)

    @property
    def num_objects(self) -> int:
        return len(self.object_categories)

    @property
    def num_nodes(self) -> int:
        return self.num_regions + self.num_objects

    @property
    def node_names(self) -> List[str]:
        return list(self.region_categories) + list(self.object_categories)

    @property
    def hash(self) -> str:
        return stable_hash(self.to_dict())

    def region_index(self, name: str) -> int:
        key = clean_name(name)
        try:
            return self.region_categories.index(key)
        except ValueError:
            raise ConfigError(f"unknown region category: {name!r}") from None

    def object_index(self, name: str) -> int:
        key = clean_name(name)
        try:
            return self.object_categories.index(key)
        except ValueError:
            raise ConfigError(f"unknown object category: {name!r}") from None

    def object_node(self, obj: int) -> int:
        return self.num_regions + obj

    def to_dict(self) -> Dict[str, List[str]]:
        return {
            "region_categories": list(self.region_categories),
            "object_categories": list(self.object_categories),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CategorySpace":
        return cls(tuple(data["region_categories"]), tuple(data["object_categories"]))


@dataclass(frozen=True)
class RegionInstance:
    id: int
    category: int
    cells: FrozenSet[Cell]
    doorways: FrozenSet[Cell]

    @property
    def centroid_cell(self) -> Cell:
        """Cell of the instance nearest its centroid, ties by (row, col)."""
        rows = [c[0] for c in self.cells]
        cols = [c[1] for c in self.cells]
        mr, mc = sum(rows) / len(rows), sum(cols) / len(cols)
        return min(self.cells, key=lambda c: ((c[0] - mr) ** 2 + (c[1] - mc) ** 2, c))


@dataclass(frozen=True)
class ObjectInstance:
    id: int
    category: int
    cell: Cell


@dataclass(frozen=True)
class Pose:
    cell: Cell
    heading: int = 0

    def __post_init__(self):
        if not 0 <= self.heading < NUM_HEADINGS:
            raise ValueError(f"heading must be in [0, {NUM_HEADINGS}), got {self.heading}")
        object.__setattr__(self, "cell", (int(self.cell[0]), int(self.cell[1])))

    @property
    def axis(self) -> int:
        """Grid axis (0=E, 1=N, 2=W, 3=S) a translation along this heading follows."""
        return ((self.heading + 1) // 3) % 4

    @property
    def direction(self) -> Cell:
        return AXIS_DIRECTIONS[self.axis]


@dataclass(frozen=True)
class Path:
    cells: Tuple[Cell, ...]
    cell_size: float

    @property
    def length_m(self) -> float:
        return (len(self.cells) - 1) * self.cell_size

    def __len__(self):
        return len(self.cells)


@dataclass(eq=False)
class Scene:
    id: str
    grid: np.ndarray
    regions: List[RegionInstance]
    objects: List[ObjectInstance]
    cell_size: float = 0.3
    space_hash: str = ""

    def __post_init__(self):
        self.grid = np.array(self.grid, dtype=np.int32)
        self.grid.setflags(write=False)
        self._regions_by_id = {r.id: r for r in self.regions}

    @property
    def shape(self) -> Tuple[int, int]:
        return self.grid.shape

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.grid.shape[0] and 0 <= cell[1] < self.grid.shape[1]

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and self.grid[cell] != BLOCKED

    def region_id_at(self, cell: Cell) -> Optional[int]:
        if not self.is_free(cell):
            return None
        return int(self.grid[cell])

    def region(self, region_id: int) -> RegionInstance:
        return self._regions_by_id[region_id]

    def region_at(self, cell: Cell) -> Optional[RegionInstance]:
        rid = self.region_id_at(cell)
        return None if rid is None else self._regions_by_id[rid]

    def objects_of_category(self, category: int) -> List[ObjectInstance]:
        return [o for o in self.objects if o.category == category]

    def object_categories_present(self) -> List[int]:
        return sorted({o.category for o in self.objects})

    def free_cells(self) -> List[Cell]:
        rows, cols = np.nonzero(self.grid != BLOCKED)
        return sorted(zip(rows.tolist(), cols.tolist()))

    def neighbors(self, cell: Cell) -> List[Cell]:
        """Free 4-neighbours in lexicographic (row, col) order."""
        r, c = cell
        out = []
        for cand in ((r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)):
            if self.is_free(cand):
                out.append(cand)
        return out

    def euclidean_m(self, a: Cell, b: Cell) -> float:
        return math.hypot(a[0] - b[0], a[1] - b[1]) * self.cell_size


@dataclass(eq=False)
class SceneGenConfig:
    space: CategorySpace
    region_prior: np.ndarray
    placement: np.ndarray
    num_regions: int = 6
    grid_rows: int = 36
    grid_cols: int = 36
    cell_size: float = 0.3
    seed: int = 0
    object_copies: int = 1
    min_room_side: int = 4
    extra_door_prob: float = 0.25
    max_retries: int = 20

    def __post_init__(self):
        self.region_prior = np.asarray(self.region_prior, dtype=float)
        self.placement = np.asarray(self.placement, dtype=float)

    @classmethod
    def from_tables(cls, space: CategorySpace, region_prior: Mapping[str, float] = None,
                    placement: Mapping[str, Mapping[str, float]] = None,
                    default_region_weight: float = 1.0, background_placement: float = 0.0,
                    **kwargs) -> "SceneGenConfig":
        """Build dense prior arrays from sparse name-keyed tables."""
        prior = np.full(space.num_regions, float(default_region_weight))
        for name, weight in (region_prior or {}).items():
            prior[space.region_index(name)] = float(weight)
        table = np.full((space.num_objects, space.num_regions), float(background_placement))
        for obj_name, row in (placement or {}).items():
            o = space.object_index(obj_name)
            for region_name, p in row.items():
                table[o, space.region_index(region_name)] = float(p)
        return cls(space=space, region_prior=prior, placement=table, **kwargs)

    def validate(self):
        space = self.space
        if not 1 <= self.num_regions <= len(GRID_CHARS):
            raise ConfigError(f"num_regions must be in [1, {len(GRID_CHARS)}]")
        if self.region_prior.shape != (space.num_regions,):
            raise ConfigError("region_prior must have one weight per region category")
        if np.any(self.region_prior < 0) or self.region_prior.sum() <= 0:
            raise ConfigError("region_prior weights must be non-negative with a positive sum")
        if self.placement.shape != (space.num_objects, space.num_regions):
            raise ConfigError("placement must be |objects| x |regions|")
        if np.any(self.placement < 0) or np.any(self.placement > 1):
            raise ConfigError("placement probabilities must lie in [0, 1]")
        reachable = (self.placement > 0) & (self.region_prior > 0)[None, :]
        never = [space.object_categories[o] for o in range(space.num_objects) if not reachable[o].any()]
        if never:
            raise ConfigError(f"object categories can never be placed: {', '.join(never)}")
        if self.min_room_side < 1:
            raise ConfigError("min_room_side must be >= 1")
        if min(self.grid_rows, self.grid_cols) < self.min_room_side + 2:
            raise ConfigError("grid too small for a single room")
        if self.cell_size <= 0:
            raise ConfigError("cell_size must be positive")
        if self.object_copies < 1:
            raise ConfigError("object_copies must be >= 1")
        if not 0 <= self.extra_door_prob <= 1:
            raise ConfigError("extra_door_prob must lie in [0, 1]")
        if self.max_retries < 1:
            raise ConfigError("max_retries must be >= 1")


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

Rect = Tuple[int, int, int, int]  # r0, c0, r1, c1 inclusive


def _split_rect(rect: Rect, rng: np.random.Generator, min_side: int) -> Optional[Tuple[Rect, Rect]]:
    r0, c0, r1, c1 = rect
    height, width = r1 - r0 + 1, c1 - c0 + 1
    can_rows = height >= 2 * min_side + 1
    can_cols = width >= 2 * min_side + 1
    if not (can_rows or can_cols):
        return None
    if can_rows and can_cols:
        if height == width:
            horizontal = bool(rng.integers(2))
        else:
            horizontal = height > width
    else:
        horizontal = can_rows
    if horizontal:
        wall = int(rng.integers(r0 + min_side, r1 - min_side + 1))
        return (r0, c0, wall - 1, c1), (wall + 1, c0, r1, c1)
    wall = int(rng.integers(c0 + min_side, c1 - min_side + 1))
    return (r0, c0, r1, wall - 1), (r0, wall + 1, r1, c1)


def _partition(config: SceneGenConfig, rng: np.random.Generator) -> Optional[List[Rect]]:
    rects: List[Rect] = [(1, 1, config.grid_rows - 2, config.grid_cols - 2)]
    while len(rects) < config.num_regions:
        order = sorted(range(len(rects)),
                       key=lambda i: -((rects[i][2] - rects[i][0] + 1) * (rects[i][3] - rects[i][1] + 1)))
        for i in order:
            halves = _split_rect(rects[i], rng, config.min_room_side)
            if halves is not None:
                rects[i:i + 1] = list(halves)
                break
        else:
            return None
    return rects


def _shared_walls(rects: List[Rect]) -> Dict[Tuple[int, int], List[Cell]]:
    """Wall cells separating each pair of rectangles that face each other across one wall line."""
    walls: Dict[Tuple[int, int], List[Cell]] = {}
    for a in range(len(rects)):
        for b in range(a + 1, len(rects)):
            ar0, ac0, ar1, ac1 = rects[a]
            br0, bc0, br1, bc1 = rects[b]
            cells: List[Cell] = []
            if ar1 + 2 == br0 or br1 + 2 == ar0:
                row = ar1 + 1 if ar1 + 2 == br0 else br1 + 1
                lo, hi = max(ac0, bc0), min(ac1, bc1)
                cells = [(row, c) for c in range(lo, hi + 1)]
            elif ac1 + 2 == bc0 or bc1 + 2 == ac0:
                col = ac1 + 1 if ac1 + 2 == bc0 else bc1 + 1
                lo, hi = max(ar0, br0), min(ar1, br1)
                cells = [(r, col) for r in range(lo, hi + 1)]
            if cells:
                walls[(a, b)] = cells
    return walls


def _find(parent: List[int], i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def _choose_doors(walls: Dict[Tuple[int, int], List[Cell]], n: int, extra_prob: float,
                  rng: np.random.Generator) -> List[Tuple[int, int]]:
    pairs = sorted(walls)
    order = rng.permutation(len(pairs)) if pairs else []
    parent = list(range(n))
    chosen = []
    for idx in order:
        a, b = pairs[idx]
        ra, rb = _find(parent, a), _find(parent, b)
        if ra != rb:
            parent[ra] = rb
            chosen.append((a, b))
        elif rng.random() < extra_prob:
            chosen.append((a, b))
    return sorted(chosen)


def _instance_tables(grid: np.ndarray, categories: Sequence[int]) -> List[RegionInstance]:
    cells_by_id: Dict[int, Set[Cell]] = {}
    rows, cols = np.nonzero(grid != BLOCKED)
    for r, c in zip(rows.tolist(), cols.tolist()):
        cells_by_id.setdefault(int(grid[r, c]), set()).add((r, c))
    doorways: Dict[int, Set[Cell]] = {rid: set() for rid in cells_by_id}
    h, w = grid.shape
    for (r, c), other in _cross_region_neighbors(grid):
        doorways[int(grid[r, c])].add((r, c))
    return [
        RegionInstance(rid, int(categories[rid]), frozenset(cells_by_id[rid]), frozenset(doorways[rid]))
        for rid in sorted(cells_by_id)
    ]


def _cross_region_neighbors(grid: np.ndarray) -> Iterable[Tuple[Cell, Cell]]:
    """Every ordered pair of 4-adjacent free cells that belong to different instances."""
    h, w = grid.shape
    for r in range(h):
        for c in range(w):
            a = grid[r, c]
            if a == BLOCKED:
                continue
            for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w:
                    b = grid[rr, cc]
                    if b != BLOCKED and b != a:
                        yield (r, c), (rr, cc)


def region_adjacency_pairs(scene: Scene) -> List[Tuple[int, int]]:
    """Instance pairs (a < b) that share a doorway, from a scan of the grid."""
    pairs = set()
    for a_cell, b_cell in _cross_region_neighbors(scene.grid):
        a, b = int(scene.grid[a_cell]), int(scene.grid[b_cell])
        pairs.add((min(a, b), max(a, b)))
    return sorted(pairs)


def regions_connected(scene: Scene) -> bool:
    ids = [r.id for r in scene.regions]
    if not ids:
        return False
    adjacency: Dict[int, Set[int]] = {rid: set() for rid in ids}
    for a, b in region_adjacency_pairs(scene):
        adjacency[a].add(b)
        adjacency[b].add(a)
    seen = {ids[0]}
    queue = deque([ids[0]])
    while queue:
        for nxt in adjacency[queue.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(ids)


def _place_objects(config: SceneGenConfig, regions: List[RegionInstance],
                   rng: np.random.Generator) -> List[ObjectInstance]:
    objects: List[ObjectInstance] = []
    occupied: Set[Cell] = set()
    for region in regions:
        interior = sorted(region.cells - region.doorways) or sorted(region.cells)
        for o in range(config.space.num_objects):
            p = config.placement[o, region.category]
            for _ in range(config.object_copies):
                if p <= 0 or rng.random() >= p:
                    continue
                free = [c for c in interior if c not in occupied]
                if not free:
                    logger.debug("region %d full, skipping object %d", region.id, o)
                    continue
                cell = free[int(rng.integers(len(free)))]
                occupied.add(cell)
                objects.append(ObjectInstance(len(objects), o, cell))
    return objects


def generate_scene(config: SceneGenConfig, seed: int, scene_id: Optional[str] = None) -> Scene:
    """Generate one scene; a pure function of (config, seed)."""
    config.validate()
    rng = make_rng(seed)
    prior = config.region_prior / config.region_prior.sum()
    scene_id = scene_id or f"scene_{int(seed)}"
    for attempt in range(config.max_retries):
        rects = _partition(config, rng)
        if rects is None:
            logger.debug("%s: partition attempt %d failed", scene_id, attempt)
            continue
        grid = np.full((config.grid_rows, config.grid_cols), BLOCKED, dtype=np.int32)
        for rid, (r0, c0, r1, c1) in enumerate(rects):
            grid[r0:r1 + 1, c0:c1 + 1] = rid
        walls = _shared_walls(rects)
        for a, b in _choose_doors(walls, len(rects), config.extra_door_prob, rng):
            cells = walls[(a, b)]
            grid[cells[len(cells) // 2]] = a
        categories = rng.choice(config.space.num_regions, size=len(rects), p=prior)
        regions = _instance_tables(grid, categories)
        objects = _place_objects(config, regions, rng)
        scene = Scene(scene_id, grid, regions, objects, config.cell_size, config.space.hash)
        if regions_connected(scene):
            return scene
        logger.debug("%s: attempt %d produced a disconnected layout", scene_id, attempt)
    raise SceneGenerationError(
        f"could not generate a connected scene with {config.num_regions} regions "
        f"on a {config.grid_rows}x{config.grid_cols} grid after {config.max_retries} attempts"
    )


def derive_seeds(seed: int, count: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(count)]


def generate_scene_set(config: SceneGenConfig, count: int, seed: int, prefix: str = "scene") -> List[Scene]:
    scenes = [
        generate_scene(config, s, scene_id=f"{prefix}_{i:03d}")
        for i, s in enumerate(derive_seeds(seed, count))
    ]
    logger.info("Generated %d scenes: %d region instances, %d objects",
                len(scenes), sum(len(s.regions) for s in scenes), sum(len(s.objects) for s in scenes))
    return scenes


def build_scene(layout: Sequence[str], labels: Mapping[str, str], objects: Sequence[Tuple[str, Cell]],
                space: CategorySpace, scene_id: str = "hand_built", cell_size: float = 0.3) -> Scene:
    """
    Build a scene from an ASCII layout.

    '#' marks a blocked cell, any other character names a region instance;
    `labels` maps those characters to region category names. Instance ids
    follow the row-major order in which characters first appear.
    """
    keys: List[str] = []
    for row in layout:
        for ch in row:
            if ch != WALL_CHAR and ch not in keys:
                keys.append(ch)
    missing = [k for k in keys if k not in labels]
    if missing:
        raise SceneFormatError(f"layout characters without a region label: {missing}")
    widths = {len(row) for row in layout}
    if len(widths) != 1:
        raise SceneFormatError("layout rows must all have the same width")
    grid = np.full((len(layout), widths.pop()), BLOCKED, dtype=np.int32)
    for r, row in enumerate(layout):
        for c, ch in enumerate(row):
            if ch != WALL_CHAR:
                grid[r, c] = keys.index(ch)
    categories = [space.region_index(labels[k]) for k in keys]
    regions = _instance_tables(grid, categories)
    for region in regions:
        if not _is_4_connected(region.cells):
            raise SceneFormatError(f"region instance {region.id} is not 4-connected")
    object_list = []
    for name, cell in objects:
        cell = (int(cell[0]), int(cell[1]))
        if not (0 <= cell[0] < grid.shape[0] and 0 <= cell[1] < grid.shape[1]) or grid[cell] == BLOCKED:
            raise SceneFormatError(f"object {name!r} placed on blocked cell {cell}")
        object_list.append(ObjectInstance(len(object_list), space.object_index(name), cell))
    return Scene(scene_id, grid, regions, object_list, cell_size, space.hash)


def _is_4_connected(cells: FrozenSet[Cell]) -> bool:
    start = min(cells)
    seen = {start}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for nxt in ((r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)):
            if nxt in cells and nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(cells)


# ---------------------------------------------------------------------------
# Geometric queries
# ---------------------------------------------------------------------------

class ShortestPathTree:
    """Breadth-first tree from one source; expansion in lexicographic (row, col) order."""

    def __init__(self, scene: Scene, source: Cell):
        if not scene.is_free(source):
            raise NoPathError(f"source cell {source} is blocked")
        self.scene = scene
        self.source = (int(source[0]), int(source[1]))
        self.dist = np.full(scene.shape, -1, dtype=np.int32)
        self._parent: Dict[Cell, Cell] = {}
        self.dist[self.source] = 0
        queue = deque([self.source])
        while queue:
            cell = queue.popleft()
            d = self.dist[cell] + 1
            for nxt in scene.neighbors(cell):
                if self.dist[nxt] < 0:
                    self.dist[nxt] = d
                    self._parent[nxt] = cell
                    queue.append(nxt)

    def reachable(self, cell: Cell) -> bool:
        return self.scene.in_bounds(cell) and self.dist[cell] >= 0

    def distance_m(self, cell: Cell) -> float:
        if not self.reachable(cell):
            raise NoPathError(f"no path from {self.source} to {cell}")
        return float(self.dist[cell]) * self.scene.cell_size

    def path_to(self, cell: Cell) -> Path:
        cell = (int(cell[0]), int(cell[1]))
        if not self.reachable(cell):
            raise NoPathError(f"no path from {self.source} to {cell}")
        cells = [cell]
        while cells[-1] != self.source:
            cells.append(self._parent[cells[-1]])
        return Path(tuple(reversed(cells)), self.scene.cell_size)


def geodesic_path(scene: Scene, start: Cell, goal: Cell) -> Path:
    """Shortest 4-connected path; raises NoPathError when the goal is unreachable."""
    if not scene.is_free(goal):
        raise NoPathError(f"goal cell {goal} is blocked")
    return ShortestPathTree(scene, start).path_to(goal)


def bresenham_line(a: Cell, b: Cell) -> List[Cell]:
    (r0, c0), (r1, c1) = a, b
    cells = []
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    err = dc - dr
    r, c = r0, c0
    while True:
        cells.append((r, c))
        if (r, c) == (r1, c1):
            return cells
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr


def line_of_sight(scene: Scene, a: Cell, b: Cell) -> bool:
    return all(scene.is_free(cell) for cell in bresenham_line(a, b))


def visible_objects(scene: Scene, pose: Pose, radius_m: float,
                    candidates: Optional[Iterable[ObjectInstance]] = None) -> List[ObjectInstance]:
    """Objects within radius_m with a clear line of sight, nearest first (ties by id)."""
    if radius_m <= 0:
        raise ValueError("radius_m must be positive")
    hits = []
    for obj in (scene.objects if candidates is None else candidates):
        dist = scene.euclidean_m(pose.cell, obj.cell)
        if dist <= radius_m and line_of_sight(scene, pose.cell, obj.cell):
            hits.append((dist, obj.id, obj))
    hits.sort(key=lambda h: (h[0], h[1]))
    return [h[2] for h in hits]


def region_sequence_of_path(scene: Scene, path: Path) -> List[int]:
    """Region categories met along the path, consecutive repeats collapsed."""
    sequence: List[int] = []
    for cell in path.cells:
        region = scene.region_at(cell)
        if region is None:
            raise NoPathError(f"path crosses blocked cell {cell}")
        if not sequence or sequence[-1] != region.category:
            sequence.append(region.category)
    return sequence


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def scene_to_dict(scene: Scene, space: CategorySpace) -> Dict:
    if len(scene.regions) > len(GRID_CHARS):
        raise SceneFormatError("too many region instances for the text grid")
    rows = []
    for r in range(scene.shape[0]):
        rows.append("".join(
            WALL_CHAR if v == BLOCKED else GRID_CHARS[int(v)] for v in scene.grid[r].tolist()
        ))
    return {
        "format_version": SCENE_FORMAT_VERSION,
        "category_space_hash": space.hash,
        "id": scene.id,
        "cell_size": scene.cell_size,
        "grid": rows,
        "regions": [
            {
                "id": reg.id,
                "category": space.region_categories[reg.category],
                "doorways": [list(c) for c in sorted(reg.doorways)],
            }
            for reg in scene.regions
        ],
        "objects": [
            {"id": o.id, "category": space.object_categories[o.category], "cell": list(o.cell)}
            for o in scene.objects
        ],
    }


def scene_to_json(scene: Scene, space: CategorySpace) -> str:
    return canonical_json(scene_to_dict(scene, space))


def scene_from_dict(data: Mapping, space: CategorySpace) -> Scene:
    try:
        if data["format_version"] != SCENE_FORMAT_VERSION:
            raise SceneFormatError(f"unsupported scene format_version {data['format_version']}")
        if data["category_space_hash"] != space.hash:
            raise HashMismatchError(
                f"scene {data.get('id')} was built for category space {data['category_space_hash']}, "
                f"expected {space.hash}"
            )
        rows = data["grid"]
        grid = np.full((len(rows), len(rows[0]) if rows else 0), BLOCKED, dtype=np.int32)
        for r, row in enumerate(rows):
            for c, ch in enumerate(row):
                if ch != WALL_CHAR:
                    grid[r, c] = GRID_CHARS.index(ch)
        table = sorted(data["regions"], key=lambda reg: reg["id"])
        categories = {reg["id"]: space.region_index(reg["category"]) for reg in table}
        regions = _instance_tables(grid, [categories[i] for i in range(len(table))])
        for reg, stored in zip(regions, table):
            if sorted(reg.doorways) != sorted(tuple(c) for c in stored["doorways"]):
                raise SceneFormatError(f"doorway table of region {reg.id} disagrees with the grid")
        objects = [
            ObjectInstance(int(o["id"]), space.object_index(o["category"]), (int(o["cell"][0]), int(o["cell"][1])))
            for o in sorted(data["objects"], key=lambda o: o["id"])
        ]
    except (KeyError, IndexError, TypeError) as e:
        raise SceneFormatError(f"malformed scene document: {e}") from e
    return Scene(data["id"], grid, regions, objects, float(data["cell_size"]), space.hash)


def scene_from_json(text: str, space: CategorySpace) -> Scene:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"scene file is not valid JSON: {e}") from e
    return scene_from_dict(data, space)


def save_scene(path, scene: Scene, space: CategorySpace):
    return write_text(path, scene_to_json(scene, space))


def load_scene(path, space: CategorySpace) -> Scene:
    return scene_from_json(read_text(path), space)
