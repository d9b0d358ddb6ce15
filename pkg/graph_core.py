"""
Scene graphs and the Spatial Relational Graph (SRG).

A scene graph holds region instances, object instances, the doorway
adjacency between regions and one `includes` edge per object. The SRG folds
many scene graphs into one graph over categories whose edge weights are
co-occurrence frequencies.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Mapping, Sequence, Tuple

import networkx as nx
import numpy as np
from jinja2 import Environment

from errors import HashMismatchError, MalformedFileError
from scene_world import CategorySpace, Scene, region_adjacency_pairs
from utils import canonical_json, read_text, write_text

logger = logging.getLogger(__name__)

SRG_FORMAT_VERSION = 1
INCLUDES = "includes"
ADJACENCY = "adjacency"


@dataclass(eq=False)
class SceneGraph:
    """Instance-level graph of one scene. Nodes are ("region", id) or ("object", id)."""

    scene_id: str
    graph: nx.Graph

    def _nodes(self, kind: str) -> List[Tuple[str, int]]:
        return sorted(n for n, d in self.graph.nodes(data=True) if d["kind"] == kind)

    @property
    def region_nodes(self) -> List[Tuple[str, int]]:
        return self._nodes("region")

    @property
    def object_nodes(self) -> List[Tuple[str, int]]:
        return self._nodes("object")

    def category(self, node) -> int:
        return self.graph.nodes[node]["category"]

    def _edges(self, relation: str) -> List[Tuple[int, int]]:
        out = []
        for u, v, d in self.graph.edges(data=True):
            if d["relation"] != relation:
                continue
            if relation == INCLUDES:
                obj, reg = (u, v) if u[0] == "object" else (v, u)
                out.append((obj[1], reg[1]))
            else:
                out.append((min(u[1], v[1]), max(u[1], v[1])))
        return sorted(out)

    @property
    def adjacency_edges(self) -> List[Tuple[int, int]]:
        """Region instance id pairs (a < b)."""
        return self._edges(ADJACENCY)

    @property
    def includes_edges(self) -> List[Tuple[int, int]]:
        """(object id, region id) pairs."""
        return self._edges(INCLUDES)


def extract_scene_graph(scene: Scene) -> SceneGraph:
    g = nx.Graph()
    for region in scene.regions:
        g.add_node(("region", region.id), kind="region", category=region.category)
    for obj in scene.objects:
        g.add_node(("object", obj.id), kind="object", category=obj.category)
        g.add_edge(("object", obj.id), ("region", scene.region_id_at(obj.cell)), relation=INCLUDES)
    for a, b in region_adjacency_pairs(scene):
        g.add_edge(("region", a), ("region", b), relation=ADJACENCY)
    return SceneGraph(scene.id, g)


@dataclass(eq=False)
class SRG:
    """
    Category-level graph. Node keys are category names, node attributes
    `kind` ("region" | "object") and `index`; edge attributes `relation`
    and `weight`.
    """

    space: CategorySpace
    graph: nx.Graph
    region_freq: np.ndarray
    includes_count: np.ndarray
    co_adjacency: np.ndarray
    num_graphs: int

    @property
    def num_edges(self) -> int:
        return self.graph.number_of_edges()

    def node_index(self, name: str) -> int:
        node = self.graph.nodes[name]
        if node["kind"] == "region":
            return node["index"]
        return self.space.object_node(node["index"])

    def edges(self) -> List[Tuple[int, int, str, float]]:
        """(u, v, relation, weight) with u < v in node-index order, sorted."""
        out = []
        for u, v, d in self.graph.edges(data=True):
            iu, iv = self.node_index(u), self.node_index(v)
            out.append((min(iu, iv), max(iu, iv), d["relation"], d["weight"]))
        return sorted(out)

    def includes_weight(self, obj: int, region: int) -> float:
        data = self.graph.get_edge_data(self.space.object_categories[obj], self.space.region_categories[region])
        return 0.0 if data is None else data["weight"]

    def adjacency_weight(self, a: int, b: int) -> float:
        data = self.graph.get_edge_data(self.space.region_categories[a], self.space.region_categories[b])
        return 0.0 if data is None else data["weight"]

    @cached_property
    def includes_matrix(self) -> np.ndarray:
        """p(object | region) as an |objects| x |regions| array, 0 where no edge exists."""
        table = np.zeros((self.space.num_objects, self.space.num_regions))
        for u, v, relation, weight in self.edges():
            if relation == INCLUDES:
                table[v - self.space.num_regions, u] = weight
        return table


@dataclass(eq=False)
class PrunedSRG(SRG):
    threshold: float = 0.5


def _category_graph(space: CategorySpace) -> nx.Graph:
    g = nx.Graph()
    for i, name in enumerate(space.region_categories):
        g.add_node(name, kind="region", index=i)
    for j, name in enumerate(space.object_categories):
        g.add_node(name, kind="object", index=j)
    return g


def tally_scene_graphs(scene_graphs: Sequence[SceneGraph], space: CategorySpace):
    """Frequency tables: region_freq (R,), includes_count (O, R), co_adjacency (R, R)."""
    region_freq = np.zeros(space.num_regions, dtype=np.int64)
    includes_count = np.zeros((space.num_objects, space.num_regions), dtype=np.int64)
    co_adjacency = np.zeros((space.num_regions, space.num_regions), dtype=np.int64)
    for sg in scene_graphs:
        for node in sg.region_nodes:
            region_freq[sg.category(node)] += 1
        contained = set()
        for obj_id, reg_id in sg.includes_edges:
            contained.add((sg.category(("object", obj_id)), reg_id))
        for obj_cat, reg_id in contained:
            includes_count[obj_cat, sg.category(("region", reg_id))] += 1
        for a, b in sg.adjacency_edges:
            ca, cb = sg.category(("region", a)), sg.category(("region", b))
            co_adjacency[ca, cb] += 1
            if ca != cb:
                co_adjacency[cb, ca] += 1
    return region_freq, includes_count, co_adjacency


def build_srg(scene_graphs: Sequence[SceneGraph], space: CategorySpace) -> SRG:
    """
    includes weight(o, r) = #instances of r holding at least one o / freq(r)
    adjacency weight(a, b) = #adjacent (a, b) instance pairs / min(freq(a), freq(b)), clamped to 1
    """
    if not scene_graphs:
        raise ValueError("build_srg needs at least one scene graph")
    region_freq, includes_count, co_adjacency = tally_scene_graphs(scene_graphs, space)
    srg = _srg_from_tables(space, region_freq, includes_count, co_adjacency, len(scene_graphs))
    logger.info("Built SRG from %d scene graphs: %d nodes, %d edges",
                len(scene_graphs), srg.graph.number_of_nodes(), srg.num_edges)
    return srg


def _srg_from_tables(space, region_freq, includes_count, co_adjacency, num_graphs) -> SRG:
    g = _category_graph(space)
    for o in range(space.num_objects):
        for r in range(space.num_regions):
            if region_freq[r] == 0 or includes_count[o, r] == 0:
                continue
            g.add_edge(space.object_categories[o], space.region_categories[r],
                       relation=INCLUDES, weight=int(includes_count[o, r]) / int(region_freq[r]))
    for a in range(space.num_regions):
        for b in range(a + 1, space.num_regions):
            count = int(co_adjacency[a, b])
            if count == 0:
                continue
            weight = count / min(int(region_freq[a]), int(region_freq[b]))
            if weight > 1.0:
                logger.warning("adjacency weight %s-%s = %.3f clamped to 1.0",
                               space.region_categories[a], space.region_categories[b], weight)
                weight = 1.0
            g.add_edge(space.region_categories[a], space.region_categories[b],
                       relation=ADJACENCY, weight=weight)
    return SRG(space, g, region_freq, includes_count, co_adjacency, num_graphs)


def prune_srg(srg: SRG, threshold: float = 0.5) -> PrunedSRG:
    """Keep only edges with weight > threshold; nodes are untouched."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"prune threshold must lie in [0, 1], got {threshold}")
    g = nx.Graph()
    g.add_nodes_from(srg.graph.nodes(data=True))
    g.add_edges_from((u, v, d) for u, v, d in srg.graph.edges(data=True) if d["weight"] > threshold)
    logger.info("Pruned SRG at %.2f: %d of %d edges kept", threshold, g.number_of_edges(), srg.num_edges)
    return PrunedSRG(srg.space, g, srg.region_freq, srg.includes_count, srg.co_adjacency,
                     srg.num_graphs, threshold=threshold)


def srg_to_gcn_inputs(pruned: SRG, space: CategorySpace) -> Tuple[np.ndarray, np.ndarray]:
    """Binary symmetric adjacency (N x N) and one-hot features (N x N)."""
    if pruned.space.hash != space.hash:
        raise HashMismatchError("SRG and category space disagree")
    n = space.num_nodes
    adjacency = np.zeros((n, n))
    for u, v, _, _ in pruned.edges():
        adjacency[u, v] = adjacency[v, u] = 1.0
    return adjacency, np.eye(n)


_DOT_TEMPLATE = Environment(trim_blocks=True, lstrip_blocks=True, keep_trailing_newline=True).from_string(
    """graph srg {
{% for node in nodes %}
  "{{ node.name }}" [kind={{ node.kind }}, shape={{ node.shape }}];
{% endfor %}
{% for edge in edges %}
  "{{ edge.u }}" -- "{{ edge.v }}" [relation={{ edge.relation }}, label="{{ "%.2f"|format(edge.weight) }}"];
{% endfor %}
}
"""
)


def export_dot(srg: SRG) -> str:
    """Graphviz text; nodes with no edges are left out."""
    names = srg.space.node_names
    edges = srg.edges()
    used = sorted({i for u, v, _, _ in edges for i in (u, v)})
    nodes = [
        {
            "name": names[i],
            "kind": "region" if i < srg.space.num_regions else "object",
            "shape": "box" if i < srg.space.num_regions else "ellipse",
        }
        for i in used
    ]
    return _DOT_TEMPLATE.render(
        nodes=nodes,
        edges=[{"u": names[u], "v": names[v], "relation": rel, "weight": w} for u, v, rel, w in edges],
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def srg_to_dict(srg: SRG) -> Dict:
    names = srg.space.node_names
    data = {
        "format_version": SRG_FORMAT_VERSION,
        "category_space_hash": srg.space.hash,
        "category_space": srg.space.to_dict(),
        "num_graphs": srg.num_graphs,
        "region_freq": srg.region_freq.tolist(),
        "includes_count": srg.includes_count.tolist(),
        "co_adjacency": srg.co_adjacency.tolist(),
        "edges": [
            {"u": names[u], "v": names[v], "relation": rel, "weight": w}
            for u, v, rel, w in srg.edges()
        ],
        "pruned": isinstance(srg, PrunedSRG),
    }
    if isinstance(srg, PrunedSRG):
        data["threshold"] = srg.threshold
    return data


def srg_from_dict(data: Mapping, space: CategorySpace) -> SRG:
    try:
        if data["format_version"] != SRG_FORMAT_VERSION:
            raise MalformedFileError(f"unsupported SRG format_version {data['format_version']}")
        if data["category_space_hash"] != space.hash:
            raise HashMismatchError(
                f"SRG built for category space {data['category_space_hash']}, expected {space.hash}"
            )
        g = _category_graph(space)
        for e in data["edges"]:
            g.add_edge(e["u"], e["v"], relation=e["relation"], weight=float(e["weight"]))
        args = (
            space, g,
            np.array(data["region_freq"], dtype=np.int64),
            np.array(data["includes_count"], dtype=np.int64),
            np.array(data["co_adjacency"], dtype=np.int64),
            int(data["num_graphs"]),
        )
        if data["pruned"]:
            return PrunedSRG(*args, threshold=float(data["threshold"]))
        return SRG(*args)
    except (KeyError, TypeError) as e:
        raise MalformedFileError(f"malformed SRG document: {e}") from e


def save_srg(path, srg: SRG):
    return write_text(path, canonical_json(srg_to_dict(srg)))


def load_srg(path, space: CategorySpace) -> SRG:
    try:
        data = json.loads(read_text(path))
    except json.JSONDecodeError as e:
        raise MalformedFileError(f"{path}: not valid JSON ({e})") from e
    return srg_from_dict(data, space)
