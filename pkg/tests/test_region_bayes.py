import itertools

import networkx as nx
import numpy as np
import pytest

from graph_core import INCLUDES, SRG, build_srg, extract_scene_graph
from region_bayes import (
    EPSILON,
    nearest_objects,
    region_posterior,
    smoothing,
    visible_regions,
)
from scene_world import (
    CategorySpace,
    ObjectInstance,
    Pose,
    SceneGenConfig,
    generate_scene_set,
    visible_objects,
)
from utils import make_rng


def _srg(space, table):
    """SRG with includes weights taken from an |objects| x |regions| table."""
    g = nx.Graph()
    for i, name in enumerate(space.region_categories):
        g.add_node(name, kind="region", index=i)
    for j, name in enumerate(space.object_categories):
        g.add_node(name, kind="object", index=j)
    table = np.asarray(table, dtype=float)
    for o, r in zip(*np.nonzero(table)):
        g.add_edge(space.object_categories[o], space.region_categories[r], relation=INCLUDES,
                   weight=float(table[o, r]))
    zeros_r = np.zeros(space.num_regions, dtype=np.int64)
    return SRG(space, g, zeros_r, np.zeros(table.shape, dtype=np.int64),
               np.zeros((space.num_regions, space.num_regions), dtype=np.int64), 0)


def _oracle(table, objects, eps=EPSILON):
    scores = np.ones(table.shape[1])
    for o in objects:
        scores = scores * np.array([w if w > eps else eps for w in table[o]])
    if not any(w > eps for o in objects for w in table[o]):
        return np.full(table.shape[1], 1.0 / table.shape[1])
    return scores / scores.sum()


ROOMS = CategorySpace(("bedroom", "kitchen", "bathroom", "hallway"), ("bed", "sink", "lamp"))


class TestSmoothing:
    def test_zero_floors_at_epsilon(self):
        assert smoothing(0.0) == 1e-4

    def test_weight_passes_through(self):
        assert smoothing(0.9) == 0.9

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            smoothing(1.2)


class TestRegionPosterior:
    def test_two_term_normalization(self):
        srg = _srg(ROOMS, [[0.9, 0.05, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
        post = region_posterior(srg, [0])
        assert post.argmax == 0
        assert not post.degenerate
        assert post.distribution[0] == pytest.approx(0.947, abs=1e-3)
        assert post.distribution[1] == pytest.approx(0.053, abs=1e-3)

    def test_no_evidence_is_uniform(self):
        srg = _srg(ROOMS, [[0.9, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
        for objects in ([], [1], [1, 2]):
            post = region_posterior(srg, objects)
            assert post.degenerate
            np.testing.assert_array_equal(post.distribution, np.full(4, 0.25))

    def test_matches_product_oracle(self):
        rng = make_rng(0)
        for _ in range(100):
            table = rng.random((3, 4)) * (rng.random((3, 4)) < 0.7)
            objects = [int(o) for o in rng.integers(0, 3, size=3)]
            post = region_posterior(_srg(ROOMS, table), objects)
            np.testing.assert_allclose(post.distribution, _oracle(table, objects), rtol=0, atol=1e-12)

    def test_shift_invariance(self):
        srg = _srg(ROOMS, [[0.9, 0.3, 0, 0.2], [0.1, 0.8, 0.5, 0], [0, 0, 0.6, 0.6]])
        post = region_posterior(srg, [0, 1, 2])
        product = np.exp(post.log_scores)
        np.testing.assert_allclose(post.distribution, product / product.sum(), rtol=1e-12)
        shifted = post.log_scores + np.log(2.0)
        np.testing.assert_allclose(np.exp(shifted) / np.exp(shifted).sum(), post.distribution, rtol=1e-12)
        assert int(np.argmax(shifted)) == post.argmax

    def test_order_invariance(self):
        srg = _srg(ROOMS, [[0.9, 0.3, 0, 0.2], [0.1, 0.8, 0.5, 0], [0, 0, 0.6, 0.6]])
        base = region_posterior(srg, [0, 1, 2, 1]).distribution
        for perm in itertools.permutations([0, 1, 2, 1]):
            np.testing.assert_allclose(region_posterior(srg, list(perm)).distribution, base, rtol=1e-12)

    def test_incremental_equals_batch(self):
        srg = _srg(ROOMS, [[0.9, 0.3, 0, 0.2], [0.1, 0.8, 0.5, 0], [0, 0, 0.6, 0.6]])
        batch = region_posterior(srg, [2, 0, 1])
        step = region_posterior(srg, [2]).extend(srg, [0]).extend(srg, [1])
        np.testing.assert_array_equal(step.log_scores, batch.log_scores)
        np.testing.assert_array_equal(step.distribution, batch.distribution)
        assert step.objects == (2, 0, 1)

    def test_single_supporting_region_takes_the_mass(self):
        srg = _srg(ROOMS, [[0, 0, 0.7, 0], [0, 0, 0.9, 0], [0, 0, 0.4, 0]])
        post = region_posterior(srg, [0, 1, 2])
        assert post.argmax == 2
        assert post.distribution[2] > 1 - 1e-6

    def test_ties_go_to_lowest_index(self):
        srg = _srg(ROOMS, [[0, 0.5, 0.5, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
        assert region_posterior(srg, [0]).argmax == 1

    def test_long_object_list_does_not_underflow(self):
        srg = _srg(ROOMS, [[0.01, 0.005, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
        post = region_posterior(srg, [0] * 400)
        assert np.all(np.isfinite(post.log_scores))
        assert not post.degenerate
        assert post.argmax == 0
        assert post.distribution[0] > 1 - 1e-9
        assert post.distribution.sum() == pytest.approx(1.0)

    def test_eps_must_be_positive(self):
        srg = _srg(ROOMS, [[0.9, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
        with pytest.raises(ValueError):
            region_posterior(srg, [0], eps=0.0)


class TestVisibleRegions:
    def test_single_object(self):
        srg = _srg(ROOMS, [[0.2, 0.7, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
        result = visible_regions(srg, [ObjectInstance(4, 0, (1, 1))])
        (assignment,) = list(result)
        assert assignment.candidate_ids == (4,)
        assert assignment.label == 1
        assert result.label_of(4) == 1

    def test_living_room_group(self):
        space = CategorySpace(("bedroom", "living_room", "kitchen"), ("sofa", "cushion", "table", "picture", "bed"))
        table = [
            [0.05, 0.9, 0.0],
            [0.3, 0.7, 0.0],
            [0.0, 0.6, 0.5],
            [0.4, 0.6, 0.0],
            [0.95, 0.0, 0.0],
        ]
        srg = _srg(space, table)
        cat = space.object_index
        seen = [
            ObjectInstance(0, cat("sofa"), (2, 2)),
            ObjectInstance(1, cat("sofa"), (2, 4)),
            ObjectInstance(2, cat("cushion"), (3, 3)),
            ObjectInstance(3, cat("table"), (4, 3)),
            ObjectInstance(4, cat("picture"), (1, 5)),
        ]
        result = visible_regions(srg, seen, k=4)
        assert result.regions() == [space.region_index("living_room")]
        assert len(result.anchors(space.region_index("living_room"))) == 5

    def test_matches_independent_recomputation(self):
        rng = make_rng(5)
        for _ in range(10):
            table = rng.random((3, 4)) * (rng.random((3, 4)) < 0.6)
            srg = _srg(ROOMS, table)
            cells = rng.choice(100, size=8, replace=False)
            seen = [ObjectInstance(i, int(rng.integers(3)), (int(c) // 10, int(c) % 10)) for i, c in enumerate(cells)]
            k = int(rng.integers(0, 6))
            result = visible_regions(srg, seen, k=k)
            for obj in seen:
                ranked = sorted(
                    (o for o in seen if o.id != obj.id),
                    key=lambda o: ((o.cell[0] - obj.cell[0]) ** 2 + (o.cell[1] - obj.cell[1]) ** 2, o.id),
                )
                group = [obj.category] + [o.category for o in ranked[:k]]
                expected = int(np.argmax(_oracle(table, group)))
                assert result.label_of(obj.id) == expected

    def test_nearest_ties_by_id(self):
        center = ObjectInstance(0, 0, (5, 5))
        others = [ObjectInstance(3, 0, (5, 6)), ObjectInstance(1, 0, (4, 5)), ObjectInstance(2, 0, (7, 7))]
        assert [o.id for o in nearest_objects(center, [center] + others, 2)] == [1, 3]

    def test_negative_k(self):
        with pytest.raises(ValueError):
            visible_regions(_srg(ROOMS, np.zeros((3, 4))), [], k=-1)

    def test_empty_view(self):
        assert len(visible_regions(_srg(ROOMS, np.zeros((3, 4))), [])) == 0


class TestLabelRecovery:
    def test_peaked_priors_recover_room_labels(self):
        space = CategorySpace(
            ("bedroom", "bathroom", "kitchen", "living_room"),
            ("bed", "lamp", "toilet", "towel", "sink", "counter", "sofa", "tv_monitor"),
        )
        dominant = {
            "bed": "bedroom", "lamp": "bedroom", "toilet": "bathroom", "towel": "bathroom",
            "sink": "kitchen", "counter": "kitchen", "sofa": "living_room", "tv_monitor": "living_room",
        }
        config = SceneGenConfig.from_tables(
            space,
            placement={obj: {room: 0.95} for obj, room in dominant.items()},
            background_placement=0.02,
            num_regions=4, grid_rows=44, grid_cols=44, object_copies=5,
        )
        training = generate_scene_set(config, 30, seed=1, prefix="train")
        held_out = generate_scene_set(config, 20, seed=2, prefix="test")
        srg = build_srg([extract_scene_graph(s) for s in training], space)

        correct = total = 0
        for scene in held_out:
            for region in scene.regions:
                seen = visible_objects(scene, Pose(region.centroid_cell), 10.0)
                labels = visible_regions(srg, seen, k=4)
                # objects seen through a doorway count against their own room
                for obj in seen:
                    total += 1
                    correct += labels.label_of(obj.id) == scene.region_at(obj.cell).category
        assert total > 400
        assert correct / total >= 0.9
