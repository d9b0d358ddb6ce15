import itertools
import json

import networkx as nx
import numpy as np
import pytest

from errors import ConfigError, HashMismatchError, NoPathError, SceneFormatError
from scene_world import (
    BLOCKED,
    CategorySpace,
    ObjectInstance,
    Pose,
    SceneGenConfig,
    build_scene,
    derive_seeds,
    generate_scene,
    geodesic_path,
    line_of_sight,
    load_scene,
    region_adjacency_pairs,
    region_sequence_of_path,
    regions_connected,
    save_scene,
    scene_from_json,
    scene_to_dict,
    scene_to_json,
    visible_objects,
)
from utils import make_rng


def _bfs_oracle(scene):
    g = nx.grid_2d_graph(*scene.shape)
    g.remove_nodes_from([c for c in list(g.nodes) if not scene.is_free(c)])
    return g


class TestCategorySpace:
    def test_default_space_has_47_nodes(self):
        space = CategorySpace.default()
        assert space.num_regions == 28
        assert space.num_objects == 19
        assert space.num_nodes == 47

    def test_names_are_cleaned_and_indexed(self):
        space = CategorySpace(("Living Room", "hallway"), ("TV Monitor",))
        assert space.region_index("living room") == 0
        assert space.object_node(space.object_index("tv_monitor")) == 2

    def test_duplicate_names_rejected(self):
        with pytest.raises(ConfigError):
            CategorySpace(("bedroom", "bedroom"), ("bed",))

    def test_unknown_name_rejected(self, house_space):
        with pytest.raises(ConfigError):
            house_space.region_index("attic")

    def test_hash_tracks_order(self):
        a = CategorySpace(("bedroom", "kitchen"), ("bed",))
        b = CategorySpace(("kitchen", "bedroom"), ("bed",))
        assert a.hash == CategorySpace(("bedroom", "kitchen"), ("bed",)).hash
        assert a.hash != b.hash

    def test_dict_round_trip(self, house_space):
        assert CategorySpace.from_dict(house_space.to_dict()) == house_space


class TestPose:
    @pytest.mark.parametrize("heading,axis", [(0, 0), (3, 1), (6, 2), (9, 3), (11, 0), (1, 0), (2, 1)])
    def test_heading_snaps_to_axis(self, heading, axis):
        assert Pose((0, 0), heading).axis == axis

    def test_heading_out_of_range(self):
        with pytest.raises(ValueError):
            Pose((0, 0), 12)


class TestGenerateScene:
    def test_single_region_single_object(self):
        space = CategorySpace(("bedroom",), ("bed",))
        config = SceneGenConfig(space, [1.0], [[1.0]], num_regions=1, grid_rows=8, grid_cols=8)
        scene = generate_scene(config, seed=3)
        assert len(scene.regions) == 1
        assert len(scene.objects) == 1
        assert scene.region_id_at(scene.objects[0].cell) == 0
        assert scene.regions[0].doorways == frozenset()

    def test_same_seed_gives_identical_serialization(self, tiny_config):
        a = generate_scene(tiny_config, seed=42)
        b = generate_scene(tiny_config, seed=42)
        assert scene_to_json(a, tiny_config.space) == scene_to_json(b, tiny_config.space)

    def test_different_seeds_differ(self, tiny_config):
        a = generate_scene(tiny_config, seed=1)
        b = generate_scene(tiny_config, seed=2)
        assert scene_to_json(a, tiny_config.space) != scene_to_json(b, tiny_config.space)

    def test_beds_only_in_bedrooms(self):
        space = CategorySpace(("bedroom", "kitchen", "hallway"), ("bed", "sink"))
        config = SceneGenConfig.from_tables(
            space,
            placement={"bed": {"bedroom": 1.0}, "sink": {"kitchen": 0.5}},
            num_regions=3, grid_rows=16, grid_cols=16,
        )
        bedroom = space.region_index("bedroom")
        for seed in derive_seeds(5, 100):
            scene = generate_scene(config, seed)
            for obj in scene.objects_of_category(space.object_index("bed")):
                assert scene.region_at(obj.cell).category == bedroom

    def test_generated_scenes_are_well_formed(self, tiny_scenes):
        for scene in tiny_scenes:
            assert len(scene.regions) == 5
            assert regions_connected(scene)
            assert [o.id for o in scene.objects] == list(range(len(scene.objects)))
            cells = [o.cell for o in scene.objects]
            assert len(set(cells)) == len(cells)
            for obj in scene.objects:
                region = scene.region_at(obj.cell)
                assert region is not None
                assert obj.cell not in region.doorways
            assert (scene.grid[0, :] == BLOCKED).all()
            assert (scene.grid[:, -1] == BLOCKED).all()

    def test_scene_set_ids(self, tiny_scenes):
        assert [s.id for s in tiny_scenes] == [f"tiny_{i:03d}" for i in range(6)]

    def test_unplaceable_object_rejected(self):
        space = CategorySpace(("bedroom", "kitchen"), ("bed", "sink"))
        config = SceneGenConfig.from_tables(space, placement={"bed": {"bedroom": 0.9}})
        with pytest.raises(ConfigError, match="sink"):
            config.validate()

    def test_placement_out_of_range_rejected(self):
        space = CategorySpace(("bedroom",), ("bed",))
        with pytest.raises(ConfigError):
            SceneGenConfig(space, [1.0], [[1.5]], num_regions=1).validate()


class TestBuildScene:
    def test_instance_ids_follow_first_appearance(self, corridor_scene, house_space):
        cats = [house_space.region_categories[r.category] for r in corridor_scene.regions]
        assert cats == ["living_room", "hallway", "bedroom"]
        assert corridor_scene.regions[1].doorways == frozenset({(3, 5), (3, 8)})

    def test_corridor_adjacency(self, corridor_scene):
        assert region_adjacency_pairs(corridor_scene) == [(0, 1), (1, 2)]

    def test_unlabeled_character(self, house_space):
        with pytest.raises(SceneFormatError):
            build_scene(["AB"], {"A": "bedroom"}, [], house_space)

    def test_ragged_rows(self, house_space):
        with pytest.raises(SceneFormatError):
            build_scene(["AA", "A"], {"A": "bedroom"}, [], house_space)

    def test_split_instance(self, house_space):
        with pytest.raises(SceneFormatError):
            build_scene(["A#A"], {"A": "bedroom"}, [], house_space)

    def test_object_on_wall(self, house_space):
        with pytest.raises(SceneFormatError):
            build_scene(["A#"], {"A": "bedroom"}, [("bed", (0, 1))], house_space)


class TestGeodesicPath:
    def test_same_cell(self, corridor_scene):
        path = geodesic_path(corridor_scene, (1, 1), (1, 1))
        assert path.length_m == 0.0
        assert len(path) == 1

    def test_straight_corridor(self, house_space):
        scene = build_scene(["#######", "#AAAAA#", "#######"], {"A": "hallway"}, [], house_space)
        assert geodesic_path(scene, (1, 1), (1, 5)).length_m == pytest.approx(1.2)

    def test_unreachable(self, house_space):
        scene = build_scene(["A#B"], {"A": "hallway", "B": "bedroom"}, [], house_space)
        with pytest.raises(NoPathError):
            geodesic_path(scene, (0, 0), (0, 2))

    def test_blocked_goal(self, corridor_scene):
        with pytest.raises(NoPathError):
            geodesic_path(corridor_scene, (1, 1), (0, 0))

    def test_matches_bfs_oracle(self, tiny_scenes):
        rng = make_rng(0)
        scene = tiny_scenes[0]
        oracle = _bfs_oracle(scene)
        free = scene.free_cells()
        for _ in range(50):
            a = free[int(rng.integers(len(free)))]
            b = free[int(rng.integers(len(free)))]
            path = geodesic_path(scene, a, b)
            expected = nx.shortest_path_length(oracle, a, b)
            assert len(path) - 1 == expected
            assert path.length_m == pytest.approx(expected * scene.cell_size)
            for u, v in zip(path.cells, path.cells[1:]):
                assert abs(u[0] - v[0]) + abs(u[1] - v[1]) == 1

    def test_symmetric(self, tiny_scenes):
        rng = make_rng(1)
        for scene in tiny_scenes:
            free = scene.free_cells()
            for _ in range(20):
                a = free[int(rng.integers(len(free)))]
                b = free[int(rng.integers(len(free)))]
                assert geodesic_path(scene, a, b).length_m == geodesic_path(scene, b, a).length_m


class TestVisibleObjects:
    @pytest.fixture
    def pillar_room(self, house_space):
        layout = ["AAAAA", "AAAAA", "A#AAA", "AAAAA", "AAAAA"]
        return build_scene(layout, {"A": "living_room"}, [("sofa", (0, 0)), ("plant", (2, 2))], house_space)

    def test_no_objects(self, house_space):
        scene = build_scene(["AAA"], {"A": "bedroom"}, [], house_space)
        assert visible_objects(scene, Pose((0, 0)), 10.0) == []

    def test_wall_blocks_view(self, pillar_room):
        seen = visible_objects(pillar_room, Pose((2, 0)), 10.0)
        assert [o.id for o in seen] == [0]
        assert not line_of_sight(pillar_room, (2, 0), (2, 2))

    def test_radius_boundary(self, pillar_room):
        dist = pillar_room.euclidean_m((2, 0), (0, 0))
        assert [o.id for o in visible_objects(pillar_room, Pose((2, 0)), dist)] == [0]
        assert visible_objects(pillar_room, Pose((2, 0)), dist - 1e-9) == []

    def test_nearest_first(self, pillar_room):
        seen = visible_objects(pillar_room, Pose((1, 2)), 10.0)
        assert [o.id for o in seen] == [1, 0]

    def test_radius_must_be_positive(self, pillar_room):
        with pytest.raises(ValueError):
            visible_objects(pillar_room, Pose((0, 0)), 0.0)

    def test_larger_radius_sees_a_superset(self, tiny_scenes):
        rng = make_rng(2)
        for scene in tiny_scenes[:3]:
            free = scene.free_cells()
            for _ in range(30):
                pose = Pose(free[int(rng.integers(len(free)))])
                r1, r2 = sorted(float(v) for v in rng.uniform(0.1, 8.0, size=2))
                near = {o.id for o in visible_objects(scene, pose, r1)}
                far = {o.id for o in visible_objects(scene, pose, r2)}
                assert near <= far


class TestRegionSequence:
    def test_single_region(self, corridor_scene, house_space):
        path = geodesic_path(corridor_scene, (1, 1), (5, 3))
        assert region_sequence_of_path(corridor_scene, path) == [house_space.region_index("living_room")]

    def test_repeats_only_collapse_when_consecutive(self, house_space):
        layout = ["#############", "#AAAABBBBCCC#", "#############"]
        scene = build_scene(layout, {"A": "bedroom", "B": "hallway", "C": "bedroom"}, [], house_space)
        path = geodesic_path(scene, (1, 1), (1, 11))
        names = [house_space.region_categories[r] for r in region_sequence_of_path(scene, path)]
        assert names == ["bedroom", "hallway", "bedroom"]

    def test_matches_per_cell_labels(self, tiny_scenes):
        rng = make_rng(1)
        scene = tiny_scenes[1]
        free = scene.free_cells()
        for _ in range(20):
            a = free[int(rng.integers(len(free)))]
            b = free[int(rng.integers(len(free)))]
            path = geodesic_path(scene, a, b)
            labels = [scene.regions[int(scene.grid[c])].category for c in path.cells]
            expected = [k for k, _ in itertools.groupby(labels)]
            assert region_sequence_of_path(scene, path) == expected


class TestScenePersistence:
    def test_round_trip_is_identity(self, tiny_scenes, tiny_config, tmp_path):
        space = tiny_config.space
        for scene in tiny_scenes[:3]:
            path = save_scene(tmp_path / f"{scene.id}.json", scene, space)
            loaded = load_scene(path, space)
            assert scene_to_json(loaded, space) == path.read_text(encoding="utf-8")
            np.testing.assert_array_equal(loaded.grid, scene.grid)
            assert loaded.objects == scene.objects
            assert loaded.regions == scene.regions

    def test_hash_mismatch(self, corridor_scene, house_space):
        text = scene_to_json(corridor_scene, house_space)
        other = CategorySpace(("living_room", "hallway", "bedroom"), ("sofa",))
        with pytest.raises(HashMismatchError):
            scene_from_json(text, other)

    def test_doorway_table_must_agree(self, corridor_scene, house_space):
        data = scene_to_dict(corridor_scene, house_space)
        data["regions"][0]["doorways"] = []
        with pytest.raises(SceneFormatError):
            scene_from_json(json.dumps(data), house_space)

    def test_not_json(self, house_space):
        with pytest.raises(SceneFormatError):
            scene_from_json("{not json", house_space)

    def test_object_table_survives(self, corridor_scene, house_space):
        loaded = scene_from_json(scene_to_json(corridor_scene, house_space), house_space)
        assert loaded.objects[3] == ObjectInstance(3, house_space.object_index("bed"), (5, 11))
