import networkx as nx
import pytest

from errors import HashMismatchError, MalformedFileError, NoPathError, TargetMissingError
from scene_world import CategorySpace, Pose, build_scene, generate_scene_set
from trajectories import (
    NEGATIVE,
    POSITIVE,
    TrainingPair,
    Trajectory,
    collapse_pairs,
    corpus_from_jsonl,
    corpus_to_jsonl,
    generate_corpus,
    generate_valid_trajectory,
    load_corpus,
    make_negative_pairs,
    make_positive_pairs,
    save_corpus,
    summarize_corpus,
)
from utils import make_rng

SPACE = CategorySpace(
    ("living_room", "hallway", "bedroom", "bathroom", "dining_room", "kitchen"),
    ("bed", "sink", "sofa"),
)

FOUR_ROOMS = [
    "#################",
    "#LLL#HHH#DDD#KKK#",
    "#LLLLHHHHDDDDKKK#",
    "#LLL#HHH#DDD#KKK#",
    "#################",
]
FOUR_LABELS = {"L": "living_room", "H": "hallway", "D": "dining_room", "K": "kitchen"}


def _names(seq):
    return [SPACE.region_categories[r] for r in seq]


def _traj(names, target="bed"):
    seq = tuple(SPACE.region_index(n) for n in names)
    return Trajectory("fixture", seq[0], SPACE.object_index(target), seq, 3.0)


def _as_names(pairs):
    names = SPACE.node_names
    return {(names[p.anchor], names[p.other], p.label) for p in pairs}


class TestValidTrajectory:
    @pytest.fixture
    def four_rooms(self):
        return build_scene(FOUR_ROOMS, FOUR_LABELS, [("sink", (1, 15)), ("sofa", (3, 1))], SPACE)

    def test_living_room_to_kitchen_sink(self, four_rooms):
        traj = generate_valid_trajectory(four_rooms, Pose((2, 1)), SPACE.object_index("sink"))
        assert _names(traj.region_sequence) == ["living_room", "hallway", "dining_room", "kitchen"]
        assert traj.start_region == SPACE.region_index("living_room")
        assert traj.target_instance == 0
        assert traj.geometric_length == pytest.approx(15 * 0.3)

    def test_start_next_to_target(self, four_rooms):
        traj = generate_valid_trajectory(four_rooms, Pose((3, 14)), SPACE.object_index("sink"))
        assert _names(traj.region_sequence) == ["kitchen"]

    def test_missing_target(self, four_rooms):
        with pytest.raises(TargetMissingError):
            generate_valid_trajectory(four_rooms, Pose((2, 1)), SPACE.object_index("bed"))

    def test_unreachable_target(self):
        scene = build_scene(["A#B"], {"A": "bedroom", "B": "kitchen"}, [("sink", (0, 2))], SPACE)
        with pytest.raises(NoPathError):
            generate_valid_trajectory(scene, Pose((0, 0)), SPACE.object_index("sink"))

    def test_nearest_instance_matches_oracle(self, tiny_config):
        rng = make_rng(8)
        scenes = generate_scene_set(tiny_config, 5, seed=21)
        for i in range(30):
            scene = scenes[i % len(scenes)]
            g = nx.grid_2d_graph(*scene.shape)
            g.remove_nodes_from([c for c in list(g.nodes) if not scene.is_free(c)])
            free = scene.free_cells()
            start = free[int(rng.integers(len(free)))]
            present = scene.object_categories_present()
            target = present[int(rng.integers(len(present)))]
            lengths = nx.single_source_shortest_path_length(g, start)
            expected = min(scene.objects_of_category(target), key=lambda o: (lengths[o.cell], o.id))
            traj = generate_valid_trajectory(scene, Pose(start), target)
            assert traj.target_instance == expected.id
            assert traj.geometric_length == pytest.approx(lengths[expected.cell] * scene.cell_size)
            assert traj.region_sequence[-1] == scene.region_at(expected.cell).category
            assert traj.target_object == target


class TestPositivePairs:
    def test_worked_example(self):
        pairs = make_positive_pairs(_traj(["living_room", "hallway", "bedroom"]), SPACE)
        assert _as_names(pairs) == {
            ("hallway", "bedroom", POSITIVE),
            ("hallway", "living_room", POSITIVE),
            ("bedroom", "bed", POSITIVE),
        }
        assert len(pairs) == 3

    def test_single_region(self):
        pairs = make_positive_pairs(_traj(["bedroom"]), SPACE)
        assert _as_names(pairs) == {("bedroom", "bed", POSITIVE)}

    def test_four_regions(self):
        pairs = make_positive_pairs(_traj(["living_room", "hallway", "dining_room", "kitchen"], "sink"), SPACE)
        names = SPACE.node_names
        assert [(names[p.anchor], names[p.other]) for p in pairs] == [
            ("hallway", "kitchen"),
            ("hallway", "living_room"),
            ("dining_room", "kitchen"),
            ("dining_room", "living_room"),
            ("dining_room", "hallway"),
            ("kitchen", "sink"),
        ]

    def test_revisited_category_is_not_paired_with_itself(self):
        pairs = make_positive_pairs(_traj(["bedroom", "hallway", "bedroom", "kitchen"]), SPACE)
        assert all(p.anchor != p.other for p in pairs)
        assert ("bedroom", "hallway", POSITIVE) in _as_names(pairs)

    def test_pair_rejects_self_loop(self):
        with pytest.raises(ValueError):
            TrainingPair(2, 2, POSITIVE)


class TestNegativePairs:
    def test_worked_example(self):
        space = CategorySpace(("living_room", "hallway", "bedroom", "bathroom", "dining_room"), ("bed",))
        seq = tuple(space.region_index(n) for n in ("living_room", "hallway", "bedroom"))
        traj = Trajectory("fixture", seq[0], 0, seq, 3.0)
        names = space.node_names
        pairs = make_negative_pairs(traj, space)
        assert {(names[p.anchor], names[p.other], p.label) for p in pairs} == {
            ("bathroom", "bed", NEGATIVE),
            ("dining_room", "bed", NEGATIVE),
        }

    def test_no_unused_regions(self):
        space = CategorySpace(("living_room", "hallway", "bedroom"), ("bed",))
        traj = Trajectory("fixture", 0, 0, (0, 1, 2), 3.0)
        assert make_negative_pairs(traj, space) == []

    def test_count_is_unused_regions_times_interior_positions(self):
        traj = _traj(["living_room", "hallway", "dining_room", "kitchen"], "sink")
        pairs = make_negative_pairs(traj, SPACE)
        assert len(pairs) == (6 - 4) * 2
        unused = {"bedroom", "bathroom"}
        assert {SPACE.node_names[p.anchor] for p in pairs} == unused
        assert all(SPACE.node_names[p.other] == "sink" for p in pairs)

    def test_restricted_pool(self):
        traj = _traj(["living_room", "hallway", "bedroom"])
        pairs = make_negative_pairs(traj, SPACE, regions=[SPACE.region_index("kitchen")])
        assert _as_names(pairs) == {("kitchen", "bed", NEGATIVE)}


class TestCorpus:
    def test_collapse_counts_duplicates(self):
        p = TrainingPair(0, 6, POSITIVE)
        q = TrainingPair(1, 6, NEGATIVE)
        assert collapse_pairs([q, p, p]) == [(p, 2), (q, 1)]

    def test_one_trajectory_per_region_and_target(self, corridor_scene, house_space):
        corpus = generate_corpus([corridor_scene], house_space)
        assert len(corpus) == 3 * 4
        summary = summarize_corpus(corpus, house_space, 1)
        assert summary.per_target == {"bed": 3, "pillow": 3, "plant": 3, "sofa": 3}

        bed = house_space.object_index("bed")
        from_living = next(t for t in corpus if t.target_object == bed and t.start_region == 0)
        names = [house_space.region_categories[r] for r in from_living.region_sequence]
        assert names == ["living_room", "hallway", "bedroom"]

    def test_jsonl_round_trip(self, tiny_scenes, tiny_config, tmp_path):
        space = tiny_config.space
        corpus = generate_corpus(tiny_scenes[:2], space)
        path = save_corpus(tmp_path / "trajectories.jsonl", corpus, space)
        loaded = load_corpus(path, space)
        assert loaded == corpus
        assert corpus_to_jsonl(loaded, space) == path.read_text(encoding="utf-8")

    def test_jsonl_hash_mismatch(self, corridor_scene, house_space):
        text = corpus_to_jsonl(generate_corpus([corridor_scene], house_space), house_space)
        with pytest.raises(HashMismatchError):
            corpus_from_jsonl(text, CategorySpace.default())

    def test_jsonl_count_mismatch(self, corridor_scene, house_space):
        text = corpus_to_jsonl(generate_corpus([corridor_scene], house_space), house_space)
        truncated = "\n".join(text.splitlines()[:-1]) + "\n"
        with pytest.raises(MalformedFileError):
            corpus_from_jsonl(truncated, house_space)
