from pathlib import Path

import pytest

from config_loader import load_scene_config
from scene_world import CategorySpace, build_scene, generate_scene_set

ROOT = Path(__file__).parent
TINY_CONFIG = ROOT / "configs" / "tiny.yaml"

# Three rooms in a row joined by doors on the middle row.
CORRIDOR_LAYOUT = [
    "#############",
    "#AAA#BBB#CCC#",
    "#AAA#BBB#CCC#",
    "#AAAABBBBCCC#",
    "#AAA#BBB#CCC#",
    "#AAA#BBB#CCC#",
    "#############",
]


@pytest.fixture
def house_space():
    return CategorySpace(
        ("living_room", "hallway", "bedroom", "bathroom", "kitchen", "dining_room"),
        ("sofa", "plant", "bed", "pillow", "toilet", "sink"),
    )


@pytest.fixture
def corridor_scene(house_space):
    """living_room | hallway | bedroom; bed hidden in the far corner of the bedroom."""
    return build_scene(
        CORRIDOR_LAYOUT,
        {"A": "living_room", "B": "hallway", "C": "bedroom"},
        [("sofa", (5, 1)), ("plant", (1, 6)), ("pillow", (3, 10)), ("bed", (5, 11))],
        house_space,
        scene_id="corridor",
    )


@pytest.fixture(scope="session")
def tiny_config():
    return load_scene_config(TINY_CONFIG)


@pytest.fixture(scope="session")
def tiny_scenes(tiny_config):
    return generate_scene_set(tiny_config, 6, seed=11, prefix="tiny")
