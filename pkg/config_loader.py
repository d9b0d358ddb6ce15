"""
YAML configuration for scene generation.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List

import yaml
from yaml.loader import SafeLoader

from errors import ConfigError
from scene_world import DEFAULT_OBJECT_CATEGORIES, DEFAULT_REGION_CATEGORIES, CategorySpace, SceneGenConfig

logger = logging.getLogger(__name__)

KNOWN_KEYS = {
    "region_categories", "object_categories", "grid", "cell_size", "num_regions",
    "region_prior", "default_region_weight", "placement", "background_placement",
    "object_copies", "min_room_side", "extra_door_prob", "max_retries", "seed",
}


def config_from_dict(raw: Dict[str, Any]) -> SceneGenConfig:
    if not isinstance(raw, dict):
        raise ConfigError("scene config must be a mapping")
    space = CategorySpace(
        tuple(raw.get("region_categories") or DEFAULT_REGION_CATEGORIES),
        tuple(raw.get("object_categories") or DEFAULT_OBJECT_CATEGORIES),
    )
    grid = raw.get("grid") or {}
    try:
        config = SceneGenConfig.from_tables(
            space,
            region_prior=raw.get("region_prior") or {},
            placement=raw.get("placement") or {},
            default_region_weight=float(raw.get("default_region_weight", 1.0)),
            background_placement=float(raw.get("background_placement", 0.0)),
            num_regions=int(raw.get("num_regions", 6)),
            grid_rows=int(grid.get("rows", 36)),
            grid_cols=int(grid.get("cols", 36)),
            cell_size=float(raw.get("cell_size", 0.3)),
            seed=int(raw.get("seed", 0)),
            object_copies=int(raw.get("object_copies", 1)),
            min_room_side=int(raw.get("min_room_side", 4)),
            extra_door_prob=float(raw.get("extra_door_prob", 0.25)),
            max_retries=int(raw.get("max_retries", 20)),
        )
    except (TypeError, ValueError, AttributeError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid scene config value: {e}") from e
    config.validate()
    return config


class SceneConfigLoader:
    """Reads and validates a scene-generation YAML file"""

    def __init__(self, file_path):
        self.file_path = Path(file_path)
        if not self.file_path.exists():
            raise FileNotFoundError(f"Config file not found: {file_path}")
        self.raw: Dict[str, Any] = {}
        self.warnings: List[str] = []

    def parse(self) -> SceneGenConfig:
        logger.info("Reading scene config %s", self.file_path.name)
        try:
            with open(self.file_path, encoding="utf-8") as f:
                self.raw = yaml.load(f, Loader=SafeLoader) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{self.file_path}: invalid YAML ({e})") from e

        if not isinstance(self.raw, dict):
            raise ConfigError(f"{self.file_path}: top level must be a mapping")
        for key in sorted(set(self.raw) - KNOWN_KEYS):
            self.warnings.append(f"unknown key ignored: {key}")
            logger.warning("%s: unknown key ignored: %s", self.file_path.name, key)

        config = config_from_dict(self.raw)
        logger.info(
            "Scene config: %d region categories, %d object categories, %d regions per scene on %dx%d cells",
            config.space.num_regions, config.space.num_objects, config.num_regions,
            config.grid_rows, config.grid_cols,
        )
        return config


def load_scene_config(path) -> SceneGenConfig:
    return SceneConfigLoader(path).parse()
