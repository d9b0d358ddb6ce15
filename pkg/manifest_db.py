import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from errors import HashMismatchError, MalformedFileError, MissingDependencyError
from scene_world import CategorySpace
from utils import canonical_json, read_text, write_text

logger = logging.getLogger(__name__)

MANIFEST_FORMAT_VERSION = 1
MANIFEST_FILE = "manifest.json"

# artifact key -> command that produces it
PRODUCERS = {
    "scenes_train": "generate",
    "scenes_eval": "generate",
    "trajectories": "trajectories",
    "srg": "build-srg",
    "srg_pruned": "build-srg",
    "srg_dot": "build-srg",
    "checkpoint": "train",
    "embeddings": "train",
    "loss_history": "train",
    "report_table": "evaluate",
    "report_csv": "evaluate",
}


class ManifestDatabase:
    """JSON manifest of one workspace: category space, artifact paths, seeds and stage stats"""

    def __init__(self, workspace):
        self.workspace = Path(workspace)
        self.manifest_file = self.workspace / MANIFEST_FILE

    def exists(self) -> bool:
        return self.manifest_file.exists()

    def create(self, space: CategorySpace, scene_config: Dict[str, Any]) -> Dict:
        """Start a fresh manifest; anything recorded before is dropped."""
        self.workspace.mkdir(parents=True, exist_ok=True)
        data = {
            "metadata": {"format_version": MANIFEST_FORMAT_VERSION},
            "category_space": space.to_dict(),
            "category_space_hash": space.hash,
            "scene_config": scene_config,
            "artifacts": {},
            "seeds": {},
            "statistics": {},
        }
        self.save(data)
        logger.info("Created new manifest at %s", self.manifest_file)
        return data

    def load(self) -> Dict:
        if not self.exists():
            raise MissingDependencyError(f"no manifest at {self.manifest_file}; run `generate` first")
        try:
            data = json.loads(read_text(self.manifest_file))
            version = data["metadata"]["format_version"]
            stored_hash = data["category_space_hash"]
            space = CategorySpace.from_dict(data["category_space"])
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise MalformedFileError(f"{self.manifest_file}: malformed manifest ({e})") from e
        if version != MANIFEST_FORMAT_VERSION:
            raise MalformedFileError(f"unsupported manifest format_version {version}")
        if space.hash != stored_hash:
            raise HashMismatchError(f"manifest category space hash {stored_hash} does not match its categories")
        return data

    def save(self, data: Dict) -> Path:
        return write_text(self.manifest_file, canonical_json(data))

    def space(self) -> CategorySpace:
        return CategorySpace.from_dict(self.load()["category_space"])

    def update(self, artifacts: Optional[Dict[str, Any]] = None, seeds: Optional[Dict[str, Any]] = None,
               statistics: Optional[Dict[str, Any]] = None) -> Dict:
        data = self.load()
        data["artifacts"].update(artifacts or {})
        data["seeds"].update(seeds or {})
        data["statistics"].update(statistics or {})
        self.save(data)
        return data

    def artifact(self, key: str):
        """Workspace path (or list of paths) of a recorded artifact."""
        data = self.load()
        value = data["artifacts"].get(key)
        if value is None:
            raise MissingDependencyError(
                f"missing {key}; run `{PRODUCERS.get(key, 'the producing stage')}` first"
            )
        paths = [self.workspace / p for p in value] if isinstance(value, list) else [self.workspace / value]
        missing = [str(p) for p in paths if not p.exists()]
        if missing:
            raise MissingDependencyError(f"{key} recorded in the manifest but missing on disk: {missing[0]}")
        return paths if isinstance(value, list) else paths[0]

    def relative(self, path) -> str:
        return Path(path).relative_to(self.workspace).as_posix()
