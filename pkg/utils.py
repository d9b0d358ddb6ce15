import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, List

import numpy as np

FLOAT_FORMAT = "%.17g"


def clean_name(name) -> str:
    """Normalise a category name the same way everywhere (lower snake case)."""
    try:
        base = str(name).replace("\n", " ").strip().lower().replace(" ", "_")
    except Exception:
        base = ""
    return base


def clean_names(names: Iterable) -> List[str]:
    return [clean_name(n) for n in names]


def canonical_json(data: Any) -> str:
    # Sorted keys and a trailing newline keep write->read->write byte-identical
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def stable_hash(data: Any, length: int = 16) -> str:
    payload = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:length]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return path


def read_text(path) -> str:
    with open(path, "r", encoding="utf-8") as f:
        return f.read()
