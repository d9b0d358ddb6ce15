from functools import lru_cache
from pathlib import Path

from sqlalchemy import create_engine

LEDGER_FILE = "runs.db"


@lru_cache(maxsize=None)
def get_engine(workspace: str):
    """SQLite run ledger living next to the workspace manifest."""
    path = Path(workspace) / LEDGER_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    return create_engine(f"sqlite:///{path}", echo=False)
