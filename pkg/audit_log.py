import logging

import pandas as pd
from sqlalchemy import text

from init_db import init_ledger

logger = logging.getLogger(__name__)


def log_stage(workspace, stage: str, detail: str = ""):
    engine = init_ledger(workspace)
    with engine.begin() as conn:
        conn.execute(text("""
            INSERT INTO stage_runs (stage, detail)
            VALUES (:stage, :detail)
        """), {"stage": stage, "detail": detail})
    logger.debug("ledger: %s %s", stage, detail)


def read_audit_trail(workspace) -> pd.DataFrame:
    engine = init_ledger(workspace)
    with engine.begin() as conn:
        return pd.read_sql("SELECT * FROM stage_runs ORDER BY id DESC", conn)


def save_episode_results(workspace, results: pd.DataFrame, policy: str, spec_hash: str):
    """Replace the stored rows of one policy with a fresh evaluation."""
    engine = init_ledger(workspace)
    frame = results.copy()
    frame["spec_hash"] = spec_hash
    with engine.begin() as conn:
        conn.execute(text("DELETE FROM episode_results WHERE policy = :policy"), {"policy": policy})
        frame.to_sql("episode_results", con=conn, if_exists="append", index=False)


def read_episode_results(workspace, policy: str = None) -> pd.DataFrame:
    engine = init_ledger(workspace)
    with engine.begin() as conn:
        if policy is None:
            return pd.read_sql("SELECT * FROM episode_results ORDER BY policy, scene_id, episode", conn)
        return pd.read_sql(
            text("SELECT * FROM episode_results WHERE policy = :policy ORDER BY scene_id, episode"),
            conn,
            params={"policy": policy},
        )
