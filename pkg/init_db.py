from pathlib import Path

from sqlalchemy import text

from db import get_engine


def init_ledger(workspace):
    engine = get_engine(str(Path(workspace).resolve()))

    with engine.begin() as conn:
        conn.execute(text("""
            CREATE TABLE IF NOT EXISTS stage_runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                stage TEXT NOT NULL,
                detail TEXT,
                timestamp TEXT DEFAULT CURRENT_TIMESTAMP
            )
        """))

    with engine.begin() as conn:
        conn.execute(text("""
            CREATE TABLE IF NOT EXISTS episode_results (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                policy TEXT NOT NULL,
                scene_id TEXT NOT NULL,
                episode INTEGER NOT NULL,
                target TEXT,
                success INTEGER,
                steps INTEGER,
                path_length_m REAL,
                shortest_length_m REAL,
                terminal_distance_m REAL,
                terminal_geodesic_m REAL,
                termination TEXT,
                spec_hash TEXT,
                UNIQUE(policy, scene_id, episode)
            )
        """))

    return engine
