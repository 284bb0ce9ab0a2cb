"""
Ledger records: runs, checkpoints and validation reports
"""
import json
import logging
from typing import Dict, List, Optional

from artifacts import to_jsonable
from database import Database

logger = logging.getLogger(__name__)

RUN_STATUSES = ('running', 'finished', 'failed', 'diverged')


class RunModel:
    @staticmethod
    def start(db: Database, command: str, config) -> int:
        """Insert a run in 'running' state and return its id"""
        conn = db.get_connection()
        cursor = conn.cursor()
        try:
            cursor.execute("""
                INSERT INTO runs (command, problem, config_hash, config_json, status)
                VALUES (?, ?, ?, ?, 'running')
            """, (command, config.problem, config.config_hash(), json.dumps(config.to_dict(), sort_keys=True)))
            conn.commit()
            logger.info(f"Run {cursor.lastrowid} started ({command}, config {config.config_hash()})")
            return cursor.lastrowid
        except Exception as e:
            conn.rollback()
            logger.error(f"Error recording run start: {e}")
            raise

    @staticmethod
    def finish(db: Database, run_id: int, status: str, message: Optional[str] = None):
        if status not in RUN_STATUSES:
            raise ValueError(f"Unknown run status '{status}'")
        conn = db.get_connection()
        cursor = conn.cursor()
        cursor.execute("""
            UPDATE runs SET status = ?, message = ?, finished_at = CURRENT_TIMESTAMP
            WHERE id = ?
        """, (status, message, run_id))
        conn.commit()

    @staticmethod
    def get(db: Database, run_id: int) -> Optional[Dict]:
        cursor = db.get_connection().cursor()
        cursor.execute("SELECT * FROM runs WHERE id = ?", (run_id,))
        row = cursor.fetchone()
        return dict(row) if row else None

    @staticmethod
    def get_all(db: Database, command: Optional[str] = None) -> List[Dict]:
        cursor = db.get_connection().cursor()
        if command:
            cursor.execute("SELECT * FROM runs WHERE command = ? ORDER BY id", (command,))
        else:
            cursor.execute("SELECT * FROM runs ORDER BY id")
        return [dict(row) for row in cursor.fetchall()]


class CheckpointModel:
    @staticmethod
    def add(db: Database, run_id: int, iteration: int, path: str, loss: Optional[float],
            is_final: bool = False) -> int:
        conn = db.get_connection()
        cursor = conn.cursor()
        cursor.execute("""
            INSERT INTO checkpoints (run_id, iteration, path, loss, is_final)
            VALUES (?, ?, ?, ?, ?)
        """, (run_id, iteration, str(path), loss, 1 if is_final else 0))
        conn.commit()
        return cursor.lastrowid

    @staticmethod
    def latest(db: Database, config_hash: Optional[str] = None) -> Optional[Dict]:
        """Most recent checkpoint, optionally restricted to runs with one config"""
        cursor = db.get_connection().cursor()
        query = """
            SELECT c.*, r.config_hash, r.problem FROM checkpoints c
            JOIN runs r ON r.id = c.run_id
        """
        params = ()
        if config_hash:
            query += " WHERE r.config_hash = ?"
            params = (config_hash,)
        query += " ORDER BY c.id DESC LIMIT 1"
        cursor.execute(query, params)
        row = cursor.fetchone()
        return dict(row) if row else None

    @staticmethod
    def for_run(db: Database, run_id: int) -> List[Dict]:
        cursor = db.get_connection().cursor()
        cursor.execute("SELECT * FROM checkpoints WHERE run_id = ? ORDER BY iteration", (run_id,))
        return [dict(row) for row in cursor.fetchall()]


class ReportModel:
    @staticmethod
    def add(db: Database, run_id: int, kind: str, summary: Dict, passed: Optional[bool] = None) -> int:
        conn = db.get_connection()
        cursor = conn.cursor()
        cursor.execute("""
            INSERT INTO reports (run_id, kind, passed, summary_json)
            VALUES (?, ?, ?, ?)
        """, (run_id, kind, None if passed is None else int(bool(passed)),
              json.dumps(to_jsonable(summary), sort_keys=True)))
        conn.commit()
        return cursor.lastrowid

    @staticmethod
    def for_run(db: Database, run_id: int) -> List[Dict]:
        cursor = db.get_connection().cursor()
        cursor.execute("SELECT * FROM reports WHERE run_id = ? ORDER BY id", (run_id,))
        reports = []
        for row in cursor.fetchall():
            report = dict(row)
            report['summary'] = json.loads(report.pop('summary_json'))
            reports.append(report)
        return reports
