"""
Run ledger storage: one SQLite file per output directory
"""
import sqlite3
from pathlib import Path
import logging

logger = logging.getLogger(__name__)

LEDGER_NAME = "runs.db"


class Database:
    def __init__(self, db_path=LEDGER_NAME):
        self.db_path = str(db_path)
        self.conn = None
        Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self.init_database()

    @classmethod
    def for_output_dir(cls, out_dir) -> 'Database':
        return cls(Path(out_dir) / LEDGER_NAME)

    def get_connection(self):
        """Get a database connection with foreign keys enabled"""
        if not self.conn:
            self.conn = sqlite3.connect(self.db_path)
            self.conn.row_factory = sqlite3.Row
            self.conn.execute("PRAGMA foreign_keys = ON")
        return self.conn

    def init_database(self):
        """Create the ledger tables"""
        conn = self.get_connection()
        cursor = conn.cursor()

        # One row per command invocation
        cursor.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                command TEXT NOT NULL CHECK (command IN ('train', 'validate', 'oracle', 'sweep')),
                problem TEXT NOT NULL,
                config_hash TEXT NOT NULL,
                config_json TEXT NOT NULL,
                status TEXT NOT NULL CHECK (status IN ('running', 'finished', 'failed', 'diverged')),
                message TEXT,
                started_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                finished_at TIMESTAMP
            )
        """)

        cursor.execute("""
            CREATE TABLE IF NOT EXISTS checkpoints (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL,
                iteration INTEGER NOT NULL,
                path TEXT NOT NULL,
                loss REAL,
                is_final BOOLEAN NOT NULL DEFAULT 0,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                FOREIGN KEY (run_id) REFERENCES runs(id) ON DELETE CASCADE
            )
        """)

        cursor.execute("""
            CREATE TABLE IF NOT EXISTS reports (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL,
                kind TEXT NOT NULL,
                passed BOOLEAN,
                summary_json TEXT NOT NULL,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                FOREIGN KEY (run_id) REFERENCES runs(id) ON DELETE CASCADE
            )
        """)

        cursor.execute("CREATE INDEX IF NOT EXISTS idx_runs_config_hash ON runs(config_hash)")
        cursor.execute("CREATE INDEX IF NOT EXISTS idx_checkpoints_run_id ON checkpoints(run_id)")
        cursor.execute("CREATE INDEX IF NOT EXISTS idx_reports_run_id ON reports(run_id)")

        conn.commit()

    def close(self):
        """Close database connection"""
        if self.conn:
            self.conn.close()
            self.conn = None
