import logging
import os
import sqlite3
from typing import Optional, Tuple


class RunLedger:
    """
    SQLite record of finished grid cells, so an interrupted or repeated grid
    search only runs the cells that have not completed yet.
    """

    def __init__(self, db_path: str = "runs/ledger.db"):
        self.db_path = db_path
        self.conn: Optional[sqlite3.Connection] = None
        self.logger = logging.getLogger(self.__class__.__name__)
        self._init_db()

    def _init_db(self):
        """Creates the ledger tables if needed."""
        os.makedirs(os.path.dirname(self.db_path) or ".", exist_ok=True)
        # each connection serves one thread at a time; GridRunner closes them from the main thread
        self.conn = sqlite3.connect(self.db_path, check_same_thread=False)
        self.conn.execute("PRAGMA journal_mode=WAL;")
        c = self.conn.cursor()
        c.execute('''
            CREATE TABLE IF NOT EXISTS completed_cells (
                cell_id TEXT PRIMARY KEY,
                best_val_acc REAL,
                test_acc REAL,
                completed_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        ''')
        c.execute('''
            CREATE TABLE IF NOT EXISTS run_events (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                event_type TEXT NOT NULL,
                cell_id TEXT,
                message TEXT,
                detail TEXT,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        ''')
        self.conn.commit()

    def close(self):
        if self.conn:
            self.conn.close()
            self.conn = None

    def is_completed(self, cell_id: str) -> bool:
        c = self.conn.cursor()
        c.execute('SELECT 1 FROM completed_cells WHERE cell_id = ?', (cell_id,))
        return c.fetchone() is not None

    def completed_result(self, cell_id: str) -> Optional[Tuple[Optional[float], Optional[float]]]:
        """(best_val_acc, test_acc) of a finished cell, or None."""
        c = self.conn.cursor()
        c.execute('SELECT best_val_acc, test_acc FROM completed_cells WHERE cell_id = ?', (cell_id,))
        row = c.fetchone()
        return None if row is None else (row[0], row[1])

    def mark_completed(self, cell_id: str, best_val_acc: Optional[float], test_acc: Optional[float]):
        c = self.conn.cursor()
        try:
            c.execute(
                'INSERT OR REPLACE INTO completed_cells (cell_id, best_val_acc, test_acc) VALUES (?, ?, ?)',
                (cell_id, best_val_acc, test_acc),
            )
            self.conn.commit()
        except sqlite3.Error:
            self.logger.exception("Error marking cell %s as completed", cell_id)

    def get_completed_count(self) -> int:
        c = self.conn.cursor()
        c.execute('SELECT COUNT(*) FROM completed_cells')
        return c.fetchone()[0]

    def record_event(
        self,
        event_type: str,
        cell_id: Optional[str],
        message: Optional[str],
        detail: Optional[str] = None,
    ) -> None:
        """Stores a failure or notice for later inspection."""
        c = self.conn.cursor()
        try:
            c.execute(
                'INSERT INTO run_events (event_type, cell_id, message, detail) VALUES (?, ?, ?, ?)',
                (event_type, cell_id, message, detail),
            )
            self.conn.commit()
        except sqlite3.Error:
            self.logger.exception("Error recording %s event for %s", event_type, cell_id)

    def events(self, event_type: Optional[str] = None):
        c = self.conn.cursor()
        if event_type is None:
            c.execute('SELECT event_type, cell_id, message FROM run_events ORDER BY id')
        else:
            c.execute(
                'SELECT event_type, cell_id, message FROM run_events WHERE event_type = ? ORDER BY id',
                (event_type,),
            )
        return c.fetchall()
