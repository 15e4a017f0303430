"""
Hyperparameter grid search. Each cell is an independent `seqmem train`
subprocess with its own config and output directory; finished cells are
remembered in a RunLedger so a rerun only executes what is missing.
"""
import itertools
import json
import logging
import os
import subprocess
import sys
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, List, Optional

from pydantic import BaseModel

from core.cli.config import write_config_file
from core.models import GridConfig, GridRow
from core.state_manager import RunLedger

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


class GridCell(BaseModel):
    cell_id: str
    lr: float
    lambda_ortho: float
    alpha_act: float
    trunc_p: float

    def overrides(self) -> Dict[str, float]:
        return {
            "lr": self.lr,
            "lambda_ortho": self.lambda_ortho,
            "alpha_act": self.alpha_act,
            "trunc_p": self.trunc_p,
        }


def grid_cells(grid: GridConfig) -> List[GridCell]:
    """Cartesian product in a fixed order (lr, lambda_ortho, alpha_act, trunc_p)."""
    cells = []
    for lr, lam, alpha, p in itertools.product(grid.lr, grid.lambda_ortho, grid.alpha_act, grid.trunc_p):
        cell_id = f"lr{lr:g}_ortho{lam:g}_act{alpha:g}_trunc{p:g}"
        cells.append(GridCell(cell_id=cell_id, lr=lr, lambda_ortho=lam, alpha_act=alpha, trunc_p=p))
    return cells


class GridRunner:
    def __init__(
        self,
        base_values: Dict[str, str],
        grid: GridConfig,
        output_dir: str,
        jobs: int = 1,
        extra_args: Optional[List[str]] = None,
    ):
        self.base_values = dict(base_values)
        self.grid = grid
        self.output_dir = os.path.abspath(output_dir)
        self.jobs = max(1, jobs)
        self.extra_args = list(extra_args or [])
        self.ledger_path = os.path.join(self.output_dir, "ledger.db")
        self.logger = logging.getLogger(self.__class__.__name__)
        self._ledger_local = threading.local()
        self._ledgers: List[RunLedger] = []
        self._ledgers_lock = threading.Lock()

    def _get_ledger(self) -> RunLedger:
        """One sqlite connection per thread; sqlite connections are not shared across threads."""
        if not hasattr(self._ledger_local, "ledger"):
            ledger = RunLedger(self.ledger_path)
            with self._ledgers_lock:
                self._ledgers.append(ledger)
            self._ledger_local.ledger = ledger
        return self._ledger_local.ledger

    def close(self) -> None:
        """Closes every ledger connection opened by the worker threads."""
        with self._ledgers_lock:
            ledgers, self._ledgers = self._ledgers, []
        for ledger in ledgers:
            ledger.close()
        self._ledger_local = threading.local()

    def cell_dir(self, cell: GridCell) -> str:
        return os.path.join(self.output_dir, "cells", cell.cell_id)

    def _command(self, config_path: str, cell_dir: str) -> List[str]:
        return [
            sys.executable,
            "-m",
            "core.cli.main",
            "train",
            "--config",
            config_path,
            "--out",
            cell_dir,
            *self.extra_args,
        ]

    def _read_summary(self, cell_dir: str) -> Dict:
        with open(os.path.join(cell_dir, "run_summary.json"), "r", encoding="utf-8") as handle:
            return json.load(handle)

    def _run_cell(self, cell: GridCell) -> GridRow:
        ledger = self._get_ledger()
        previous = ledger.completed_result(cell.cell_id)
        if previous is not None:
            self.logger.info("Skipping %s (already completed)", cell.cell_id)
            return GridRow(**cell.model_dump(), status="skipped", best_val_acc=previous[0], test_acc=previous[1])

        cell_dir = self.cell_dir(cell)
        config_path = os.path.join(cell_dir, "config.env")
        values = dict(self.base_values)
        values.update(cell.overrides())
        values["output_dir"] = cell_dir
        write_config_file(config_path, values)

        env = dict(os.environ)
        env["PYTHONPATH"] = os.pathsep.join(filter(None, [PROJECT_ROOT, env.get("PYTHONPATH")]))
        self.logger.info("➡️ Starting cell %s", cell.cell_id)
        proc = subprocess.run(
            self._command(config_path, cell_dir),
            capture_output=True,
            text=True,
            env=env,
            cwd=PROJECT_ROOT,
        )
        if proc.returncode != 0:
            tail = (proc.stderr or "").strip().splitlines()[-5:]
            self.logger.error("❌ Cell %s exited with %d", cell.cell_id, proc.returncode)
            ledger.record_event("cell_failed", cell.cell_id, f"exit code {proc.returncode}", "\n".join(tail))
            return GridRow(**cell.model_dump(), status="failed")

        summary = self._read_summary(cell_dir)
        ledger.mark_completed(cell.cell_id, summary.get("best_val_acc"), summary.get("test_acc"))
        self.logger.info("✅ Cell %s val=%.4f", cell.cell_id, summary.get("best_val_acc", float("nan")))
        return GridRow(
            **cell.model_dump(),
            status="ok",
            best_val_acc=summary.get("best_val_acc"),
            test_acc=summary.get("test_acc"),
        )

    def run(self) -> List[GridRow]:
        """Runs every cell; rows come back in grid order whatever the completion order."""
        cells = grid_cells(self.grid)
        self.logger.info("🧮 Grid of %d cells with %d parallel jobs", len(cells), self.jobs)
        rows: Dict[str, GridRow] = {}
        try:
            with ThreadPoolExecutor(max_workers=self.jobs) as executor:
                futures = {executor.submit(self._run_cell, cell): cell for cell in cells}
                for future in as_completed(futures):
                    cell = futures[future]
                    try:
                        rows[cell.cell_id] = future.result()
                    except Exception as exc:
                        self.logger.exception("❌ Unhandled exception for cell %s", cell.cell_id)
                        self._get_ledger().record_event("cell_error", cell.cell_id, str(exc))
                        rows[cell.cell_id] = GridRow(**cell.model_dump(), status="failed")
        finally:
            self.close()
        return [rows[cell.cell_id] for cell in cells]


def best_row(rows: List[GridRow]) -> Optional[GridRow]:
    """Highest validation accuracy among finished cells; ties go to the earlier cell."""
    best = None
    for row in rows:
        if row.status == "failed" or row.best_val_acc is None:
            continue
        if best is None or row.best_val_acc > best.best_val_acc:
            best = row
    return best
