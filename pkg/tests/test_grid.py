import json
import os
import subprocess
import tempfile
import unittest
from unittest.mock import patch

from core.cli.config import read_config_file
from core.models import GridConfig, GridRow
from core.state_manager import RunLedger
from core.training.grid import GridRunner, best_row, grid_cells


def fake_train(fail_lr=None):
    """Stands in for the `seqmem train` subprocess: writes a summary whose val accuracy encodes the cell."""
    calls = []

    def run(command, **kwargs):
        config_path = command[command.index("--config") + 1]
        out_dir = command[command.index("--out") + 1]
        values = read_config_file(config_path)
        calls.append(values)
        if fail_lr is not None and float(values["lr"]) == fail_lr:
            return subprocess.CompletedProcess(command, 2, stdout="", stderr="config error\n")
        summary = {"best_val_acc": 0.5 + float(values["trunc_p"]) / 10 + float(values["lr"]), "test_acc": 0.4}
        with open(os.path.join(out_dir, "run_summary.json"), "w") as handle:
            json.dump(summary, handle)
        return subprocess.CompletedProcess(command, 0, stdout="test_acc=0.4\n", stderr="")

    return run, calls


class TestGridCells(unittest.TestCase):
    def test_cartesian_order(self):
        cells = grid_cells(GridConfig(lr=(0.1, 0.01), lambda_ortho=(0.0,), alpha_act=(0.0, 1.0), trunc_p=(0.5,)))
        self.assertEqual(
            [c.cell_id for c in cells],
            [
                "lr0.1_ortho0_act0_trunc0.5",
                "lr0.1_ortho0_act1_trunc0.5",
                "lr0.01_ortho0_act0_trunc0.5",
                "lr0.01_ortho0_act1_trunc0.5",
            ],
        )

    def test_default_grid_size(self):
        self.assertEqual(len(grid_cells(GridConfig())), 3 * 5 * 4 * 5)


class TestGridRunner(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.grid = GridConfig(lr=(0.01, 0.001), lambda_ortho=(0.0,), alpha_act=(0.0,), trunc_p=(0.0, 0.5))
        self.base = {"task": "synthetic", "model": "lmn", "epochs": "1"}

    def tearDown(self):
        self.tmp.cleanup()

    def test_rows_follow_grid_order_and_ledger_skips_reruns(self):
        run, calls = fake_train()
        with patch("core.training.grid.subprocess.run", side_effect=run):
            rows = GridRunner(self.base, self.grid, self.tmp.name, jobs=2).run()
        self.assertEqual([r.cell_id for r in rows], [c.cell_id for c in grid_cells(self.grid)])
        self.assertTrue(all(r.status == "ok" for r in rows))
        self.assertEqual(len(calls), 4)
        self.assertEqual(calls[0]["model"], "lmn")
        self.assertTrue(all(v["output_dir"].startswith(os.path.abspath(self.tmp.name)) for v in calls))
        self.assertEqual(best_row(rows).cell_id, "lr0.01_ortho0_act0_trunc0.5")

        run_again, calls_again = fake_train()
        with patch("core.training.grid.subprocess.run", side_effect=run_again):
            rerun = GridRunner(self.base, self.grid, self.tmp.name).run()
        self.assertEqual(calls_again, [])
        self.assertTrue(all(r.status == "skipped" for r in rerun))
        self.assertEqual([r.best_val_acc for r in rerun], [r.best_val_acc for r in rows])

    def test_ledger_connections_are_closed_after_run(self):
        opened = []

        class TrackedLedger(RunLedger):
            def __init__(self, *args, **kwargs):
                super().__init__(*args, **kwargs)
                opened.append(self)

        run, _ = fake_train(fail_lr=0.001)
        with patch("core.training.grid.subprocess.run", side_effect=run), patch(
            "core.training.grid.RunLedger", TrackedLedger
        ):
            runner = GridRunner(self.base, self.grid, self.tmp.name, jobs=2)
            runner.run()
        self.assertGreaterEqual(len(opened), 1)
        self.assertTrue(all(ledger.conn is None for ledger in opened))

        runner.close()

    def test_failed_cells_are_reported_and_retried(self):
        run, _ = fake_train(fail_lr=0.001)
        with patch("core.training.grid.subprocess.run", side_effect=run):
            rows = GridRunner(self.base, self.grid, self.tmp.name).run()
        self.assertEqual([r.status for r in rows], ["ok", "ok", "failed", "failed"])
        self.assertIsNone(rows[2].best_val_acc)

        ledger = RunLedger(os.path.join(self.tmp.name, "ledger.db"))
        self.assertEqual(ledger.get_completed_count(), 2)
        self.assertEqual(len(ledger.events("cell_failed")), 2)
        ledger.close()

        run, calls = fake_train()
        with patch("core.training.grid.subprocess.run", side_effect=run):
            rows = GridRunner(self.base, self.grid, self.tmp.name).run()
        self.assertEqual(len(calls), 2)
        self.assertEqual([r.status for r in rows], ["skipped", "skipped", "ok", "ok"])


class TestBestRow(unittest.TestCase):
    def _row(self, cell_id, status, acc):
        return GridRow(cell_id=cell_id, lr=0.1, lambda_ortho=0, alpha_act=0, trunc_p=0, status=status, best_val_acc=acc)

    def test_ties_go_to_earlier_cell(self):
        rows = [self._row("a", "ok", 0.9), self._row("b", "skipped", 0.9), self._row("c", "failed", None)]
        self.assertEqual(best_row(rows).cell_id, "a")

    def test_no_finished_cells(self):
        self.assertIsNone(best_row([self._row("c", "failed", None)]))


class TestRunLedger(unittest.TestCase):
    def test_completion_and_events(self):
        with tempfile.TemporaryDirectory() as tmp:
            ledger = RunLedger(os.path.join(tmp, "sub", "ledger.db"))
            self.assertFalse(ledger.is_completed("x"))
            ledger.mark_completed("x", 0.75, None)
            self.assertTrue(ledger.is_completed("x"))
            self.assertEqual(ledger.completed_result("x"), (0.75, None))
            ledger.record_event("cell_failed", "y", "exit code 2")
            self.assertEqual(ledger.events(), [("cell_failed", "y", "exit code 2")])
            ledger.close()


if __name__ == "__main__":
    unittest.main()
