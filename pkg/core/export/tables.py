"""CSV writers with fixed headers; floats carry 9 significant digits."""
import os
from typing import Iterable, List, Sequence

import pandas as pd

from core.models import GradientPoint, GridRow, LagProbeResult, TrainHistory

FLOAT_FORMAT = "%.9g"

HISTORY_COLUMNS = ["epoch", "train_loss", "val_acc", "seconds"]
GRADIENT_COLUMNS = ["t", "grad_norm"]
LAG_PROBE_COLUMNS = ["k", "mse", "model_tag"]
GRID_COLUMNS = ["cell_id", "lr", "lambda_ortho", "alpha_act", "trunc_p", "status", "best_val_acc", "test_acc"]


def _write(rows: List[dict], columns: Sequence[str], path: str) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=list(columns))
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return frame


def write_history_csv(history: TrainHistory, path: str) -> pd.DataFrame:
    return _write([r.model_dump() for r in history.records], HISTORY_COLUMNS, path)


def write_gradient_csv(curve: Sequence[GradientPoint], path: str, stride: int = 1) -> pd.DataFrame:
    """Rows from t = T down to 0; with stride > 1 only every stride-th row plus t = 0 is kept."""
    rows = [pt.model_dump() for i, pt in enumerate(curve) if i % stride == 0 or pt.t == 0]
    return _write(rows, GRADIENT_COLUMNS, path)


def write_lag_probe_csv(results: Iterable[LagProbeResult], path: str) -> pd.DataFrame:
    return _write([r.model_dump() for r in results], LAG_PROBE_COLUMNS, path)


def write_grid_csv(rows: Iterable[GridRow], path: str) -> pd.DataFrame:
    return _write([r.model_dump() for r in rows], GRID_COLUMNS, path)
