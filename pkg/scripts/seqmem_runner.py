"""Helpers shared by the integration scripts: run the CLI as a subprocess and read what it printed."""
import os
import subprocess
import sys
from typing import Dict, Optional

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from core.cli.config import read_config_file, write_config_file  # noqa: E402

CONFIG_DIR = os.path.join(PROJECT_ROOT, "configs")


def derived_config(base: str, path: str, **updates) -> str:
    """Copies configs/<base> to `path` with some keys replaced."""
    values: Dict[str, object] = dict(read_config_file(os.path.join(CONFIG_DIR, base)))
    values.update(updates)
    write_config_file(path, values)
    return path


def run_seqmem(command: str, config: str, *extra: str, expect: int = 0) -> str:
    proc = subprocess.run(
        [sys.executable, os.path.join(PROJECT_ROOT, "run_seqmem.py"), command, "--config", config, *extra],
        capture_output=True,
        text=True,
        cwd=PROJECT_ROOT,
    )
    if proc.returncode != expect:
        raise AssertionError(
            f"seqmem {command} exited with {proc.returncode}, expected {expect}\n{proc.stderr[-2000:]}"
        )
    return proc.stdout


def printed(output: str, key: str) -> Optional[float]:
    for token in output.split():
        if token.startswith(key + "="):
            return float(token.split("=", 1)[1])
    return None
