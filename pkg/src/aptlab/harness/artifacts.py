"""Run-directory writers. Every file, ``events.jsonl`` included, is a pure function
of (seed, config), so two identical runs produce identical files."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from src.aptlab.metrics.cil import EvalMatrix
from src.aptlab.vit.serialization import write_container

EVAL_MATRIX_FILE = "eval_matrix.csv"
SUMMARY_FILE = "summary.json"


def prompt_snapshot_path(run_dir: Path | str, task: int) -> Path:
    return Path(run_dir) / f"prompts_task{task}.aptw"


def write_prompt_snapshot(run_dir: Path | str, task: int, arrays: dict[str, np.ndarray]) -> Path | None:
    if not arrays:
        return None
    path = prompt_snapshot_path(run_dir, task)
    write_container(path, arrays)
    return path


def write_eval_matrix(run_dir: Path | str, matrix: EvalMatrix) -> Path:
    path = Path(run_dir) / EVAL_MATRIX_FILE
    matrix.write_csv(path)
    return path


def write_summary(run_dir: Path | str, summary: dict[str, Any]) -> Path:
    path = Path(run_dir) / SUMMARY_FILE
    path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
