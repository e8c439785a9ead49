import json
from pathlib import Path
from typing import Any


class RunLogger:
    """JSONL event log for one CIL run (``<run_dir>/events.jsonl``).

    The file is truncated on creation and events carry no wall-clock fields,
    so two runs with the same seed and config write identical bytes. Timing
    goes to the structured console log instead."""

    def __init__(self, run_dir: Path | str) -> None:
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.path = self.run_dir / "events.jsonl"
        self.path.write_text("", encoding="utf-8")

    def _log(self, event: dict[str, Any]) -> None:
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(event, ensure_ascii=False) + "\n")

    def log_task_start(self, task: int, classes: list[int], n_train: int) -> None:
        self._log({"event": "task_start", "task": task, "classes": classes, "n_train": n_train})

    def log_epoch(self, task: int, epoch: int, loss: float) -> None:
        self._log({"event": "epoch", "task": task, "epoch": epoch, "loss": round(loss, 6)})

    def log_eval(self, task: int, row: list[float]) -> None:
        self._log({"event": "eval", "task": task, "accuracies": [round(a, 6) for a in row]})

    def log_task_end(self, task: int, final_loss: float) -> None:
        self._log({"event": "task_end", "task": task, "final_loss": round(final_loss, 6)})
