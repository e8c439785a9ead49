#!/usr/bin/env python3
"""aptlab desk-scale efficacy benchmark.

Pretrains the tiny backbone once on the pretraining class universe, then runs
the 5-task class-incremental stream for five seeds and reports final Average
Accuracy and Forgetting per method, plus three direction checks:

  apt > linear-probe        (average accuracy, by more than MIN_PROBE_MARGIN)
  apt < apt-no-ppf          (mean forgetting)
  apt >= apt-input-level    (mean average accuracy)

and whether the whole run, pretraining included, stayed inside TIME_BUDGET_S.
The training schedule comes from config/benchmark.conf. Runs for different
(seed, method) pairs are independent and go to a process pool; every worker
keeps single-threaded BLAS, so results do not depend on the worker count.

Usage:
    python benchmark.py                 # 5 seeds; apt, its ablations, linear probe
    python benchmark.py --all-methods   # also VPT and pool baselines (not budgeted)
    python benchmark.py --quick         # 2 seeds
"""
import argparse
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable

# Project root on path
sys.path.insert(0, str(Path(__file__).parent))

from config.settings import settings

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, str(settings.blas_threads))

import numpy as np  # noqa: E402

from config.run_config import RunConfig, load_run_config  # noqa: E402
from src.aptlab.cli.commands import cil_params, synth_specs  # noqa: E402
from src.aptlab.data import generate, split_stream  # noqa: E402
from src.aptlab.harness import pretrain_backbone, run_cil  # noqa: E402
from src.aptlab.logging.error_handler import configure_logging  # noqa: E402
from src.aptlab.vit import load_weights, save_weights  # noqa: E402

BENCHMARK_CONF = Path(__file__).parent / "config" / "benchmark.conf"
CORE_METHODS = ["apt", "apt-no-ppf", "apt-input-level", "linear-probe"]
EXTRA_METHODS = ["vpt-shallow", "vpt-deep", "pool"]
SEEDS = [0, 1, 2, 3, 4]
TIME_BUDGET_S = 15 * 60
# Provisional; replace with the margin measured by a full benchmark run.
MIN_PROBE_MARGIN = 0.0


@dataclass
class MethodStats:
    method: str
    avg_acc: list[float] = field(default_factory=list)
    forgetting: list[float] = field(default_factory=list)
    duration: float = 0.0

    @property
    def mean_acc(self) -> float:
        return float(np.mean(self.avg_acc)) if self.avg_acc else 0.0

    @property
    def mean_forgetting(self) -> float:
        return float(np.mean(self.forgetting)) if self.forgetting else 0.0


@dataclass
class BenchmarkResult:
    stats: dict[str, MethodStats]
    seeds: list[int]
    pretrain_accuracy: float
    elapsed: float
    workers: int

    @property
    def within_budget(self) -> bool:
        return self.elapsed < TIME_BUDGET_S


def direction_checks(stats: dict[str, MethodStats]) -> dict[str, bool]:
    apt = stats["apt"]
    return {
        "apt_beats_linear_probe": apt.mean_acc - stats["linear-probe"].mean_acc > MIN_PROBE_MARGIN,
        "ppf_lowers_forgetting": apt.mean_forgetting < stats["apt-no-ppf"].mean_forgetting,
        "kv_not_worse_than_input": apt.mean_acc >= stats["apt-input-level"].mean_acc,
    }


# -- worker side ----------------------------------------------------------------------

_state: dict[str, Any] = {}


def _init_worker(weights: str, cfg_values: dict[str, Any], quiet: bool = True) -> None:
    if quiet:
        configure_logging("WARNING")
    cfg = RunConfig(**cfg_values)
    _, cil_spec = synth_specs(cfg)
    _state.update(
        cfg=cfg, model=load_weights(weights),
        train=generate(cil_spec, "train"), test=generate(cil_spec, "test"),
    )


def _run_job(seed: int, method: str) -> tuple[int, str, float, float, float]:
    cfg: RunConfig = _state["cfg"]
    stream = split_stream(_state["train"], cfg.tasks, seed, _state["test"])
    t0 = time.monotonic()
    res = run_cil(_state["model"], stream, method, cil_params(cfg), seed)
    return seed, method, res.avg_acc, res.forgetting, time.monotonic() - t0


# -- driver ---------------------------------------------------------------------------


def load_benchmark_config() -> RunConfig:
    return load_run_config(BENCHMARK_CONF)


def collect(
    cfg: RunConfig,
    seeds: list[int],
    methods: list[str],
    workers: int = 0,
    echo: Callable[[str], None] = print,
) -> BenchmarkResult:
    """Pretrain once, then one run_cil per (seed, method). ``workers`` = 0 uses
    one process per CPU; 1 runs everything in this process."""
    started = time.monotonic()
    pre_spec, cil_spec = synth_specs(cfg)
    pre = pretrain_backbone(
        cfg.vit_config(), generate(pre_spec, "train"), generate(pre_spec, "test"),
        epochs=cfg.pretrain_epochs, lr=cfg.pretrain_lr, seed=cfg.pretrain_seed,
        batch_size=cfg.batch_size, cil_classes=cil_spec.classes,
    )
    echo(f"  pretrained in {time.monotonic() - started:.1f}s  accuracy={pre.test_accuracy:.4f}")

    jobs = [(seed, m) for seed in seeds for m in methods]
    n = min(workers or os.cpu_count() or 1, len(jobs))
    with tempfile.TemporaryDirectory() as tmp:
        weights = Path(tmp) / "backbone.aptw"
        save_weights(pre.model, weights)
        if n <= 1:
            _init_worker(str(weights), cfg.echo(), quiet=False)
            rows = [_run_job(seed, m) for seed, m in jobs]
        else:
            with ProcessPoolExecutor(n, initializer=_init_worker,
                                     initargs=(str(weights), cfg.echo())) as pool:
                rows = list(pool.map(_run_job, *zip(*jobs)))

    stats = {m: MethodStats(m) for m in methods}
    for seed, m, acc, fgt, seconds in rows:
        stats[m].avg_acc.append(acc)
        stats[m].forgetting.append(fgt)
        stats[m].duration += seconds
        echo(f"  seed={seed}  {m:<16}  avg_acc={acc:.4f}  forgetting={fgt:.4f}  ({seconds:.1f}s)")
    return BenchmarkResult(stats, seeds, pre.test_accuracy, time.monotonic() - started, n)


def print_table(result: BenchmarkResult) -> None:
    LINE = "=" * 72
    print(f"\n{LINE}")
    print(f"  {'Method':<18}  {'Avg acc':>8}  {'(std)':>7}  {'Forget':>8}  {'(std)':>7}  {'Time':>8}")
    print(LINE)
    for s in result.stats.values():
        print(
            f"  {s.method:<18}  {s.mean_acc:>8.4f}  {np.std(s.avg_acc):>7.4f}  "
            f"{s.mean_forgetting:>8.4f}  {np.std(s.forgetting):>7.4f}  {s.duration:>7.1f}s"
        )
    print(LINE)
    print(f"\n  Backbone pretraining accuracy: {result.pretrain_accuracy:.4f}")
    print(f"  Wall clock: {result.elapsed:.1f}s on {result.workers} worker(s), "
          f"budget {TIME_BUDGET_S}s\n")


def save_json(result: BenchmarkResult, checks: dict[str, bool], mode: str, cfg: RunConfig) -> Path:
    payload = {
        "timestamp": datetime.now().isoformat(timespec="seconds"),
        "mode": mode,
        "seeds": result.seeds,
        "schedule": {"epochs": cfg.epochs, "lr_prompt": cfg.lr_prompt, "lr_head": cfg.lr_head},
        "pretrain_accuracy": round(result.pretrain_accuracy, 4),
        "elapsed_seconds": round(result.elapsed, 1),
        "workers": result.workers,
        "within_budget": result.within_budget,
        "results": [
            {
                "method": s.method,
                "avg_acc": [round(a, 4) for a in s.avg_acc],
                "forgetting": [round(f, 4) for f in s.forgetting],
                "mean_avg_acc": round(s.mean_acc, 4),
                "mean_forgetting": round(s.mean_forgetting, 4),
                "duration": round(s.duration, 2),
            }
            for s in result.stats.values()
        ],
        "probe_margin": round(result.stats["apt"].mean_acc - result.stats["linear-probe"].mean_acc, 4),
        "checks": checks,
    }
    out = Path("data/benchmark_results.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")
    return out


def run_benchmark(quick: bool, all_methods: bool = False) -> bool:
    mode = "quick" if quick else "full"
    cfg = load_benchmark_config()
    seeds = SEEDS[:2] if quick else SEEDS
    methods = CORE_METHODS + EXTRA_METHODS if all_methods else CORE_METHODS

    print(f"\naptlab benchmark  [{mode.upper()}: {len(methods)} methods x {len(seeds)} seeds, "
          f"{cfg.epochs} epochs/task, lr_prompt={cfg.lr_prompt:g}]")
    print(f"Started: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")

    result = collect(cfg, seeds, methods, settings.bench_workers)
    print_table(result)
    checks = direction_checks(result.stats)
    for name, ok in checks.items():
        print(f"  {'OK' if ok else '--'}  {name}")
    print(f"  {'OK' if result.within_budget else '--'}  within_budget")
    out = save_json(result, checks, mode, cfg)
    print(f"\n  Results saved -> {out}\n")
    return all(checks.values()) and (all_methods or result.within_budget)


def main() -> None:
    parser = argparse.ArgumentParser(
        description="aptlab desk-scale efficacy benchmark",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "Examples:\n"
            "  python benchmark.py                 # 5 seeds, apt + ablations + probe\n"
            "  python benchmark.py --all-methods   # add VPT and pool baselines\n"
            "  APT_BENCH_WORKERS=1 python benchmark.py   # single process\n"
        ),
    )
    parser.add_argument("--quick", action="store_true", help="2 seeds instead of 5")
    parser.add_argument("--all-methods", action="store_true", help="include VPT and pool baselines")
    args = parser.parse_args()
    configure_logging("WARNING")
    try:
        ok = run_benchmark(quick=args.quick, all_methods=args.all_methods)
    except KeyboardInterrupt:
        print("\nBenchmark interrupted.")
        sys.exit(1)
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
