import argparse
import os
import sys

from config.settings import settings

# BLAS thread pools are sized when numpy loads
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, str(settings.blas_threads))

from config.run_config import load_run_config, parse_overrides  # noqa: E402
from src.aptlab.cli import commands  # noqa: E402
from src.aptlab.errors import AptError  # noqa: E402
from src.aptlab.logging.error_handler import configure_logging, get_logger, log_exception  # noqa: E402

COMMANDS = {
    "gen-data": commands.cmd_gen_data,
    "pretrain": commands.cmd_pretrain,
    "train-cil": commands.cmd_train_cil,
    "sweep-alpha": commands.cmd_sweep_alpha,
    "flops": commands.cmd_flops,
    "heatmap": commands.cmd_heatmap,
    "gradcheck": commands.cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="key = value config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--log-level", type=str, default=None, help="override LOG_LEVEL")

    parser = argparse.ArgumentParser(prog="aptlab", description="Additive prompt tuning CIL laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="Write pretrain/train/test APTD files")
    p.add_argument("--spec", type=str, help="generator settings file (same format as --config)")
    p.add_argument("--out", type=str, required=True, help="output directory")

    p = sub.add_parser("pretrain", parents=[common], help="Pretrain and freeze the backbone")
    p.add_argument("--data", type=str, required=True, help="directory written by gen-data")
    p.add_argument("--out", type=str, required=True, help="APTW weights file")

    for name, help_text in (("train-cil", "Run one class-incremental experiment"),
                            ("sweep-alpha", "Run apt over several fusion weights")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--weights", type=str, required=True)
        p.add_argument("--data", type=str, required=True)
        p.add_argument("--tasks", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None, help="run directory")
        if name == "train-cil":
            p.add_argument("--method", type=str, default=None)
            p.add_argument("--alpha", type=float, default=None)

    p = sub.add_parser("flops", parents=[common], help="GMACs and prompt parameters per method")
    p.add_argument("--methods", nargs="+", default=None)
    p.add_argument("--out", type=str, default=None, help="also write the CSV here")

    p = sub.add_parser("heatmap", parents=[common], help="CLS attention heatmap (PGM + CSV)")
    p.add_argument("--weights", type=str, required=True)
    p.add_argument("--prompts", type=str, default=None)
    p.add_argument("--data", type=str, required=True, help="APTD file holding the image")
    p.add_argument("--image-index", type=int, default=0)
    p.add_argument("--layer", type=int, default=-1, help="block index; -1 = last")
    p.add_argument("--out", type=str, required=True, help="output path prefix")

    p = sub.add_parser("gradcheck", parents=[common], help="Finite-difference gradient check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--classes", type=int, default=3)
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    log = get_logger("main")
    try:
        overrides = parse_overrides(args.overrides)
        for key in ("method", "alpha", "tasks", "seed"):
            if args.command in ("train-cil", "sweep-alpha") and getattr(args, key, None) is not None:
                overrides[key] = getattr(args, key)
        cfg = load_run_config(getattr(args, "spec", None) or args.config, overrides)
        output = COMMANDS[args.command](args, cfg)
    except AptError as e:
        print(f"error[{e.tag}]: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error[internal]: {log_exception(log, args.command, e)}", file=sys.stderr)
        return 1
    if output:
        print(output)
    return 0


if __name__ == "__main__":
    sys.exit(run())
