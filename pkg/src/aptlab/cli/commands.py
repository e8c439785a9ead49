"""Subcommand implementations. Each takes the parsed arguments plus the
effective RunConfig and returns the text to print on stdout."""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from config.run_config import RunConfig
from config.settings import settings
from src.aptlab.cli.heatmap import cls_attention_map, write_heatmap
from src.aptlab.data import SynthSpec, TaskStream, generate, read_dataset, split_stream, write_dataset
from src.aptlab.errors import ConfigError, NumericError
from src.aptlab.harness import CilParams, TrainParams, pretrain_backbone, run_cil, sweep_alpha
from src.aptlab.logging.error_handler import get_logger
from src.aptlab.metrics import flops_csv, flops_table, method_spec_for
from src.aptlab.prompts import PromptSet, WarmStart, stored_mode
from src.aptlab.tensor import Tensor, add, cross_entropy, gradcheck, matmul
from src.aptlab.vit import ViTConfig, ViTModel, load_weights, save_weights
from src.aptlab.vit.serialization import read_container

_log = get_logger("cli")

PRETRAIN_FILE = "pretrain.aptd"
PRETRAIN_TEST_FILE = "pretrain_test.aptd"
TRAIN_FILE = "train.aptd"
TEST_FILE = "test.aptd"
GRADCHECK_TOLERANCE = 1e-4


def synth_specs(cfg: RunConfig) -> tuple[SynthSpec, SynthSpec]:
    geo = cfg.vit_config()
    common = dict(
        train_per_class=cfg.train_per_class, test_per_class=cfg.test_per_class,
        image_size=geo.image_size, channels=geo.channels, noise_sigma=cfg.noise_sigma,
        max_shift=cfg.max_shift, seed=cfg.data_seed, grid=cfg.template_grid,
    )
    pre = SynthSpec(n_classes=cfg.pretrain_classes, class_offset=0, **common)  # type: ignore[arg-type]
    cil = SynthSpec(n_classes=cfg.cil_classes, class_offset=cfg.pretrain_classes, **common)  # type: ignore[arg-type]
    return pre, cil


def _data_file(data_dir: str, name: str) -> Path:
    path = Path(data_dir) / name
    if not path.is_file():
        raise ConfigError(f"missing data file {path} (run gen-data first)")
    return path


def cil_params(cfg: RunConfig) -> CilParams:
    return CilParams(
        train=TrainParams(cfg.epochs, cfg.batch_size, cfg.lr_prompt, cfg.lr_head),
        alpha=cfg.alpha, warm_start=WarmStart(cfg.warm_start), vpt_n=cfg.vpt_n,
        pool_size=cfg.pool_size, pool_n=cfg.pool_n, pool_top_k=cfg.pool_top_k,
        eval_batch=cfg.eval_batch,
    )


def cmd_gen_data(args: argparse.Namespace, cfg: RunConfig) -> str:
    out = Path(args.out)
    pre, cil = synth_specs(cfg)
    files = {
        PRETRAIN_FILE: generate(pre, "train"),
        PRETRAIN_TEST_FILE: generate(pre, "test"),
        TRAIN_FILE: generate(cil, "train"),
        TEST_FILE: generate(cil, "test"),
    }
    for name, ds in files.items():
        write_dataset(ds, out / name)
    return "\n".join(f"{out / name}: {len(ds)} samples" for name, ds in files.items())


def cmd_pretrain(args: argparse.Namespace, cfg: RunConfig) -> str:
    train = read_dataset(_data_file(args.data, PRETRAIN_FILE), "train")
    test_path = Path(args.data) / PRETRAIN_TEST_FILE
    test = read_dataset(test_path, "test") if test_path.is_file() else None
    cil_path = Path(args.data) / TRAIN_FILE
    cil_classes = read_dataset(cil_path).classes if cil_path.is_file() else []
    res = pretrain_backbone(
        cfg.vit_config(), train, test, epochs=cfg.pretrain_epochs, lr=cfg.pretrain_lr,
        seed=cfg.pretrain_seed, batch_size=cfg.batch_size, cil_classes=cil_classes,
    )
    save_weights(res.model, args.out)
    return f"pretrain_accuracy={res.test_accuracy:.4f}"


def _load_stream(args: argparse.Namespace, cfg: RunConfig, model: ViTModel) -> TaskStream:
    train = read_dataset(_data_file(args.data, TRAIN_FILE), "train")
    test = read_dataset(_data_file(args.data, TEST_FILE), "test")
    if train.image_shape != (model.config.channels, model.config.image_size, model.config.image_size):
        raise ConfigError(f"data images {train.image_shape} do not fit the backbone geometry")
    return split_stream(train, cfg.tasks, cfg.seed, test)


def cmd_train_cil(args: argparse.Namespace, cfg: RunConfig) -> str:
    model = load_weights(args.weights)
    stream = _load_stream(args, cfg, model)
    out = args.out or Path(settings.runs_dir) / f"{cfg.method}_seed{cfg.seed}"
    res = run_cil(model, stream, cfg.method, cil_params(cfg), cfg.seed, out, cfg.echo())
    return f"avg_acc={res.avg_acc:.4f} forgetting={res.forgetting:.4f}"


def cmd_sweep_alpha(args: argparse.Namespace, cfg: RunConfig) -> str:
    model = load_weights(args.weights)
    stream = _load_stream(args, cfg, model)
    out = Path(args.out or Path(settings.runs_dir) / f"sweep_seed{cfg.seed}")
    rows = sweep_alpha(model, stream, cfg.sweep_alphas, cil_params(cfg), cfg.seed, out)
    lines = ["alpha,avg_acc,forgetting"]
    lines += [f"{r['alpha']:.2f},{r['avg_acc']:.4f},{r['forgetting']:.4f}" for r in rows]
    text = "\n".join(lines) + "\n"
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(text, encoding="utf-8")
    return text.rstrip("\n")


def cmd_flops(args: argparse.Namespace, cfg: RunConfig) -> str:
    geo = cfg.vit_config()
    methods = args.methods or cfg.flops_methods
    specs = [method_spec_for(m, cfg.vpt_n, cfg.pool_n, cfg.pool_top_k) for m in methods]
    text = flops_csv(flops_table(geo, specs, cfg.pool_size))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return text.rstrip("\n")


def cmd_heatmap(args: argparse.Namespace, cfg: RunConfig) -> str:
    model = load_weights(args.weights)
    ds = read_dataset(args.data)
    if not 0 <= args.image_index < len(ds):
        raise ConfigError(f"image index {args.image_index} outside [0, {len(ds)})")
    prompts: PromptSet | None = None
    mode = "kv"
    if args.prompts:
        arrays = read_container(args.prompts)
        if not any(k.startswith("prompt.") for k in arrays):
            raise ConfigError(f"{args.prompts}: holds no additive prompt set")
        prompts, mode = PromptSet.from_arrays(arrays), stored_mode(arrays)
    layer = args.layer + model.config.depth if args.layer < 0 else args.layer
    weights = cls_attention_map(model, ds.images[args.image_index], layer, prompts, mode)
    _log.info("heatmap", layer=layer, prompt_mode=mode if prompts is not None else None)
    pgm, csv = write_heatmap(weights, args.out)
    return f"{pgm}\n{csv}"


def cmd_gradcheck(args: argparse.Namespace, cfg: RunConfig) -> str:
    """Analytic vs central-difference gradients of the task loss w.r.t. every
    prompt vector and head weight, in double precision."""
    geo = ViTConfig.gradcheck()
    rng = np.random.default_rng(args.seed)
    model = ViTModel.init(geo, seed=args.seed, dtype=np.float64)
    model.freeze()
    images = rng.random((args.batch, geo.channels, geo.image_size, geo.image_size))
    labels = rng.integers(0, args.classes, size=args.batch)
    prompts = PromptSet([
        (Tensor(rng.normal(0, 0.1, geo.dim), requires_grad=True),
         Tensor(rng.normal(0, 0.1, geo.dim), requires_grad=True))
        for _ in range(geo.depth)
    ])
    w = Tensor(rng.normal(0, 0.1, (geo.dim, args.classes)), requires_grad=True)
    b = Tensor(rng.normal(0, 0.1, args.classes), requires_grad=True)

    def loss() -> Tensor:
        return cross_entropy(add(matmul(model.forward_cls(images, prompts), w), b), labels)

    err = gradcheck(loss, prompts.parameters() + [w, b], eps=1e-4)
    _log.info("gradcheck", max_rel_err=err)
    if err >= GRADCHECK_TOLERANCE:
        raise NumericError(f"gradcheck: max relative error {err:.3e} >= {GRADCHECK_TOLERANCE:g}")
    return f"max_rel_err={err:.3e}"
