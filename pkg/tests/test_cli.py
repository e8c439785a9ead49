"""End-to-end command runs on a miniature configuration."""
import json

import numpy as np
import pytest

from main import run
from src.aptlab.cli.heatmap import cls_attention_map, csv_text
from src.aptlab.data import read_dataset
from src.aptlab.prompts import PromptSet, init_prompts, save_prompts
from src.aptlab.tensor import Tensor
from src.aptlab.vit import load_weights

SMALL_CONF = """\
preset = custom
image_size = 8
patch_size = 4
depth = 2
dim = 16
heads = 2
mlp_ratio = 2
pretrain_classes = 4
cil_classes = 4
train_per_class = 6
test_per_class = 3
template_grid = 2
max_shift = 1
epochs = 1
pretrain_epochs = 1
batch_size = 8
tasks = 2
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    conf = root / "small.conf"
    conf.write_text(SMALL_CONF, encoding="utf-8")
    assert run(["gen-data", "--config", str(conf), "--out", str(root / "data")]) == 0
    assert run(["pretrain", "--config", str(conf), "--data", str(root / "data"),
                "--out", str(root / "w.aptw")]) == 0
    return root


def _train(ws, out, *extra):
    return run(["train-cil", "--config", str(ws / "small.conf"), "--weights", str(ws / "w.aptw"),
                "--data", str(ws / "data"), "--out", str(out), *extra])


def test_gen_data_files(workspace):
    names = sorted(p.name for p in (workspace / "data").iterdir())
    assert names == ["pretrain.aptd", "pretrain_test.aptd", "test.aptd", "train.aptd"]


def test_pretrain_prints_accuracy(workspace, capsys, tmp_path):
    assert run(["pretrain", "--config", str(workspace / "small.conf"),
                "--data", str(workspace / "data"), "--out", str(tmp_path / "w.aptw")]) == 0
    assert capsys.readouterr().out.startswith("pretrain_accuracy=")
    assert load_weights(tmp_path / "w.aptw").frozen


def test_train_cil_is_deterministic(workspace, tmp_path, capsys):
    for name in ("a", "b"):
        assert _train(workspace, tmp_path / name, "--method", "apt", "--alpha", "0.7", "--seed", "3") == 0
    assert "avg_acc=" in capsys.readouterr().out
    for f in ("eval_matrix.csv", "summary.json", "prompts_task1.aptw", "prompts_task2.aptw"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["config"]["alpha"] == 0.7 and summary["seed"] == 3


def test_alpha_out_of_range_rejected_before_training(workspace, tmp_path, capsys):
    assert _train(workspace, tmp_path / "bad", "--alpha", "1.5") == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("error[config]:")
    assert not (tmp_path / "bad").exists()


def test_single_task_reports_zero_forgetting(workspace, tmp_path):
    assert _train(workspace, tmp_path / "one", "--tasks", "1") == 0
    assert json.loads((tmp_path / "one" / "summary.json").read_text())["forgetting"] == 0.0


def test_indivisible_task_count(workspace, tmp_path, capsys):
    assert _train(workspace, tmp_path / "x", "--tasks", "3") == 2
    assert "error[config]" in capsys.readouterr().err


def test_corrupt_weights_tagged(workspace, tmp_path, capsys):
    bad = tmp_path / "bad.aptw"
    bad.write_bytes(b"XXXX" + (workspace / "w.aptw").read_bytes()[4:])
    assert run(["train-cil", "--config", str(workspace / "small.conf"), "--weights", str(bad),
                "--data", str(workspace / "data")]) == 2
    assert "error[bad_magic]" in capsys.readouterr().err


def test_flops_table(capsys):
    assert run(["flops", "--set", "preset=vit_b16", "--methods", "plain", "apt", "pool"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "method,gmacs,ratio,trainable_prompt_params"
    plain, apt, pool = (line.split(",") for line in lines[1:])
    assert plain[2] == apt[2] == "1.0000"
    assert apt[3] == "18432"
    assert float(pool[2]) >= 2.0


def test_heatmap_outputs(workspace, tmp_path):
    ws = workspace
    zero = tmp_path / "zero.aptw"
    save_prompts(init_prompts(load_weights(ws / "w.aptw").config), zero)
    common = ["heatmap", "--config", str(ws / "small.conf"), "--weights", str(ws / "w.aptw"),
              "--data", str(ws / "data" / "test.aptd"), "--image-index", "2", "--layer", "1"]
    assert run(common + ["--out", str(tmp_path / "plain")]) == 0
    assert run(common + ["--prompts", str(zero), "--out", str(tmp_path / "zero")]) == 0

    pgm = (tmp_path / "plain.pgm").read_text().split()
    assert pgm[:4] == ["P2", "2", "2", "255"]
    assert all(0 <= int(v) <= 255 for v in pgm[4:]) and len(pgm) == 8
    weights = np.loadtxt(tmp_path / "plain.csv", delimiter=",")
    assert weights.shape == (2, 2)
    assert 0.0 < weights.sum() <= 1.0 + 1e-6
    assert (tmp_path / "plain.csv").read_bytes() == (tmp_path / "zero.csv").read_bytes()


def test_heatmap_uses_the_stored_prompt_mode(workspace, tmp_path):
    ws = workspace
    model = load_weights(ws / "w.aptw")
    rng = np.random.default_rng(0)
    prompts = PromptSet([
        (Tensor(rng.normal(size=model.config.dim).astype(np.float32)),
         Tensor(rng.normal(size=model.config.dim).astype(np.float32)))
        for _ in range(model.config.depth)
    ])
    common = ["heatmap", "--config", str(ws / "small.conf"), "--weights", str(ws / "w.aptw"),
              "--data", str(ws / "data" / "test.aptd"), "--image-index", "1", "--layer", "1"]
    for mode in ("kv", "input"):
        save_prompts(prompts, tmp_path / f"{mode}.aptw", mode=mode)
        assert run(common + ["--prompts", str(tmp_path / f"{mode}.aptw"),
                             "--out", str(tmp_path / mode)]) == 0
    image = read_dataset(ws / "data" / "test.aptd").images[1]
    expected = csv_text(cls_attention_map(model, image, 1, prompts, mode="input"))
    assert (tmp_path / "input.csv").read_text() == expected
    assert (tmp_path / "kv.csv").read_text() != expected


def test_heatmap_layer_out_of_range(workspace, tmp_path, capsys):
    assert run(["heatmap", "--weights", str(workspace / "w.aptw"),
                "--data", str(workspace / "data" / "test.aptd"), "--layer", "7",
                "--out", str(tmp_path / "h")]) == 2
    assert "error[config]" in capsys.readouterr().err


def test_sweep_alpha_command(workspace, tmp_path, capsys):
    assert run(["sweep-alpha", "--config", str(workspace / "small.conf"),
                "--weights", str(workspace / "w.aptw"), "--data", str(workspace / "data"),
                "--set", "sweep_alphas=[0.3, 0.9]", "--out", str(tmp_path / "sweep")]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out[0] == "alpha,avg_acc,forgetting" and len(out) == 3
    assert (tmp_path / "sweep" / "sweep.csv").is_file()


def test_gradcheck_command(capsys):
    assert run(["gradcheck"]) == 0
    assert capsys.readouterr().out.startswith("max_rel_err=")
