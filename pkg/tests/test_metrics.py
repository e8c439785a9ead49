"""CIL metrics and the analytic cost model."""
import numpy as np
import pytest

from src.aptlab.errors import ConfigError, ContractError
from src.aptlab.metrics import (
    EvalMatrix,
    MethodKind,
    MethodSpec,
    avg_accuracy,
    block_macs,
    count_trainable_params,
    empirical_macs,
    flops_csv,
    flops_forward,
    flops_table,
    forgetting,
    method_spec_for,
)
from src.aptlab.prompts import init_prompts
from src.aptlab.tensor import count_macs
from src.aptlab.vit import ViTConfig, ViTModel

# -- accuracy / forgetting ------------------------------------------------------------


def test_worked_two_task_example():
    R = EvalMatrix.from_rows([[0.9], [0.8, 0.85]])
    assert avg_accuracy(R, 2) == pytest.approx(0.825, abs=1e-15)
    assert forgetting(R, 2) == pytest.approx(0.1, abs=1e-15)
    assert avg_accuracy(R, 1) == 0.9


def test_single_task_and_constant_cases():
    assert forgetting(EvalMatrix.from_rows([[0.9]])) == 0.0
    ones = EvalMatrix.from_rows([[1.0], [1.0, 1.0], [1.0, 1.0, 1.0]])
    assert avg_accuracy(ones) == 1.0 and forgetting(ones) == 0.0


def test_negative_forgetting_allowed():
    R = EvalMatrix.from_rows([[0.5], [0.7, 0.6]])
    assert forgetting(R) == pytest.approx(-0.2)


def test_unpopulated_entries_raise():
    R = EvalMatrix.empty(2)
    R.set(1, 1, 0.5)
    with pytest.raises(ContractError):
        avg_accuracy(R, 2)
    with pytest.raises(ContractError):
        forgetting(R, 2)
    with pytest.raises(ContractError):
        R.set(1, 2, 0.5)
    with pytest.raises(ContractError):
        R.set(2, 1, 1.5)


def test_formulas_match_brute_force(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        rows = [list(rng.random(t)) for t in range(1, n + 1)]
        R = EvalMatrix.from_rows(rows)
        T = int(rng.integers(1, n + 1))
        acc = sum(rows[T - 1]) / T
        fgt = 0.0 if T == 1 else sum(rows[i][i] - rows[T - 1][i] for i in range(T - 1)) / (T - 1)
        assert abs(avg_accuracy(R, T) - acc) < 1e-12
        assert abs(forgetting(R, T) - fgt) < 1e-12
        assert 0.0 <= avg_accuracy(R, T) <= 1.0 and -1.0 <= forgetting(R, T) <= 1.0


def test_eval_matrix_csv_round_trip(tmp_path):
    R = EvalMatrix.from_rows([[0.9], [0.8, 0.85]])
    text = R.to_csv()
    assert text.splitlines() == ["after_task,task_1,task_2", "1,0.900000,", "2,0.800000,0.850000"]
    R.write_csv(tmp_path / "m.csv")
    assert EvalMatrix.read_csv(tmp_path / "m.csv").row(2) == [0.8, 0.85]


# -- method specs ---------------------------------------------------------------------


def test_method_spec_invariants():
    with pytest.raises(ConfigError):
        MethodSpec(MethodKind.APT, n=4)
    with pytest.raises(ConfigError):
        MethodSpec(MethodKind.POOL, n=10, query_pass=False)
    with pytest.raises(ConfigError):
        MethodSpec(MethodKind.VPT_DEEP, n=0)
    assert MethodSpec.pool(10, top_k=3).inserted_tokens == 30


def test_method_spec_for_run_methods():
    assert method_spec_for("apt-no-ppf") == MethodSpec.apt()
    assert method_spec_for("linear-probe") == MethodSpec.plain()
    assert method_spec_for("vpt-deep", vpt_n=6).n == 6
    with pytest.raises(ConfigError):
        method_spec_for("lora")


# -- parameters -----------------------------------------------------------------------


def test_trainable_params():
    tiny, b16 = ViTConfig.tiny(), ViTConfig.vit_b16()
    assert count_trainable_params(MethodSpec.apt(), b16).prompt_params == 18_432
    assert count_trainable_params(MethodSpec.apt(), tiny).prompt_params == 2 * 4 * 64
    assert count_trainable_params(MethodSpec.vpt_deep(4), tiny).prompt_params == 1_024
    assert count_trainable_params(MethodSpec.vpt_shallow(4), tiny).prompt_params == 256
    pool = count_trainable_params(MethodSpec.pool(10), tiny, pool_size=10)
    assert (pool.prompt_params, pool.key_params) == (10 * 10 * 64, 10 * 64)
    with pytest.raises(ConfigError):
        count_trainable_params(MethodSpec.pool(10), tiny)


# -- flops ----------------------------------------------------------------------------


def test_vit_b16_plain_gmacs():
    report = flops_forward(ViTConfig.vit_b16(), MethodSpec.plain())
    assert report.gmacs == pytest.approx(17.45, abs=0.1)
    assert report.ratio == 1.0
    assert report.total == sum(block_macs(197, 768, 4).values()) * 12


@pytest.mark.parametrize("config", [ViTConfig.tiny(), ViTConfig.vit_b16(), ViTConfig.gradcheck()])
def test_apt_is_flops_neutral(config):
    plain, apt = flops_forward(config, MethodSpec.plain()), flops_forward(config, MethodSpec.apt())
    assert apt.total == plain.total
    assert apt.ratio == 1.0
    assert apt.prompt_elementwise == 2 * config.dim * config.depth


def test_pool_ratio_near_reference():
    report = flops_forward(ViTConfig.vit_b16(), MethodSpec.pool(10))
    assert report.ratio >= 2.0
    assert abs(report.ratio - 2.13) <= 0.15 * 2.13
    assert report.query_pass == report.plain_total


def test_concat_flops_strictly_increase_with_n():
    cfg = ViTConfig.vit_b16()
    totals = [flops_forward(cfg, MethodSpec.vpt_deep(n)).total for n in (1, 2, 5, 10, 50)]
    assert all(a < b for a, b in zip(totals, totals[1:]))


def test_flops_table_csv():
    rows = flops_table(ViTConfig.tiny(), [MethodSpec.plain(), MethodSpec.apt(), MethodSpec.pool()])
    lines = flops_csv(rows).splitlines()
    assert lines[0] == "method,gmacs,ratio,trainable_prompt_params"
    assert lines[2].startswith("apt,") and lines[2].endswith(",1.0000,512")


@pytest.mark.parametrize("spec", [
    MethodSpec.plain(), MethodSpec.apt(), MethodSpec.vpt_deep(4),
    MethodSpec.vpt_shallow(3), MethodSpec.pool(2, top_k=2),
])
def test_instrumented_counters_agree_with_model(spec, rng):
    cfg = ViTConfig.tiny()
    model = ViTModel.init(cfg, seed=0)
    model.freeze()
    images = rng.random((2, cfg.channels, cfg.image_size, cfg.image_size))
    counted = empirical_macs(model, spec, images, pool_size=4)
    analytic = flops_forward(cfg, spec).total
    assert abs(counted - analytic) <= 0.02 * analytic


@pytest.mark.parametrize("kind, mode", [(MethodKind.APT, "kv"), (MethodKind.APT_INPUT, "input")])
def test_counted_prompt_adds_match_analytic(kind, mode, rng):
    cfg = ViTConfig.tiny()
    model = ViTModel.init(cfg, seed=0)
    model.freeze()
    images = rng.random((3, cfg.channels, cfg.image_size, cfg.image_size))
    with count_macs() as counter:
        model.forward_cls(images, init_prompts(cfg), mode=mode)
    assert set(counter.elementwise) == {"prompt_add"}
    assert counter.elementwise["prompt_add"] // 3 == flops_forward(cfg, MethodSpec(kind)).prompt_elementwise
