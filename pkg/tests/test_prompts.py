"""Additive prompts, progressive fusion, and the concatenation/pool baselines."""
import numpy as np
import pytest

from src.aptlab.errors import ConfigError, ContractError, ShapeError
from src.aptlab.prompts import (
    ConcatPromptSet,
    PromptPool,
    PromptSet,
    apply_additive,
    apply_input_level,
    init_prompts,
    load_prompts,
    pool_forward,
    pool_select,
    ppf_fuse,
    rank_keys,
    save_prompts,
    stored_mode,
    tag_mode,
    vpt_concat_forward,
)
from src.aptlab.prompts.additive import MODE_KEY
from src.aptlab.tensor import Tensor
from src.aptlab.vit import ViTConfig
from src.aptlab.vit.serialization import read_container


def _random_set(rng, depth=3, dim=5):
    return PromptSet([
        (Tensor(rng.normal(size=dim)), Tensor(rng.normal(size=dim))) for _ in range(depth)
    ])


def test_init_prompts_zero_and_trainable():
    cfg = ViTConfig.tiny()
    prompts = init_prompts(cfg)
    assert prompts.num_params() == 2 * cfg.depth * cfg.dim == 512
    assert all(p.requires_grad and not p.data.any() for p in prompts.parameters())


def test_apply_additive_and_shape_check(rng):
    k, v, pk, pv = (Tensor(rng.normal(size=4)) for _ in range(4))
    k2, v2 = apply_additive(k, v, pk, pv)
    np.testing.assert_array_equal(k2.data, k.data + pk.data)
    np.testing.assert_array_equal(v2.data, v.data + pv.data)
    with pytest.raises(ShapeError):
        apply_additive(k, v, Tensor(np.zeros(3)), pv)


def test_apply_additive_on_token_matrices_moves_cls_row_only(rng):
    k, v = Tensor(rng.normal(size=(2, 5, 4))), Tensor(rng.normal(size=(2, 5, 4)))
    pk, pv = Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4))
    k2, v2 = apply_additive(k, v, pk, pv)
    np.testing.assert_array_equal(k2.data[:, 1:], k.data[:, 1:])
    np.testing.assert_array_equal(v2.data[:, 1:], v.data[:, 1:])
    np.testing.assert_array_equal(k2.data[:, 0], k.data[:, 0] + pk.data)
    np.testing.assert_array_equal(v2.data[:, 0], v.data[:, 0] + pv.data)
    with pytest.raises(ShapeError):
        apply_additive(k, Tensor(rng.normal(size=(2, 4, 4))), pk, pv)


def test_apply_additive_composes_by_summing_prompts(rng):
    for _ in range(100):
        k, v, p, q, r, s = (Tensor(rng.normal(size=6)) for _ in range(6))
        twice = apply_additive(*apply_additive(k, v, p, r), q, s)
        once = apply_additive(k, v, Tensor(p.data + q.data), Tensor(r.data + s.data))
        for a, b in zip(twice, once):
            np.testing.assert_allclose(a.data, b.data, rtol=0, atol=1e-12)


def test_apply_input_level_shifts_cls_row_only(rng):
    x = Tensor(rng.normal(size=(2, 3, 4)))
    out = apply_input_level(x, Tensor(np.ones(4)))
    np.testing.assert_array_equal(out.data[:, 0], x.data[:, 0] + 1)
    assert np.array_equal(out.data[:, 1:], x.data[:, 1:])


def test_ppf_endpoints_exact_and_interior_arithmetic(rng):
    for _ in range(100):
        old, new = _random_set(rng), _random_set(rng)
        for fused, ref in ((ppf_fuse(old, new, 1.0), old), (ppf_fuse(old, new, 0.0), new)):
            for (fk, fv), (rk, rv) in zip(fused.layers, ref.layers):
                assert np.array_equal(fk.data, rk.data) and np.array_equal(fv.data, rv.data)
        mixed = ppf_fuse(old, new, 0.7)
        for (mk, mv), (ok, ov), (nk, nv) in zip(mixed.layers, old.layers, new.layers):
            np.testing.assert_allclose(mk.data, 0.7 * ok.data + 0.3 * nk.data, rtol=0, atol=1e-12)
            np.testing.assert_allclose(mv.data, 0.7 * ov.data + 0.3 * nv.data, rtol=0, atol=1e-12)


def test_ppf_is_homogeneous(rng):
    for _ in range(100):
        old, new = _random_set(rng), _random_set(rng)
        c, alpha = rng.uniform(-3, 3), rng.uniform(0, 1)
        scaled = ppf_fuse(
            PromptSet([(Tensor(c * k.data), Tensor(c * v.data)) for k, v in old.layers]),
            PromptSet([(Tensor(c * k.data), Tensor(c * v.data)) for k, v in new.layers]),
            alpha,
        )
        for a, b in zip(scaled.parameters(), ppf_fuse(old, new, alpha).parameters()):
            np.testing.assert_allclose(a.data, c * b.data, rtol=0, atol=1e-12)


def test_ppf_result_is_detached_copy(rng):
    old, new = _random_set(rng), _random_set(rng)
    fused = ppf_fuse(old, new, 1.0)
    old.layers[0][0].data[:] = 0.0
    assert fused.layers[0][0].data.any()
    assert not any(p.requires_grad for p in fused.parameters())


@pytest.mark.parametrize("alpha", [-0.1, 1.5])
def test_ppf_alpha_out_of_range(alpha, rng):
    with pytest.raises(ContractError):
        ppf_fuse(_random_set(rng), _random_set(rng), alpha)


def test_ppf_geometry_mismatch(rng):
    with pytest.raises(ShapeError):
        ppf_fuse(_random_set(rng, depth=3), _random_set(rng, depth=2), 0.5)
    with pytest.raises(ShapeError):
        ppf_fuse(_random_set(rng, dim=5), _random_set(rng, dim=4), 0.5)


def test_prompt_snapshot_round_trip(tmp_path, rng):
    prompts = PromptSet([
        (Tensor(rng.normal(size=6).astype(np.float32)), Tensor(rng.normal(size=6).astype(np.float32)))
        for _ in range(2)
    ])
    save_prompts(prompts, tmp_path / "p.aptw")
    loaded = load_prompts(tmp_path / "p.aptw")
    for (a, b), (c, d) in zip(prompts.layers, loaded.layers):
        assert np.array_equal(a.data, c.data) and np.array_equal(b.data, d.data)


def test_prompt_mode_marker(tmp_path, rng):
    prompts = _random_set(rng, depth=2, dim=4)
    save_prompts(prompts, tmp_path / "in.aptw", mode="input")
    arrays = read_container(tmp_path / "in.aptw")
    assert stored_mode(arrays) == "input"
    assert stored_mode(prompts.to_arrays()) == "kv"
    assert load_prompts(tmp_path / "in.aptw").depth == 2
    with pytest.raises(ConfigError):
        tag_mode(prompts.to_arrays(), "prefix")
    with pytest.raises(ConfigError):
        stored_mode({**arrays, MODE_KEY: np.array([5.0])})


# -- concatenation baselines ----------------------------------------------------------


@pytest.mark.parametrize("mode", ["shallow", "deep"])
def test_vpt_lengthens_every_layer(mode, small_config, frozen_model, rng):
    prompts = ConcatPromptSet.create(small_config, 3, mode, seed=0)
    counts: list[int] = []
    out = vpt_concat_forward(frozen_model, rng.random((2, 1, 8, 8)), prompts, counts)
    assert out.shape == (2, small_config.dim)
    assert counts == [small_config.seq_len + 3] * small_config.depth
    expected = 3 * small_config.dim * (1 if mode == "shallow" else small_config.depth)
    assert prompts.num_params() == expected


def test_vpt_rejects_empty_prompt(small_config):
    with pytest.raises(ConfigError):
        ConcatPromptSet.create(small_config, 0, "deep")


# -- prompt pool ----------------------------------------------------------------------


def test_rank_keys_ties_go_to_lower_index():
    keys = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    _, order = rank_keys(np.array([[2.0, 0.0]]), keys)
    assert order[0].tolist() == [0, 1, 2]


def test_pool_select_and_forward(small_config, frozen_model, rng):
    pool = PromptPool.create(small_config, pool_size=4, n=2, top_k=2, seed=1)
    imgs = rng.random((3, 1, 8, 8))
    idx, tokens = pool_select(frozen_model, imgs, pool)
    assert idx.shape == (3, 2) and tokens.shape == (3, 4, small_config.dim)
    np.testing.assert_array_equal(tokens.data[1, :2], pool.prompts.data[idx[1, 0]])
    counts: list[int] = []
    assert pool_forward(frozen_model, imgs, pool, counts).shape == (3, small_config.dim)
    assert counts == [small_config.seq_len + 4] * small_config.depth
    assert pool.num_params() == 4 * 2 * small_config.dim
    assert pool.num_key_params() == 4 * small_config.dim


def test_pool_rejects_bad_top_k(small_config):
    with pytest.raises(ConfigError):
        PromptPool.create(small_config, pool_size=2, n=1, top_k=3)
    with pytest.raises(ContractError):
        PromptPool.create(small_config, pool_size=0, n=1)
