import struct
from dataclasses import replace

import numpy as np
import pytest

from src.aptlab.data import (
    AccessAudit,
    SynthSpec,
    TaskView,
    generate,
    make_template,
    nearest_template_accuracy,
    read_dataset,
    split_stream,
    templates,
    write_dataset,
)
from src.aptlab.data.synth import check_separability, make_sample
from src.aptlab.errors import (
    BadMagicError,
    ConfigError,
    ContractError,
    TruncatedFileError,
    VersionMismatchError,
)


@pytest.mark.parametrize("kwargs", [
    {"noise_sigma": -0.1},
    {"max_shift": 16},
    {"n_classes": 0},
])
def test_invalid_spec(kwargs):
    with pytest.raises(ConfigError):
        SynthSpec(**kwargs)


def test_generation_is_deterministic(small_spec):
    a, b = generate(small_spec), generate(small_spec)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    other = generate(SynthSpec(**{**small_spec.to_dict(), "seed": small_spec.seed + 1}))
    assert not np.array_equal(a.images, other.images)


def test_values_clamped_and_labels_global(small_spec):
    ds = generate(small_spec, "test")
    assert ds.images.dtype == np.float32
    assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0
    assert ds.classes == list(range(8, 16))
    assert ds.n_classes == 16
    assert len(ds) == 8 * 4


def test_noise_free_unshifted_samples_equal_template():
    spec = SynthSpec(n_classes=3, train_per_class=4, test_per_class=0, image_size=8,
                     noise_sigma=0.0, max_shift=0, grid=2)
    ds = generate(spec)
    for img, label in zip(ds.images, ds.labels):
        assert np.array_equal(img, make_template(spec, int(label)).astype(np.float32))


def test_any_sample_regenerates_in_isolation(small_spec):
    ds = generate(small_spec)
    cls = small_spec.classes[3]
    row = 3 * small_spec.train_per_class + 5
    again = make_sample(small_spec, make_template(small_spec, cls), cls, "train", 5)
    assert np.array_equal(ds.images[row], again.astype(np.float32))


def test_templates_are_smooth():
    t = make_template(SynthSpec(), 0)
    assert np.abs(np.diff(t, axis=-1)).max() < 0.2


def test_nearest_template_oracle_at_defaults():
    spec = SynthSpec(train_per_class=0, test_per_class=50)
    assert nearest_template_accuracy(generate(spec, "test"), templates(spec)) >= 0.99


def test_separability_floor_scales_with_noise_distance():
    spec = SynthSpec(n_classes=2, noise_sigma=0.25, image_size=8, channels=1)
    base = np.zeros((spec.channels, spec.image_size, spec.image_size))
    # floor = 4 * 0.25 * sqrt(D) = sqrt(D); a constant offset x puts them x * sqrt(D) apart
    assert check_separability({0: base, 1: base + 1.5}, spec)
    assert not check_separability({0: base, 1: base + 0.5}, spec)


def test_separability_check_flags_heavy_noise():
    noisy = SynthSpec(n_classes=10, noise_sigma=50.0)
    assert not check_separability(templates(noisy), noisy)


def test_dataset_round_trip_bitwise(tmp_path, small_spec):
    ds = generate(small_spec)
    write_dataset(ds, tmp_path / "d.aptd")
    back = read_dataset(tmp_path / "d.aptd")
    assert np.array_equal(back.images, ds.images)
    assert np.array_equal(back.labels, ds.labels)
    assert back.n_classes == ds.n_classes


def test_dataset_file_errors(tmp_path, small_spec):
    path = tmp_path / "d.aptd"
    write_dataset(generate(small_spec), path)
    raw = path.read_bytes()
    cases = {
        "magic": (b"APTW" + raw[4:], BadMagicError),
        "version": (raw[:4] + struct.pack("<I", 2) + raw[8:], VersionMismatchError),
        "body": (raw[:-1], TruncatedFileError),
        "header": (raw[:10], TruncatedFileError),
        "stub": (raw[:2], TruncatedFileError),
        "empty": (b"", TruncatedFileError),
    }
    for name, (blob, err) in cases.items():
        bad = tmp_path / f"{name}.aptd"
        bad.write_bytes(blob)
        with pytest.raises(err):
            read_dataset(bad)


def test_split_stream_partitions_classes(small_spec):
    train, test = generate(small_spec), generate(small_spec, "test")
    stream = split_stream(train, 4, seed=3, test=test)
    groups = [set(g) for g in stream.class_groups]
    assert all(len(g) == 2 for g in groups)
    assert set().union(*groups) == set(train.classes)
    assert sum(len(g) for g in groups) == len(train.classes)
    for t in range(4):
        assert set(train.labels[stream.train_indices[t]]) == groups[t]
        assert set(test.labels[stream.test_indices[t]]) == groups[t]
    assert split_stream(train, 4, seed=3).class_groups == stream.class_groups


def test_split_stream_holds_out_test_share_without_test_set(small_spec):
    ds = generate(small_spec)
    stream = split_stream(ds, 2, seed=0)
    assert stream.test is stream.train
    for t, group in enumerate(stream.class_groups):
        tr, te = set(stream.train_indices[t].tolist()), set(stream.test_indices[t].tolist())
        assert not tr & te
        assert tr | te == set(np.flatnonzero(np.isin(ds.labels, group)).tolist())
        for c in group:
            # 6 samples per class -> 2 held out
            assert int((ds.labels[sorted(te)] == c).sum()) == 2
    again = split_stream(ds, 2, seed=0)
    assert all(np.array_equal(a, b) for a, b in zip(again.test_indices, stream.test_indices))


def test_split_stream_needs_two_samples_per_class_to_hold_out(small_spec):
    with pytest.raises(ConfigError):
        split_stream(generate(replace(small_spec, train_per_class=1)), 2, seed=0)


def test_split_stream_indivisible(small_spec):
    with pytest.raises(ConfigError):
        split_stream(generate(small_spec), 3, seed=0)


def test_audit_catches_reads_outside_the_task(small_stream):
    audit = AccessAudit()
    view = TaskView(small_stream.train, small_stream.train_indices[0], 0, audit)
    view.batch(np.arange(len(view)))
    audit.verify(small_stream)
    leaked = TaskView(small_stream.train, small_stream.train_indices[1], 0, audit)
    leaked.batch(np.array([0]))
    with pytest.raises(ContractError):
        audit.verify(small_stream)
