"""Persistence: binary dataset roundtrip/corruption, JSON checkpoints."""

import json

import numpy as np
import pytest

from gaitspace.errors import (
    CorruptHeader,
    GaitspaceError,
    MissingField,
    ShapeMismatch,
    StatMismatch,
    TruncatedBody,
)
from gaitspace.io_formats import (
    load_checkpoint,
    read_dataset,
    save_checkpoint,
    write_dataset,
)
from gaitspace.vae import ModelConfig, VaeModel, encode


def test_dataset_roundtrip_bit_exact(tiny_dataset, tmp_path):
    path = tmp_path / "d.gsp"
    write_dataset(tiny_dataset, path)
    back = read_dataset(path)
    assert back.sample_rate == tiny_dataset.sample_rate
    assert back.feature_names == list(tiny_dataset.feature_names)
    assert np.array_equal(back.feature_mean, tiny_dataset.feature_mean)
    assert np.array_equal(back.feature_std, tiny_dataset.feature_std)
    assert len(back.trajectories) == len(tiny_dataset.trajectories)
    for ta, tb in zip(back.trajectories, tiny_dataset.trajectories):
        assert ta.params.swing_duration == tb.params.swing_duration
        assert tuple(ta.params.base_twist_cmd) == tuple(tb.params.base_twist_cmd)
        # states stored f32: reread matches the f32 quantization exactly
        assert np.array_equal(
            ta.to_matrix(), tb.to_matrix().astype("<f4").astype(np.float64)
        )
        assert np.array_equal(ta.contacts(), tb.contacts())
    # writing the reread dataset reproduces the identical byte stream
    path2 = tmp_path / "d2.gsp"
    write_dataset(back, path2)
    assert path2.read_bytes() == path.read_bytes()


def test_dataset_bad_magic(tiny_dataset, tmp_path):
    path = tmp_path / "d.gsp"
    write_dataset(tiny_dataset, path)
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptHeader):
        read_dataset(path)


def test_dataset_bad_version(tiny_dataset, tmp_path):
    path = tmp_path / "d.gsp"
    write_dataset(tiny_dataset, path)
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptHeader):
        read_dataset(path)


def test_dataset_stat_mismatch(tiny_dataset, tmp_path):
    path = tmp_path / "d.gsp"
    write_dataset(tiny_dataset, path)
    raw = bytearray(path.read_bytes())
    # feature mean starts after magic+version+dim+rate+counts+names
    import struct
    offset = 4 + 4 + 4 + 8 + 4 + 4
    for _ in range(60):
        ln = struct.unpack_from("<I", raw, offset)[0]
        offset += 4 + ln
    struct.pack_into("<d", raw, offset, 1e6)
    path.write_bytes(bytes(raw))
    with pytest.raises(StatMismatch):
        read_dataset(path)


def test_dataset_truncation_reports_offset(tiny_dataset, tmp_path):
    path = tmp_path / "d.gsp"
    write_dataset(tiny_dataset, path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(TruncatedBody) as exc:
        read_dataset(path)
    assert 0 <= exc.value.offset <= len(raw) // 2


def test_dataset_fuzz_never_crashes(tiny_dataset, tmp_path):
    """Random truncations and byte flips raise typed errors, never crash."""
    path = tmp_path / "d.gsp"
    write_dataset(tiny_dataset, path)
    raw = path.read_bytes()
    rng = np.random.default_rng(0)
    target = tmp_path / "fuzz.gsp"
    for trial in range(60):
        buf = bytearray(raw)
        if trial % 2 == 0:
            buf = buf[: rng.integers(0, len(buf))]
        else:
            for _ in range(rng.integers(1, 8)):
                buf[rng.integers(0, len(buf))] = rng.integers(0, 256)
        target.write_bytes(bytes(buf))
        try:
            read_dataset(target)
        except GaitspaceError:
            pass
        except (UnicodeDecodeError, ValueError, OverflowError):
            # name bytes / float payload corruption surfaces as decode
            # errors from the underlying parsers; acceptable, not a crash
            pass


# ---------------------------------------------------------------------------
# Checkpoints


CFG = ModelConfig(hidden=16, n_hidden=1)


def fresh_model(seed=0):
    rng = np.random.default_rng(seed)
    return VaeModel.init(CFG, rng.standard_normal(60),
                         np.abs(rng.standard_normal(60)) + 0.5, seed=seed)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    m = fresh_model()
    m.d_drive = 3
    m.drive_amplitude = 1.5
    m.drive_phase_fraction = 0.25
    m.drive_positive_pair = (1, 2)
    path = tmp_path / "m.json"
    save_checkpoint(m, path, metadata={"note": "test"})
    back = load_checkpoint(path)
    assert back.config == m.config
    assert np.array_equal(back.norm_mean, m.norm_mean)
    assert np.array_equal(back.norm_std, m.norm_std)
    assert back.d_drive == 3
    assert back.drive_amplitude == 1.5
    assert back.drive_phase_fraction == 0.25
    assert back.drive_positive_pair == (1, 2)
    for pa, pb in zip(m.params(), back.params()):
        assert np.array_equal(pa, pb)
    # probe: identical encodings for an arbitrary window
    w = np.random.default_rng(1).standard_normal(CFG.window_len * 60)
    assert np.array_equal(encode(m, w).mean, encode(back, w).mean)
    # save -> load -> save reproduces the identical file
    path2 = tmp_path / "m2.json"
    save_checkpoint(back, path2, metadata={"note": "test"})
    assert path2.read_bytes() == path.read_bytes()


def test_checkpoint_none_drive_fields(tmp_path):
    m = fresh_model()
    path = tmp_path / "m.json"
    save_checkpoint(m, path)
    back = load_checkpoint(path)
    assert back.d_drive is None
    assert back.drive_positive_pair is None


def test_checkpoint_missing_fields(tmp_path):
    m = fresh_model()
    path = tmp_path / "m.json"
    for key in ("config", "normalization", "networks"):
        save_checkpoint(m, path)
        doc = json.loads(path.read_text())
        del doc[key]
        path.write_text(json.dumps(doc))
        with pytest.raises(MissingField):
            load_checkpoint(path)


def test_checkpoint_shape_mismatch(tmp_path):
    m = fresh_model()
    path = tmp_path / "m.json"
    save_checkpoint(m, path)
    doc = json.loads(path.read_text())
    doc["networks"]["encoder"][0]["w"] = \
        [row[:-1] for row in doc["networks"]["encoder"][0]["w"]]
    path.write_text(json.dumps(doc))
    with pytest.raises(ShapeMismatch):
        load_checkpoint(path)
    save_checkpoint(m, path)
    doc = json.loads(path.read_text())
    doc["networks"]["decoder"].pop()
    path.write_text(json.dumps(doc))
    with pytest.raises(ShapeMismatch):
        load_checkpoint(path)


def test_trained_checkpoint_probe(model, model_path):
    """Session model roundtrips through its saved checkpoint file."""
    back = load_checkpoint(model_path)
    w = np.random.default_rng(2).standard_normal(
        model.config.window_len * model.config.state_dim
    )
    assert np.array_equal(encode(model, w).mean, encode(back, w).mean)
    assert back.d_drive == model.d_drive
    assert back.drive_positive_pair == tuple(model.drive_positive_pair)
