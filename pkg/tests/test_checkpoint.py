"""Checkpoint container: byte-exact round trips and strict load validation."""

import numpy as np
import pytest

from spafit.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    load_checkpoint,
    load_checkpoint_with_plan,
    read_container,
    save_checkpoint,
    write_container,
)
from spafit.errors import (
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    UnknownTensorError,
)
from spafit.model import ModelConfig, build_model
from spafit.plan import attach_lora, compile_plan, parse_plan_spec

CFG = ModelConfig(num_layers=2, hidden_size=8, num_heads=2, ffn_size=16,
                  vocab_size=20, max_positions=12, lora_rank=2, lora_alpha=4)


@pytest.fixture
def store():
    return build_model(CFG, seed=5)


def test_round_trip_bit_exact(store, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(store, path)
    loaded = load_checkpoint(path)
    assert loaded.config == CFG
    assert loaded.paths() == store.paths()
    for p in store.paths():
        np.testing.assert_array_equal(loaded.params[p].data, store.params[p].data)


def test_round_trip_with_attached_plan(store, tmp_path):
    plan = compile_plan(parse_plan_spec("spafit:N1=0,N2=1,mode=II"), CFG)
    attach_lora(store, plan, seed=9)
    store.lora["encoder.layer.1.attention.self.query.weight"].up.data[:] = 0.5
    path = tmp_path / "model.ckpt"
    save_checkpoint(store, path, plan_spec=str(plan.spec))
    loaded, loaded_plan = load_checkpoint_with_plan(path)
    assert str(loaded_plan.spec) == "spafit:N1=0,N2=1,mode=II"
    assert set(loaded.lora) == set(store.lora)
    for target, pair in store.lora.items():
        np.testing.assert_array_equal(loaded.lora[target].down.data, pair.down.data)
        np.testing.assert_array_equal(loaded.lora[target].up.data, pair.up.data)
    assert loaded.status == store.status


def test_corrupt_magic_rejected(store, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(store, path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointFormatError, match="magic"):
        load_checkpoint(path)


def test_version_mismatch_rejected(store, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(store, path)
    raw = bytearray(path.read_bytes())
    raw[4] = FORMAT_VERSION + 1
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)


def test_truncated_payload_rejected(store, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(store, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:len(raw) - 16])
    with pytest.raises(CheckpointTruncatedError):
        load_checkpoint(path)


def test_extra_unknown_tensor_rejected_by_name(store, tmp_path):
    path = tmp_path / "model.ckpt"
    tensors = {p: t.data for p, t in store.params.items()}
    tensors["mystery.weight"] = np.zeros(3)
    write_container(path, "checkpoint", CFG, tensors)
    with pytest.raises(UnknownTensorError, match="mystery.weight"):
        load_checkpoint(path)


def test_missing_tensor_rejected_by_name(store, tmp_path):
    path = tmp_path / "model.ckpt"
    tensors = {p: t.data for p, t in store.params.items()}
    tensors.pop("pooler.dense.bias")
    write_container(path, "checkpoint", CFG, tensors)
    with pytest.raises(UnknownTensorError, match="pooler.dense.bias"):
        load_checkpoint(path)


def test_wrong_shape_rejected(store, tmp_path):
    path = tmp_path / "model.ckpt"
    tensors = {p: t.data for p, t in store.params.items()}
    tensors["pooler.dense.bias"] = np.zeros(9)
    write_container(path, "checkpoint", CFG, tensors)
    with pytest.raises(CheckpointFormatError, match="shape"):
        load_checkpoint(path)


def test_trailing_garbage_rejected(store, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(store, path)
    path.write_bytes(path.read_bytes() + b"\x00" * 8)
    with pytest.raises(CheckpointFormatError, match="trailing"):
        load_checkpoint(path)


def test_payloads_little_endian_row_major(tmp_path):
    path = tmp_path / "t.ckpt"
    arr = np.arange(6.0).reshape(2, 3)
    write_container(path, "checkpoint", CFG, {"a": arr})
    header, tensors = read_container(path)
    assert header["format_version"] == FORMAT_VERSION
    np.testing.assert_array_equal(tensors["a"], arr)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert raw[-48:] == arr.astype("<f8").tobytes()
