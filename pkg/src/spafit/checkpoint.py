"""Binary container for named float64 tensors.

Layout: 4-byte magic, 1 version byte, uint32 little-endian header length,
UTF-8 JSON header, then the raw row-major little-endian float64 payloads in
header order. The same container carries full checkpoints and adapter files
(distinguished by the header ``kind``), so round trips are byte-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    UnknownTensorError,
)
from .model import ModelConfig

MAGIC = b"SPFC"
FORMAT_VERSION = 1


def write_container(path: str | Path, kind: str, config: ModelConfig,
                    tensors: dict[str, np.ndarray],
                    plan_spec: str | None = None) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": asdict(config),
        "plan_spec": plan_spec,
        "tensors": [{"name": name, "shape": list(arr.shape), "dtype": "<f8"}
                    for name, arr in tensors.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a container; returns (header, tensors by name)."""
    raw = Path(path).read_bytes()
    if len(raw) < 9 or raw[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad container magic {raw[:4]!r}")
    version = raw[4]
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})")
    (header_len,) = struct.unpack("<I", raw[5:9])
    if len(raw) < 9 + header_len:
        raise CheckpointTruncatedError(f"{path}: header truncated")
    header = json.loads(raw[9:9 + header_len].decode("utf-8"))

    tensors: dict[str, np.ndarray] = {}
    offset = 9 + header_len
    for entry in header["tensors"]:
        if entry["dtype"] != "<f8":
            raise CheckpointFormatError(f"{path}: unsupported dtype {entry['dtype']!r}")
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        chunk = raw[offset:offset + nbytes]
        if len(chunk) < nbytes:
            raise CheckpointTruncatedError(
                f"{path}: payload for {entry['name']!r} truncated")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, tensors


def config_from_header(header: dict) -> ModelConfig:
    return ModelConfig(**header["config"])


def save_checkpoint(store, path: str | Path, plan_spec: str | None = None) -> None:
    """Write every base tensor plus any attached LoRA factors."""
    tensors: dict[str, np.ndarray] = {p: t.data for p, t in store.params.items()}
    for target, pair in store.lora.items():
        tensors[f"{target}.lora_A"] = pair.down.data
        tensors[f"{target}.lora_B"] = pair.up.data
    write_container(path, "checkpoint", store.config, tensors, plan_spec)


def load_checkpoint(path: str | Path):
    """Rebuild a ParamStore; see ``load_checkpoint_with_plan``."""
    return load_checkpoint_with_plan(path)[0]


def load_checkpoint_with_plan(path: str | Path):
    """Rebuild a ParamStore (and its plan attachment, if recorded).

    Strict: the file must contain exactly the base paths implied by its own
    config, plus factor tensors for the recorded plan's targets. Anything
    extra or missing is rejected by name.
    """
    from .model import ParamStatus, ParamStore, param_shapes
    from .plan import attach_lora, compile_plan, parse_plan_spec

    header, tensors = read_container(path)
    if header.get("kind") != "checkpoint":
        raise CheckpointFormatError(f"{path}: container kind {header.get('kind')!r} "
                                    "is not a checkpoint")
    config = config_from_header(header)

    expected = dict(param_shapes(config))
    plan = None
    if header.get("plan_spec"):
        plan = compile_plan(parse_plan_spec(header["plan_spec"]), config)
        for target in plan.lora_targets:
            out_dim, in_dim = expected[target]
            expected[f"{target}.lora_A"] = (config.lora_rank, in_dim)
            expected[f"{target}.lora_B"] = (out_dim, config.lora_rank)

    for name in tensors:
        if name not in expected:
            raise UnknownTensorError(f"{path}: unknown tensor {name!r}")
    for name, shape in expected.items():
        if name not in tensors:
            raise UnknownTensorError(f"{path}: missing tensor {name!r}")
        if tensors[name].shape != shape:
            raise CheckpointFormatError(
                f"{path}: tensor {name!r} has shape {tensors[name].shape}, "
                f"expected {shape}")

    from .tensor import Tensor
    store = ParamStore(config)
    for name, shape in param_shapes(config).items():
        store.params[name] = Tensor(tensors[name], requires_grad=True)
        store.status[name] = ParamStatus.TUNABLE
    if plan is not None:
        attach_lora(store, plan, seed=0)
        for target, pair in store.lora.items():
            pair.down.data[...] = tensors[f"{target}.lora_A"]
            pair.up.data[...] = tensors[f"{target}.lora_B"]
    return store, plan
