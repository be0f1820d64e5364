"""Binary checkpoint files.

Layout: the magic bytes ``MANCKPT``, a little-endian u32 format version, then records
until the end of the file. A record is a u32 name length, the UTF-8 name, a u32 rank,
``rank`` u64 dimensions and the row-major little-endian float64 values.

Record names: ``param/<name>``, ``adam/m/<name>``, ``adam/v/<name>``, ``adam/step``,
``rng/<field>``, ``meta/<field>`` and ``config``. Integers wider than float64 can hold
exactly are stored as 16-bit chunks, least significant first; the config snapshot is
JSON with one byte per value.
"""

from __future__ import annotations

import json
import logging
import struct
from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np

from man_rec.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from man_rec.errors import CheckpointError
from man_rec.numerics.tensor import Array
from man_rec.training.optim import AdamState

logger = logging.getLogger(__name__)

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_CHUNK_BITS = 16
_WIDE_CHUNKS = 8


@dataclass
class Checkpoint:
    params: dict[str, Array]
    config: dict[str, Any]
    adam: AdamState | None = None
    rng_state: dict[str, Any] | None = None
    meta: dict[str, int] = field(default_factory=dict)


def _split_wide(value: int) -> Array:
    mask = (1 << _CHUNK_BITS) - 1
    return np.array(
        [(value >> (_CHUNK_BITS * i)) & mask for i in range(_WIDE_CHUNKS)],
        dtype=np.float64,
    )


def _join_wide(chunks: Array) -> int:
    return sum(int(chunk) << (_CHUNK_BITS * i) for i, chunk in enumerate(chunks))


def _rng_records(state: dict[str, Any]) -> dict[str, Array]:
    if state.get("bit_generator") != "PCG64":
        raise CheckpointError(f"Cannot store a {state.get('bit_generator')} generator.")
    return {
        "rng/state": _split_wide(int(state["state"]["state"])),
        "rng/inc": _split_wide(int(state["state"]["inc"])),
        "rng/has_uint32": np.array(float(state["has_uint32"])),
        "rng/uinteger": np.array(float(state["uinteger"])),
    }


def _rng_state(records: dict[str, Array]) -> dict[str, Any] | None:
    if "rng/state" not in records:
        return None
    return {
        "bit_generator": "PCG64",
        "state": {
            "state": _join_wide(records["rng/state"]),
            "inc": _join_wide(records["rng/inc"]),
        },
        "has_uint32": int(records["rng/has_uint32"]),
        "uinteger": int(records["rng/uinteger"]),
    }


def _write_record(file: BinaryIO, name: str, value: Array) -> None:
    encoded = name.encode("utf-8")
    array = np.ascontiguousarray(value, dtype="<f8")
    file.write(_U32.pack(len(encoded)))
    file.write(encoded)
    file.write(_U32.pack(array.ndim))
    for size in array.shape:
        file.write(_U64.pack(size))
    file.write(array.tobytes(order="C"))


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    records: dict[str, Array] = {
        f"param/{name}": value for name, value in checkpoint.params.items()
    }
    if checkpoint.adam is not None:
        records.update({f"adam/m/{n}": m for n, m in checkpoint.adam.m.items()})
        records.update({f"adam/v/{n}": v for n, v in checkpoint.adam.v.items()})
        records["adam/step"] = np.array(float(checkpoint.adam.step))
    if checkpoint.rng_state is not None:
        records.update(_rng_records(checkpoint.rng_state))
    records.update(
        {
            f"meta/{key}": np.array(float(value))
            for key, value in checkpoint.meta.items()
        }
    )
    config = json.dumps(checkpoint.config, sort_keys=True).encode("utf-8")
    records["config"] = np.frombuffer(config, dtype=np.uint8).astype(np.float64)

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as file:
        file.write(CHECKPOINT_MAGIC)
        file.write(_U32.pack(CHECKPOINT_VERSION))
        for name, value in records.items():
            _write_record(file, name, value)
    logger.info(
        "Saved checkpoint with %d parameters to %s", len(checkpoint.params), path
    )


class _Reader:
    def __init__(self, data: bytes, path: Path) -> None:
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(f"{self.path}: truncated at byte {self.offset}.")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def records(self) -> Iterator[tuple[str, Array]]:
        while self.offset < len(self.data):
            (length,) = _U32.unpack(self.take(_U32.size))
            try:
                name = self.take(length).decode("utf-8")
            except UnicodeDecodeError as e:
                raise CheckpointError(f"{self.path}: bad record name: {e}") from e
            (rank,) = _U32.unpack(self.take(_U32.size))
            shape = tuple(_U64.unpack(self.take(_U64.size))[0] for _ in range(rank))
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            values = np.frombuffer(self.take(8 * count), dtype="<f8")
            yield name, values.astype(np.float64).reshape(shape)


def load_checkpoint(path: Path) -> Checkpoint:
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e.strerror}") from e
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint file.")
    reader = _Reader(data, path)
    reader.take(len(CHECKPOINT_MAGIC))
    (version,) = _U32.unpack(reader.take(_U32.size))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path} has checkpoint format version {version}, "
            f"expected {CHECKPOINT_VERSION}."
        )

    records = dict(reader.records())
    if "config" not in records:
        raise CheckpointError(f"{path} has no config record.")
    try:
        raw = records["config"].astype(np.uint8).tobytes()
        config = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path} has an unreadable config record: {e}") from e

    def strip(prefix: str) -> dict[str, Array]:
        return {
            name.removeprefix(prefix): value
            for name, value in records.items()
            if name.startswith(prefix)
        }

    adam = None
    if "adam/step" in records:
        adam = AdamState(
            step=int(records["adam/step"]), m=strip("adam/m/"), v=strip("adam/v/")
        )
    return Checkpoint(
        params=strip("param/"),
        config=config,
        adam=adam,
        rng_state=_rng_state(records),
        meta={name: int(value) for name, value in strip("meta/").items()},
    )
