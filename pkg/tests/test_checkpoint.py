import struct
from pathlib import Path

import numpy as np
import pytest

from man_rec.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from man_rec.errors import CheckpointError
from man_rec.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from man_rec.training.optim import AdamState


def _checkpoint(rng: np.random.Generator) -> Checkpoint:
    generator = np.random.default_rng(99)
    generator.random(3)
    return Checkpoint(
        params={"A.x": rng.normal(size=(2, 3)), "shared.bias": np.array(0.25)},
        config={"model": {"item_dim": 4, "head_layers": [4, 2]}, "name": "run"},
        adam=AdamState(
            step=7,
            m={"A.x": rng.normal(size=(2, 3))},
            v={"A.x": rng.random((2, 3))},
        ),
        rng_state=generator.bit_generator.state,
        meta={"epoch": 3, "best_epoch": 2},
    )


def test_round_trip(tmp_path: Path, rng: np.random.Generator) -> None:
    original = _checkpoint(rng)
    path = tmp_path / "nested" / "model.ckpt"
    save_checkpoint(original, path)
    loaded = load_checkpoint(path)

    assert loaded.params.keys() == original.params.keys()
    for name, value in original.params.items():
        np.testing.assert_array_equal(loaded.params[name], value)
        assert loaded.params[name].shape == np.shape(value)
    assert loaded.config == original.config
    assert loaded.meta == original.meta
    assert original.adam is not None and loaded.adam is not None
    assert loaded.adam.step == 7
    np.testing.assert_array_equal(loaded.adam.m["A.x"], original.adam.m["A.x"])
    np.testing.assert_array_equal(loaded.adam.v["A.x"], original.adam.v["A.x"])
    assert loaded.rng_state == original.rng_state


def test_restored_generator_continues_the_stream(
    tmp_path: Path, rng: np.random.Generator
) -> None:
    original = _checkpoint(rng)
    path = tmp_path / "model.ckpt"
    save_checkpoint(original, path)
    restored = np.random.default_rng()
    restored.bit_generator.state = load_checkpoint(path).rng_state
    expected = np.random.default_rng(99)
    expected.random(3)
    np.testing.assert_array_equal(restored.random(5), expected.random(5))


def test_minimal_checkpoint(tmp_path: Path) -> None:
    path = tmp_path / "model.ckpt"
    save_checkpoint(Checkpoint(params={"A.x": np.ones(2)}, config={}), path)
    loaded = load_checkpoint(path)
    assert loaded.adam is None and loaded.rng_state is None and loaded.meta == {}


def test_file_starts_with_magic_and_version(
    tmp_path: Path, rng: np.random.Generator
) -> None:
    path = tmp_path / "model.ckpt"
    save_checkpoint(_checkpoint(rng), path)
    data = path.read_bytes()
    assert data.startswith(CHECKPOINT_MAGIC)
    header = data[len(CHECKPOINT_MAGIC) : len(CHECKPOINT_MAGIC) + 4]
    assert struct.unpack("<I", header) == (CHECKPOINT_VERSION,)


def test_bad_magic(tmp_path: Path) -> None:
    path = tmp_path / "model.ckpt"
    path.write_bytes(b"NOTACKPT" + bytes(16))
    with pytest.raises(CheckpointError, match="not a checkpoint"):
        load_checkpoint(path)


def test_wrong_version(tmp_path: Path, rng: np.random.Generator) -> None:
    path = tmp_path / "model.ckpt"
    save_checkpoint(_checkpoint(rng), path)
    data = bytearray(path.read_bytes())
    start = len(CHECKPOINT_MAGIC)
    data[start : start + 4] = struct.pack("<I", CHECKPOINT_VERSION + 1)
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_truncated_file(tmp_path: Path, rng: np.random.Generator) -> None:
    path = tmp_path / "model.ckpt"
    save_checkpoint(_checkpoint(rng), path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_missing_file(tmp_path: Path) -> None:
    with pytest.raises(CheckpointError, match="Cannot read"):
        load_checkpoint(tmp_path / "absent.ckpt")
