#!/usr/bin/env python3
"""
Test suite for PRNC checkpoint files
"""

import struct

import numpy as np
import pytest

from prenetctl.core import checkpoint
from prenetctl.core.checkpoint import (MAGIC, TrainerSnapshot, load_checkpoint, read_checkpoint,
                                       save_checkpoint)
from prenetctl.core.network import build, preset_config
from prenetctl.errors import CheckpointCorruptionError, CheckpointFormatError, PrenetIOError


def _blob_offset(data: bytes) -> int:
    header_length = struct.unpack('<I', data[8:12])[0]
    return 12 + header_length


@pytest.fixture
def saved(temp_dir, tiny_config, tiny_params):
    return save_checkpoint(tiny_params, tiny_config, temp_dir / "model.prnc")


@pytest.mark.unit
class TestRoundTrip:

    def test_parameters_and_config_survive(self, saved, tiny_config, tiny_params):
        params, config = load_checkpoint(saved)
        assert config == tiny_config
        assert list(params) == list(tiny_params)
        np.testing.assert_array_equal(params.flatten(), tiny_params.flatten())

    def test_file_starts_with_magic(self, saved):
        data = saved.read_bytes()
        assert data[:4] == MAGIC
        assert struct.unpack('<I', data[4:8])[0] == 1

    @pytest.mark.parametrize("arch", ['prn-r', 'prenet-gru', 'prenet-x'])
    def test_other_architectures(self, arch, temp_dir):
        config = preset_config(arch, channels=4, resblock_count=2, stages=2)
        params = build(config, seed=1)
        _, restored = load_checkpoint(save_checkpoint(params, config, temp_dir / f"{arch}.prnc"))
        assert restored == config

    def test_no_temporary_file_left_behind(self, saved):
        assert [p.name for p in saved.parent.iterdir()] == ['model.prnc']

    def test_trainer_section(self, temp_dir, tiny_config, tiny_params, rng):
        m = {name: rng.standard_normal(t.shape).astype(np.float32) for name, t in tiny_params.items()}
        v = {name: rng.uniform(size=t.shape).astype(np.float32) for name, t in tiny_params.items()}
        state = np.random.default_rng([4, 1]).bit_generator.state
        snapshot = TrainerSnapshot(step=12, next_epoch=3, iteration=11, m=m, v=v, rng_state=state)
        path = save_checkpoint(tiny_params, tiny_config, temp_dir / "resume.prnc", trainer=snapshot)

        restored = read_checkpoint(path).trainer
        assert (restored.step, restored.next_epoch, restored.iteration) == (12, 3, 11)
        assert restored.rng_state == state
        for name in tiny_params:
            np.testing.assert_array_equal(restored.m[name], m[name])
            np.testing.assert_array_equal(restored.v[name], v[name])

    def test_plain_checkpoint_has_no_trainer(self, saved):
        assert read_checkpoint(saved).trainer is None

    def test_failed_write_removes_temporary_file(self, temp_dir, tiny_config, tiny_params, monkeypatch):
        def refuse(src, dst):
            raise OSError("disk full")

        monkeypatch.setattr(checkpoint.os, 'replace', refuse)
        with pytest.raises(PrenetIOError, match="disk full"):
            save_checkpoint(tiny_params, tiny_config, temp_dir / "model.prnc")
        assert list(temp_dir.iterdir()) == []


@pytest.mark.unit
class TestRejection:

    def test_missing_file(self, temp_dir):
        with pytest.raises(PrenetIOError, match="missing.prnc"):
            load_checkpoint(temp_dir / "missing.prnc")

    def test_bad_magic(self, saved):
        data = bytearray(saved.read_bytes())
        data[:4] = b'XXXX'
        saved.write_bytes(bytes(data))
        with pytest.raises(CheckpointFormatError, match="magic"):
            load_checkpoint(saved)

    def test_unknown_version(self, saved):
        data = bytearray(saved.read_bytes())
        data[4:8] = struct.pack('<I', 7)
        saved.write_bytes(bytes(data))
        with pytest.raises(CheckpointFormatError, match="version"):
            load_checkpoint(saved)

    def test_truncated_blob(self, saved):
        saved.write_bytes(saved.read_bytes()[:-1])
        with pytest.raises(CheckpointCorruptionError, match="truncated"):
            load_checkpoint(saved)

    def test_flipped_blob_byte_fails_crc(self, saved):
        data = bytearray(saved.read_bytes())
        data[_blob_offset(bytes(data)) + 5] ^= 0xFF
        saved.write_bytes(bytes(data))
        with pytest.raises(CheckpointCorruptionError, match="CRC"):
            load_checkpoint(saved)

    def test_trailing_bytes(self, saved):
        saved.write_bytes(saved.read_bytes() + b'\x00')
        with pytest.raises(CheckpointCorruptionError, match="trailing"):
            load_checkpoint(saved)

    def test_param_count_disagrees_with_config(self, saved):
        text = saved.read_bytes()
        start = text.index(b'param_count=')
        end = text.index(b'\n', start)
        count = int(text[start + len(b'param_count='):end])
        # same digit count so the header length stays valid
        forged = text[:start] + b'param_count=' + str(count + 1).zfill(end - start - 12).encode() + text[end:]
        saved.write_bytes(forged)
        with pytest.raises(CheckpointCorruptionError, match="declares"):
            load_checkpoint(saved)

    def test_corruption_is_a_format_error(self):
        assert issubclass(CheckpointCorruptionError, CheckpointFormatError)
        assert CheckpointFormatError.exit_code == 3
        assert PrenetIOError.exit_code == 2
