"""
PRNC checkpoint files

Layout (little-endian):
    b"PRNC" | u32 version=1 | u32 header length | header (UTF-8 key=value lines)
    | parameter blob (float32, canonical order) | u32 CRC32 of the blob
    [ b"TRNS" | u32 header length | header | m blob | v blob (float32)
      | u32 CRC32 of m+v ]

The header carries every NetworkConfig field plus param_count. The trainer
section is present when the header says trainer=1; it holds the ADAM moments,
step counter, next epoch and the data RNG state so a run can resume.
Files are written to a temporary sibling and renamed into place.
"""

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from prenetctl.core.network import NetworkConfig, ParameterSet, count_parameters, parameter_layout
from prenetctl.errors import (CheckpointCorruptionError, CheckpointFormatError, ConfigError,
                              PrenetIOError)
from prenetctl.logging_config import get_logger

logger = get_logger('checkpoint')

MAGIC = b'PRNC'
TRAINER_MAGIC = b'TRNS'
VERSION = 1
BLOB_DTYPE = np.dtype('<f4')


@dataclass
class TrainerSnapshot:
    """Optimizer and schedule position stored alongside the parameters"""
    step: int
    next_epoch: int
    iteration: int
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    rng_state: Optional[dict] = None
    extra: Dict[str, str] = field(default_factory=dict)


@dataclass
class Checkpoint:
    params: ParameterSet
    config: NetworkConfig
    trainer: Optional[TrainerSnapshot] = None


def _encode_header(entries: Dict[str, object]) -> bytes:
    lines = []
    for key, value in entries.items():
        text = str(value)
        if '\n' in text or '=' in key:
            raise CheckpointFormatError(f"Header entry {key!r} cannot be encoded")
        lines.append(f"{key}={text}")
    return ('\n'.join(lines) + '\n').encode('utf-8')


def _decode_header(raw: bytes) -> Dict[str, str]:
    try:
        text = raw.decode('utf-8')
    except UnicodeDecodeError as e:
        raise CheckpointFormatError(f"Header is not UTF-8: {e}") from e
    header = {}
    for line in text.splitlines():
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep:
            raise CheckpointFormatError(f"Malformed header line: {line!r}")
        header[key] = value
    return header


def _blob_for(arrays) -> bytes:
    if not arrays:
        return b''
    return np.concatenate([np.asarray(a).reshape(-1).astype(BLOB_DTYPE) for a in arrays]).tobytes()


def save_checkpoint(params: ParameterSet, config: NetworkConfig, path: Union[str, Path],
                    trainer: Optional[TrainerSnapshot] = None) -> Path:
    """Write params (and optionally trainer state) as a PRNC file"""
    config.validate()
    path = Path(path)
    names = [name for name, _ in parameter_layout(config)]
    if list(params) != names:
        raise ConfigError("ParameterSet does not match the config's canonical layout")

    header = dict(config.to_dict())
    header['param_count'] = params.total
    header['trainer'] = 1 if trainer is not None else 0
    header_bytes = _encode_header(header)
    blob = _blob_for([params[name].data for name in names])

    parts = [MAGIC, struct.pack('<II', VERSION, len(header_bytes)), header_bytes,
             blob, struct.pack('<I', zlib.crc32(blob) & 0xFFFFFFFF)]

    if trainer is not None:
        trainer_header = {
            'step': trainer.step,
            'next_epoch': trainer.next_epoch,
            'iteration': trainer.iteration,
            'rng_state': json.dumps(trainer.rng_state, sort_keys=True) if trainer.rng_state else '',
        }
        trainer_header.update(trainer.extra)
        trainer_bytes = _encode_header(trainer_header)
        moments = _blob_for([trainer.m[n] for n in names] + [trainer.v[n] for n in names])
        parts += [TRAINER_MAGIC, struct.pack('<I', len(trainer_bytes)), trainer_bytes,
                  moments, struct.pack('<I', zlib.crc32(moments) & 0xFFFFFFFF)]

    tmp_path = path.with_name(path.name + '.tmp')
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp_path, 'wb') as f:
            for part in parts:
                f.write(part)
        os.replace(tmp_path, path)
    except OSError as e:
        tmp_path.unlink(missing_ok=True)
        raise PrenetIOError(f"Cannot write checkpoint {path}: {e}") from e
    logger.debug(f"Saved checkpoint {path} ({params.total:,} parameters)")
    return path


class _Reader:

    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.data):
            raise CheckpointCorruptionError(f"{self.path}: truncated while reading {what}")
        chunk = self.data[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack('<I', self.take(4, what))[0]

    def floats(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(count * BLOB_DTYPE.itemsize, what), dtype=BLOB_DTYPE).astype(np.float32)


def read_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Read and validate a PRNC file, including any trainer section"""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as e:
        raise PrenetIOError(f"Checkpoint not found: {path}") from e
    except OSError as e:
        raise PrenetIOError(f"Cannot read checkpoint {path}: {e}") from e

    reader = _Reader(data, path)
    if len(data) < 4 or reader.take(4, 'magic') != MAGIC:
        raise CheckpointFormatError(f"{path}: not a PRNC checkpoint (bad magic)")
    version = reader.u32('version')
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    header = _decode_header(reader.take(reader.u32('header length'), 'header'))

    try:
        has_trainer = header.pop('trainer', '0') == '1'
        param_count = int(header.pop('param_count'))
        config = NetworkConfig.from_dict(header)
    except (KeyError, ValueError, ConfigError) as e:
        raise CheckpointFormatError(f"{path}: invalid header ({e})") from e

    expected = count_parameters(config)
    if param_count != expected:
        raise CheckpointCorruptionError(
            f"{path}: header declares {param_count:,} parameters but the {config.family} config needs {expected:,}")

    blob_bytes = reader.take(param_count * BLOB_DTYPE.itemsize, 'parameter blob')
    crc = reader.u32('parameter CRC')
    if zlib.crc32(blob_bytes) & 0xFFFFFFFF != crc:
        raise CheckpointCorruptionError(f"{path}: parameter blob CRC mismatch")
    blob = np.frombuffer(blob_bytes, dtype=BLOB_DTYPE).astype(np.float32)
    params = ParameterSet.from_blob(config, blob)

    trainer = None
    if has_trainer:
        trainer = _read_trainer_section(reader, config, param_count, path)
    if reader.offset != len(data):
        raise CheckpointCorruptionError(f"{path}: {len(data) - reader.offset} trailing byte(s)")
    return Checkpoint(params=params, config=config, trainer=trainer)


def _read_trainer_section(reader: _Reader, config: NetworkConfig, param_count: int, path: Path) -> TrainerSnapshot:
    if reader.take(4, 'trainer magic') != TRAINER_MAGIC:
        raise CheckpointCorruptionError(f"{path}: trainer section has a bad magic")
    header = _decode_header(reader.take(reader.u32('trainer header length'), 'trainer header'))
    start = reader.offset
    m_blob = reader.floats(param_count, 'first moments')
    v_blob = reader.floats(param_count, 'second moments')
    if zlib.crc32(reader.data[start:reader.offset]) & 0xFFFFFFFF != reader.u32('trainer CRC'):
        raise CheckpointCorruptionError(f"{path}: trainer section CRC mismatch")

    m, v, offset = {}, {}, 0
    for name, shape in parameter_layout(config):
        size = int(np.prod(shape))
        m[name] = m_blob[offset:offset + size].reshape(shape).copy()
        v[name] = v_blob[offset:offset + size].reshape(shape).copy()
        offset += size
    try:
        step = int(header.pop('step'))
        next_epoch = int(header.pop('next_epoch'))
        iteration = int(header.pop('iteration'))
        rng_raw = header.pop('rng_state', '')
        rng_state = json.loads(rng_raw) if rng_raw else None
    except (KeyError, ValueError) as e:
        raise CheckpointFormatError(f"{path}: invalid trainer header ({e})") from e
    return TrainerSnapshot(step=step, next_epoch=next_epoch, iteration=iteration,
                           m=m, v=v, rng_state=rng_state, extra=header)


def load_checkpoint(path: Union[str, Path]) -> Tuple[ParameterSet, NetworkConfig]:
    """Parameters and config of a PRNC file; raises before returning anything partial"""
    checkpoint = read_checkpoint(path)
    return checkpoint.params, checkpoint.config
