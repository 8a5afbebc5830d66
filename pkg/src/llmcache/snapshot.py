"""Versioned binary snapshots of cache banks for warm-start runs.

Layout (all integers and floats little-endian)::

    b"LLMC"  u16 version  u32 bank_count
    per bank:
        u32 layer_index  u32 capacity  u8 key_kind  u8 policy
        u32 decay_half_life  f64 staleness_floor  f64 divergence_epsilon
        f64 validation_rate  u64 seed  u32 lsh_bands (0 = off)
        u8 has_pca  [array mean, array components, array explained_variance]
        u32 entry_count, then entries
    entry:
        u64 entry_id  u64 insert_step  u64 last_hit_step  u64 hit_count
        f64 decayed_match_rate  f64 divergence_estimate  u64 last_sweep_step
        key: dense  -> u8 normalized, array values
             signature -> u32 width, width/8 raw bytes
        u32 seq_len  u8 compressed  array activation
    array: u8 ndim, u32 per dim, float64 payload (C order)

Counters are not persisted; a restored bank starts them at zero.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from llmcache.cachebank import CacheBank, CacheEntry, EvictionPolicy, PolicyKind, StoredActivation
from llmcache.compression import PcaModel
from llmcache.errors import SnapshotError
from llmcache.fingerprint import BitSignature, DenseFingerprint

MAGIC = b"LLMC"
VERSION = 1

_KEY_KINDS = {None: 255, DenseFingerprint: 0, BitSignature: 1}
_POLICIES = list(PolicyKind)


def _pack(fh: BinaryIO, fmt: str, *values) -> None:
    fh.write(struct.pack("<" + fmt, *values))


def _unpack(fh: BinaryIO, fmt: str):
    size = struct.calcsize("<" + fmt)
    buf = fh.read(size)
    if len(buf) != size:
        raise SnapshotError("truncated snapshot")
    values = struct.unpack("<" + fmt, buf)
    return values if len(values) > 1 else values[0]


def _write_array(fh: BinaryIO, a: np.ndarray) -> None:
    a = np.ascontiguousarray(a, dtype="<f8")
    _pack(fh, "B", a.ndim)
    _pack(fh, f"{a.ndim}I", *a.shape)
    fh.write(a.tobytes())


def _read_array(fh: BinaryIO) -> np.ndarray:
    ndim = _unpack(fh, "B")
    shape = _unpack(fh, f"{ndim}I") if ndim else ()
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    count = int(np.prod(shape)) if shape else 1
    buf = fh.read(8 * count)
    if len(buf) != 8 * count:
        raise SnapshotError("truncated array payload")
    return np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)


def _write_entry(fh: BinaryIO, e: CacheEntry) -> None:
    _pack(fh, "QQQQddQ", e.entry_id, e.insert_step, e.last_hit_step, e.hit_count,
          e.decayed_match_rate, e.divergence_estimate, e.last_sweep_step)
    if isinstance(e.key, DenseFingerprint):
        _pack(fh, "B", int(e.key.normalized))
        _write_array(fh, e.key.values)
    else:
        _pack(fh, "I", e.key.width)
        fh.write(e.key.packed.tobytes())
    _pack(fh, "IB", e.activation.seq_len, int(e.activation.compressed))
    _write_array(fh, e.activation.data)


def _read_entry(fh: BinaryIO, key_kind: type) -> CacheEntry:
    entry_id, insert_step, last_hit, hit_count, rate, divergence, last_sweep = _unpack(fh, "QQQQddQ")
    if key_kind is DenseFingerprint:
        normalized = bool(_unpack(fh, "B"))
        key = DenseFingerprint(_read_array(fh), normalized)
    else:
        width = _unpack(fh, "I")
        key = BitSignature(np.frombuffer(fh.read(width // 8), dtype=np.uint8), width)
    seq_len, compressed = _unpack(fh, "IB")
    activation = StoredActivation(_read_array(fh), seq_len, bool(compressed))
    return CacheEntry(key, activation, insert_step, last_hit, hit_count, rate, divergence, last_sweep, entry_id)


def write_snapshot(fh: BinaryIO, banks: Sequence[CacheBank]) -> None:
    fh.write(MAGIC)
    _pack(fh, "HI", VERSION, len(banks))
    for bank in banks:
        p = bank.policy
        _pack(fh, "IIBBIdddQI", bank.layer_index, bank.capacity, _KEY_KINDS[bank.key_kind],
              _POLICIES.index(p.kind), p.decay_half_life, p.staleness_floor,
              p.divergence_epsilon, p.validation_rate, bank.seed, bank.lsh_bands or 0)
        _pack(fh, "B", int(bank.compressor is not None))
        if bank.compressor is not None:
            for a in (bank.compressor.mean, bank.compressor.components, bank.compressor.explained_variance):
                _write_array(fh, a)
        entries = sorted(bank.entries(), key=lambda e: e.entry_id)
        _pack(fh, "I", len(entries))
        for e in entries:
            _write_entry(fh, e)


def read_snapshot(fh: BinaryIO) -> list[CacheBank]:
    if fh.read(4) != MAGIC:
        raise SnapshotError("not an LLMC snapshot (bad magic)")
    version, count = _unpack(fh, "HI")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    kinds = {v: k for k, v in _KEY_KINDS.items()}
    banks = []
    for _ in range(count):
        (layer, capacity, kind_code, policy_code, half_life,
         floor, eps, rate, seed, bands) = _unpack(fh, "IIBBIdddQI")
        if kind_code not in kinds or policy_code >= len(_POLICIES):
            raise SnapshotError("corrupt bank header")
        policy = EvictionPolicy(_POLICIES[policy_code], half_life, floor, eps, rate)
        compressor = None
        if _unpack(fh, "B"):
            compressor = PcaModel(_read_array(fh), _read_array(fh), _read_array(fh))
        bank = CacheBank(layer, kinds[kind_code], capacity, policy, compressor, seed, bands or None)
        for _ in range(_unpack(fh, "I")):
            bank.restore_entry(_read_entry(fh, kinds[kind_code]))
        banks.append(bank)
    return banks


def save_banks(banks: Sequence[CacheBank], path: str | Path) -> None:
    buf = io.BytesIO()
    write_snapshot(buf, banks)
    Path(path).write_bytes(buf.getvalue())


def load_banks(path: str | Path) -> list[CacheBank]:
    with open(path, "rb") as fh:
        return read_snapshot(fh)
