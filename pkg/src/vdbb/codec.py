"""Density-bound-block (DBB) encoding of int8 matrices.

A block of ``bz`` consecutive elements along the blocked axis holds at most
``nnz`` non-zeros. It is stored as the non-zero values (zero-padded to
``nnz`` slots) plus a ``bz``-bit presence mask, bit i for element i.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DensityViolation, DimensionMismatch, MalformedBlock, ParseError

BLOCK_SIZES = (2, 4, 8, 16)
MAGIC = b"DBB1"
_HEADER = struct.Struct("<4sBBBBIII")


@dataclass(frozen=True)
class DbbFormat:
    bz: int
    nnz: int
    word_bits: int = 8

    def __post_init__(self):
        if self.bz not in BLOCK_SIZES:
            raise ValueError(f"block size must be one of {BLOCK_SIZES}, got {self.bz}")
        if not 1 <= self.nnz <= self.bz:
            raise ValueError(f"nnz must lie in [1, {self.bz}], got {self.nnz}")
        if self.word_bits != 8:
            raise ValueError("only 8-bit words are supported")

    @property
    def mask_bytes(self) -> int:
        return (self.bz + 7) // 8

    @property
    def block_bits(self) -> int:
        """Encoded size of one block: nnz values plus the bitmask."""
        return self.word_bits * self.nnz + self.bz

    def __str__(self) -> str:
        return f"{self.nnz}/{self.bz}"


@dataclass(frozen=True)
class DbbBlock:
    values: tuple[int, ...]
    mask: int


def compression_ratio(fmt: DbbFormat) -> Fraction:
    return Fraction(fmt.word_bits * fmt.bz, fmt.block_bits)


def _popcount(x: int) -> int:
    return bin(x).count("1")


def encode_block(raw: Sequence[int], fmt: DbbFormat) -> DbbBlock:
    if len(raw) != fmt.bz:
        raise DimensionMismatch(f"block needs {fmt.bz} elements, got {len(raw)}")
    nonzero = [(i, int(v)) for i, v in enumerate(raw) if v != 0]
    if len(nonzero) > fmt.nnz:
        raise DensityViolation(len(nonzero), fmt.nnz)
    mask = 0
    for i, _ in nonzero:
        mask |= 1 << i
    values = [v for _, v in nonzero] + [0] * (fmt.nnz - len(nonzero))
    return DbbBlock(tuple(values), mask)


def _check_block(values: Sequence[int], mask: int, fmt: DbbFormat) -> int:
    if len(values) != fmt.nnz:
        raise MalformedBlock(f"expected {fmt.nnz} values, got {len(values)}")
    if mask < 0 or mask >> fmt.bz:
        raise MalformedBlock(f"mask {mask:#x} has bits beyond block size {fmt.bz}")
    count = _popcount(mask)
    if count > fmt.nnz:
        raise MalformedBlock(f"mask popcount {count} exceeds nnz {fmt.nnz}")
    if any(v == 0 for v in values[:count]):
        raise MalformedBlock("zero value in a non-padding slot")
    if any(v != 0 for v in values[count:]):
        raise MalformedBlock("non-zero value in a padding slot")
    return count


def decode_block(blk: DbbBlock, fmt: DbbFormat) -> list[int]:
    _check_block(blk.values, blk.mask, fmt)
    out = [0] * fmt.bz
    j = 0
    for i in range(fmt.bz):
        if blk.mask >> i & 1:
            out[i] = blk.values[j]
            j += 1
    return out


# ---------------------------------------------------------------- matrices


def _as_int8_matrix(dense) -> np.ndarray:
    arr = np.asarray(dense)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {arr.shape}")
    if arr.dtype != np.int8:
        if arr.size and (arr.min() < -128 or arr.max() > 127):
            raise ValueError("values do not fit in int8")
        arr = arr.astype(np.int8)
    return arr


def _check_axis(axis: int) -> int:
    if axis not in (0, 1):
        raise ValueError(f"axis must be 0 or 1, got {axis}")
    return axis


def _to_blocks(dense: np.ndarray, bz: int, axis: int) -> tuple[np.ndarray, int, tuple[int, int]]:
    """Return (blocks[nb, bz], pad_count, grid shape) in row-major grid order."""
    if axis == 1:
        dense = dense.T
    blocked, other = dense.shape
    nblk = -(-blocked // bz)
    pad = nblk * bz - blocked
    if pad:
        dense = np.concatenate([dense, np.zeros((pad, other), np.int8)])
    # grid[br, c] -> elements dense[br*bz:(br+1)*bz, c]
    blocks = dense.reshape(nblk, bz, other).transpose(0, 2, 1)
    if axis == 1:
        blocks = blocks.transpose(1, 0, 2)
    grid = blocks.shape[:2]
    return np.ascontiguousarray(blocks.reshape(-1, bz)), pad, grid


def _from_blocks(blocks: np.ndarray, rows: int, cols: int, bz: int, axis: int) -> np.ndarray:
    blocked, other = (rows, cols) if axis == 0 else (cols, rows)
    nblk = -(-blocked // bz)
    if axis == 0:
        grid = blocks.reshape(nblk, other, bz).transpose(0, 2, 1)
    else:
        grid = blocks.reshape(other, nblk, bz).transpose(1, 2, 0)
    dense = grid.reshape(nblk * bz, other)[:blocked]
    return np.ascontiguousarray(dense if axis == 0 else dense.T)


@dataclass(frozen=True)
class Violation:
    coord: tuple[int, int]
    count: int


@dataclass
class DbbMatrix:
    """Encoded matrix. Blocks are kept as packed arrays; ``blocks`` expands them."""

    rows: int
    cols: int
    fmt: DbbFormat
    axis: int
    pad_count: int
    masks: np.ndarray  # (nblocks,) uint16
    values: np.ndarray  # (nblocks, nnz) int8
    grid: tuple[int, int] = field(default=(0, 0))

    @property
    def nblocks(self) -> int:
        return len(self.masks)

    @property
    def blocks(self) -> list[DbbBlock]:
        return [
            DbbBlock(tuple(int(v) for v in vals), int(m))
            for m, vals in zip(self.masks, self.values)
        ]

    @property
    def encoded_bits(self) -> int:
        return self.nblocks * self.fmt.block_bits

    def block_popcounts(self) -> np.ndarray:
        bits = (self.masks[:, None].astype(np.int64) >> np.arange(self.fmt.bz)) & 1
        return bits.sum(axis=1)

    def to_dense(self) -> np.ndarray:
        return decode_matrix(self)

    def with_format(self, fmt: DbbFormat) -> "DbbMatrix":
        """Re-encode under another format with the same block size (e.g. a looser bound)."""
        return encode_matrix(self.to_dense(), fmt, self.axis)


def check_dbb(dense, fmt: DbbFormat, axis: int = 0) -> list[Violation]:
    arr = _as_int8_matrix(dense)
    blocks, _, grid = _to_blocks(arr, fmt.bz, _check_axis(axis))
    counts = np.count_nonzero(blocks, axis=1)
    bad = np.flatnonzero(counts > fmt.nnz)
    return [Violation(divmod(int(i), grid[1]), int(counts[i])) for i in bad]


def encode_matrix(dense, fmt: DbbFormat, axis: int = 0) -> DbbMatrix:
    arr = _as_int8_matrix(dense)
    blocks, pad, grid = _to_blocks(arr, fmt.bz, _check_axis(axis))
    nz = blocks != 0
    counts = nz.sum(axis=1)
    over = np.flatnonzero(counts > fmt.nnz)
    if over.size:
        i = int(over[0])
        raise DensityViolation(int(counts[i]), fmt.nnz, divmod(i, grid[1]))
    weights = (1 << np.arange(fmt.bz)).astype(np.int64)
    masks = (nz * weights).sum(axis=1).astype(np.uint16)
    # stable sort puts non-zero positions first, in ascending index order
    order = np.argsort(~nz, axis=1, kind="stable")[:, : fmt.nnz]
    values = np.take_along_axis(blocks, order, axis=1)
    return DbbMatrix(arr.shape[0], arr.shape[1], fmt, axis, pad, masks, values, grid)


def decode_matrix(m: DbbMatrix) -> np.ndarray:
    fmt = m.fmt
    masks = m.masks.astype(np.int64)
    if masks.size and (masks >> fmt.bz).any():
        raise MalformedBlock("mask bits beyond block size")
    bits = (masks[:, None] >> np.arange(fmt.bz)) & 1
    counts = bits.sum(axis=1)
    if (counts > fmt.nnz).any():
        i = int(np.flatnonzero(counts > fmt.nnz)[0])
        raise MalformedBlock(f"block {i}: popcount {counts[i]} exceeds nnz {fmt.nnz}")
    slot = np.arange(fmt.nnz)
    real = slot[None, :] < counts[:, None]
    vals = m.values
    if ((vals == 0) & real).any():
        raise MalformedBlock("zero value in a non-padding slot")
    if ((vals != 0) & ~real).any():
        raise MalformedBlock("non-zero value in a padding slot")
    rank = np.clip(np.cumsum(bits, axis=1) - 1, 0, fmt.nnz - 1)
    blocks = np.where(bits == 1, np.take_along_axis(vals, rank, axis=1), 0).astype(np.int8)
    return _from_blocks(blocks, m.rows, m.cols, fmt.bz, m.axis)


def prune_to_dbb(dense, fmt: DbbFormat, axis: int = 0) -> np.ndarray:
    """Keep the ``nnz`` largest-magnitude elements of every block."""
    arr = _as_int8_matrix(dense)
    blocks, _, _ = _to_blocks(arr, fmt.bz, _check_axis(axis))
    mag = np.abs(blocks.astype(np.int16))
    # stable argsort on -|v| keeps the lowest index first among ties
    keep = np.argsort(-mag, axis=1, kind="stable")[:, : fmt.nnz]
    mask = np.zeros(blocks.shape, dtype=bool)
    np.put_along_axis(mask, keep, True, axis=1)
    pruned = np.where(mask, blocks, 0).astype(np.int8)
    return _from_blocks(pruned, arr.shape[0], arr.shape[1], fmt.bz, axis)


# ---------------------------------------------------------------- file format


def dumps(m: DbbMatrix) -> bytes:
    fmt = m.fmt
    header = _HEADER.pack(MAGIC, fmt.bz, fmt.nnz, m.axis, 0, m.rows, m.cols, m.pad_count)
    mask_bytes = m.masks.astype("<u2").view(np.uint8).reshape(-1, 2)[:, : fmt.mask_bytes]
    payload = np.concatenate([mask_bytes, m.values.view(np.uint8)], axis=1)
    return header + payload.tobytes()


def loads(data: bytes) -> DbbMatrix:
    if len(data) < _HEADER.size:
        raise ParseError("truncated header")
    magic, bz, nnz, axis, _reserved, rows, cols, pad = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}")
    try:
        fmt = DbbFormat(bz, nnz)
        _check_axis(axis)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    blocked, other = (rows, cols) if axis == 0 else (cols, rows)
    nblk = -(-blocked // bz)
    if nblk * bz - blocked != pad:
        raise ParseError(f"pad_count {pad} inconsistent with shape {rows}x{cols}")
    nblocks = nblk * other
    stride = fmt.mask_bytes + nnz
    body = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if body.size != nblocks * stride:
        raise ParseError(f"payload holds {body.size} bytes, expected {nblocks * stride}")
    body = body.reshape(nblocks, stride)
    masks = body[:, 0].astype(np.uint16)
    if fmt.mask_bytes == 2:
        masks |= body[:, 1].astype(np.uint16) << 8
    values = body[:, fmt.mask_bytes :].view(np.int8).copy()
    grid = (nblk, other) if axis == 0 else (other, nblk)
    m = DbbMatrix(rows, cols, fmt, axis, pad, masks, values, grid)
    decode_matrix(m)  # validates every block
    return m


def save(m: DbbMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(m))


def load(path) -> DbbMatrix:
    with open(path, "rb") as fh:
        return loads(fh.read())
