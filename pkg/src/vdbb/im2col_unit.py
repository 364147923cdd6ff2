"""Cycle model of the hardware im2col bandwidth magnifier.

For a 3x3 stride-1 convolution the unit caches a 6-row by 4-column input
tile (two 6x2 buffers) and spends 9 cycles emitting it. Cycle ``c`` handles
kernel offset ``(ky, kx) = divmod(c, 3)`` and emits two 4-element vectors:
output rows 0..3 of the phase's two output columns. A phase therefore reads
24 bytes and delivers 72.

Emission order: phase, then channel, then cycle (ky, kx), then output
column, then output row. Every emitted element carries its im2col
coordinates, so the stream maps onto ``im2col_lower`` by a fixed permutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedGeometry
from .tensor import _check_geometry, output_size

STRIP_ROWS = 6
OUT_ROWS = 4
PHASE_CYCLES = 9


@dataclass
class Im2colStream:
    """Delivered elements in emission order, with their im2col coordinates."""

    pixel: np.ndarray  # output pixel index (oy * OW + ox) within the region
    column: np.ndarray  # (ky * 3 + kx) * C + channel
    value: np.ndarray

    def to_matrix(self, rows: int, cols: int) -> np.ndarray:
        out = np.zeros((rows, cols), dtype=self.value.dtype)
        out[self.pixel, self.column] = self.value
        return out


@dataclass
class Im2colResult:
    sram_read_bytes: int
    delivered_bytes: int
    cycles: int
    phases: int = 0
    output_stream: Im2colStream | None = None
    bypassed: bool = False
    software_fallback: bool = False

    def __add__(self, other: "Im2colResult") -> "Im2colResult":
        return Im2colResult(
            self.sram_read_bytes + other.sram_read_bytes,
            self.delivered_bytes + other.delivered_bytes,
            self.cycles + other.cycles,
            self.phases + other.phases,
            None,
            self.bypassed and other.bypassed,
            self.software_fallback or other.software_fallback,
        )


def magnification(result: Im2colResult) -> float:
    if result.sram_read_bytes == 0:
        raise ZeroDivisionError("no SRAM reads recorded")
    return result.delivered_bytes / result.sram_read_bytes


@dataclass
class Im2colUnitState:
    """Two 6x2 register buffers plus the 9-cycle phase counter."""

    buffer: np.ndarray = field(default_factory=lambda: np.zeros((STRIP_ROWS, 4), np.int8))
    valid: np.ndarray = field(default_factory=lambda: np.zeros((STRIP_ROWS, 4), bool))
    phase_cycle: int = 0
    refills: int = 0
    read_bytes: int = 0
    delivered_bytes: int = 0

    def refill(self, tile: np.ndarray, real: np.ndarray) -> None:
        """Load one tile; only ``real`` (non-padding) positions cost a read."""
        if self.phase_cycle != 0:
            raise RuntimeError("refill in the middle of a phase")
        rows, cols = tile.shape
        self.buffer[:] = 0
        self.valid[:] = False
        self.buffer[:rows, :cols] = tile
        self.valid[:rows, :cols] = True
        self.refills += 1
        self.read_bytes += int(real.sum())

    def step(self, out_cols: int, out_rows: int) -> np.ndarray:
        """One cycle: returns an (out_cols, out_rows) block for offset (ky, kx)."""
        ky, kx = divmod(self.phase_cycle, 3)
        block = self.buffer[ky : ky + out_rows, kx : kx + out_cols].T.copy()
        self.delivered_bytes += block.size
        self.phase_cycle = (self.phase_cycle + 1) % PHASE_CYCLES
        return block


def _stream_region(padded: np.ndarray, real: np.ndarray, keep_stream: bool) -> Im2colResult:
    """Stream one strip of at most 6 rows (already padded) through the unit."""
    rows, width, channels = padded.shape
    out_rows = rows - 2
    ow = width - 2
    state = Im2colUnitState()
    cycles = phases = 0
    pix, col, val = [], [], []
    for ox0 in range(0, ow, 2):
        ncol = min(2, ow - ox0)
        for ch in range(channels):
            state.refill(padded[:, ox0 : ox0 + ncol + 2, ch], real[:, ox0 : ox0 + ncol + 2])
            phases += 1
            for cyc in range(PHASE_CYCLES):
                block = state.step(ncol, out_rows)
                cycles += 1
                if keep_stream:
                    ky, kx = divmod(cyc, 3)
                    oxs, oys = np.meshgrid(np.arange(ncol), np.arange(out_rows), indexing="ij")
                    pix.append((oys * ow + ox0 + oxs).ravel())
                    col.append(np.full(block.size, (ky * 3 + kx) * channels + ch))
                    val.append(block.ravel())
    stream = None
    if keep_stream:
        stream = Im2colStream(
            np.concatenate(pix) if pix else np.zeros(0, int),
            np.concatenate(col) if col else np.zeros(0, int),
            np.concatenate(val) if val else np.zeros(0, padded.dtype),
        )
    return Im2colResult(state.read_bytes, state.delivered_bytes, cycles, phases, stream)


def _as_strip(fm_strip) -> np.ndarray:
    arr = np.asarray(fm_strip)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise UnsupportedGeometry(f"strip must be (rows, W) or (rows, W, C), got {arr.shape}")
    return arr


def stream_tile(fm_strip, k: int = 3, s: int = 1) -> Im2colResult:
    """Stream a 6-row strip (no padding) and return counters and the stream."""
    if k != 3 or s != 1:
        raise UnsupportedGeometry(f"hardware unit handles 3x3 stride 1 only (k={k}, s={s})")
    strip = _as_strip(fm_strip)
    if strip.shape[0] != STRIP_ROWS:
        raise UnsupportedGeometry(f"strip must have {STRIP_ROWS} rows, got {strip.shape[0]}")
    if strip.shape[1] < 3:
        raise UnsupportedGeometry("strip narrower than the kernel")
    real = np.ones(strip.shape[:2], bool)
    return _stream_region(strip, real, keep_stream=True)


def stream_feature_map(fm, k: int = 3, s: int = 1, p: int = 0, keep_stream: bool = False) -> Im2colResult:
    """Account a whole (H, W, C) map; padding is synthesized, never read.

    Pointwise kernels bypass the unit. Geometries the unit cannot stream go
    through software lowering, which reads every lowered element.
    """
    fm = np.asarray(fm)
    oh, ow = _check_geometry(fm, k, s, p)
    c = fm.shape[2]
    if k == 1:
        n = oh * ow * c
        return Im2colResult(n, n, 0, bypassed=True)
    if k != 3 or s != 1:
        n = oh * ow * k * k * c
        return Im2colResult(n, n, 0, software_fallback=True)
    padded = np.pad(fm, ((p, p), (p, p), (0, 0)))
    real = np.pad(np.ones(fm.shape[:2], bool), ((p, p), (p, p)))
    total = Im2colResult(0, 0, 0)
    pix, col, val = [], [], []
    for oy0 in range(0, oh, OUT_ROWS):
        nrows = min(OUT_ROWS, oh - oy0) + 2
        part = _stream_region(padded[oy0 : oy0 + nrows], real[oy0 : oy0 + nrows], keep_stream)
        total = total + part
        if keep_stream:
            s_ = part.output_stream
            oy_local, ox = np.divmod(s_.pixel, ow)
            pix.append((oy0 + oy_local) * ow + ox)
            col.append(s_.column)
            val.append(s_.value)
    if keep_stream:
        total.output_stream = Im2colStream(np.concatenate(pix), np.concatenate(col), np.concatenate(val))
    return total


def expected_magnification(h: int, w: int, k: int, s: int, p: int) -> float:
    """Magnification of a single-channel map, from counters (no data needed)."""
    if k == 1:
        return 1.0
    if k != 3 or s != 1:
        return 1.0
    oh, ow = output_size(h, k, s, p), output_size(w, k, s, p)
    res = stream_feature_map(np.zeros((h, w, 1), np.int8), k, s, p)
    assert res.delivered_bytes == oh * ow * 9
    return magnification(res)
