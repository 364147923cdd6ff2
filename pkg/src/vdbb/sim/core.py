"""Cycle-level GEMM simulation on SA / STA / STA-DBB / STA-VDBB arrays.

Output-stationary dataflow. Each pass computes one (A·M) x (C·N) output
tile; activation blocks enter the left edge and weight slots the top edge,
skewed by one cycle per TPE. Passes stream back to back (accumulators are
double buffered), so fill and drain are exposed once per call.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..codec import DbbMatrix
from ..errors import DensityViolation, DimensionMismatch, ModeMismatch
from ..tensor import _int32_exact
from . import backend
from .config import Mode, StaConfig
from .counters import EventCounters


@dataclass
class SimResult:
    output: np.ndarray
    cycles_total: int
    cycles_fill: int
    cycles_steady: int
    cycles_drain: int
    counters: EventCounters
    run_nnz: int | None = None
    trace: list | None = None

    def summary(self) -> dict:
        return {
            "cycles_total": self.cycles_total,
            "cycles_fill": self.cycles_fill,
            "cycles_steady": self.cycles_steady,
            "cycles_drain": self.cycles_drain,
            "run_nnz": self.run_nnz,
            "counters": self.counters.to_dict(),
        }

    def trace_csv(self) -> str:
        if self.trace is None:
            raise ValueError("simulation ran without tracing")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cycle", "tpe_row", "tpe_col", "event"])
        w.writerows(self.trace)
        return buf.getvalue()


@dataclass
class _Streams:
    act: np.ndarray
    wval: np.ndarray
    widx: np.ndarray
    wpad: np.ndarray
    per_cycle: int
    occ: int
    tm: int
    tn: int
    run_nnz: int | None


def _weight_slots(dense: np.ndarray, bz: int, slots: int) -> tuple[np.ndarray, ...]:
    """Compress each K-block of every column to ``slots`` (value, index, pad)."""
    kp, ncols = dense.shape
    kb = kp // bz
    blocks = dense.reshape(kb, bz, ncols)
    nz = blocks != 0
    counts = nz.sum(axis=1)
    if (counts > slots).any():
        k, col = np.argwhere(counts > slots)[0]
        raise DensityViolation(int(counts[k, col]), slots, (int(k), int(col)))
    order = np.argsort(~nz, axis=1, kind="stable")[:, :slots, :]
    vals = np.take_along_axis(blocks, order, axis=1)
    pad = np.arange(slots)[None, :, None] >= counts[:, None, :]
    idx = np.where(pad, 0, order)
    return vals, idx, pad


def _prepare(cfg: StaConfig, act, wt, run_nnz) -> tuple[_Streams, tuple[int, int]]:
    act = np.asarray(act)
    if act.ndim != 2:
        raise DimensionMismatch("activations must be a 2-D matrix")
    if act.dtype != np.int8:
        if act.size and (act.min() < -128 or act.max() > 127):
            raise ValueError("activations do not fit in int8")
        act = act.astype(np.int8)

    mode = cfg.mode
    if run_nnz is not None and mode is not Mode.STA_VDBB:
        raise ModeMismatch("run_nnz applies to STA_VDBB only")
    if isinstance(wt, DbbMatrix):
        if wt.axis != 0:
            raise DimensionMismatch("weights must be blocked along K (axis 0)")
        if mode.sparse and wt.fmt.bz != cfg.b:
            raise ModeMismatch(f"weight block size {wt.fmt.bz} != array B {cfg.b}")
        if mode is Mode.STA_VDBB and run_nnz is None:
            run_nnz = wt.fmt.nnz
        wdense = wt.to_dense()
    else:
        if mode.sparse:
            raise ModeMismatch(f"{mode} needs DBB-encoded weights")
        wdense = np.asarray(wt)
        if wdense.ndim != 2:
            raise DimensionMismatch("weights must be a 2-D matrix")
        if wdense.dtype != np.int8:
            if wdense.size and (wdense.min() < -128 or wdense.max() > 127):
                raise ValueError("weights do not fit in int8")
            wdense = wdense.astype(np.int8)
    if act.shape[1] != wdense.shape[0]:
        raise DimensionMismatch(f"inner dimensions differ: {act.shape} x {wdense.shape}")
    if min(act.shape + wdense.shape) == 0:
        raise DimensionMismatch("empty operand")
    if mode is Mode.STA_VDBB:
        if not 1 <= run_nnz <= cfg.b:
            raise ValueError(f"run_nnz must lie in [1, {cfg.b}], got {run_nnz}")

    m_rows, k_dim = act.shape
    n_cols = wdense.shape[1]
    tm = -(-m_rows // cfg.tile_rows)
    tn = -(-n_cols // cfg.tile_cols)
    kb = -(-k_dim // cfg.b)
    a_p = np.zeros((tm * cfg.tile_rows, kb * cfg.b), np.int8)
    a_p[:m_rows, :k_dim] = act
    w_p = np.zeros((kb * cfg.b, tn * cfg.tile_cols), np.int8)
    w_p[:k_dim, :n_cols] = wdense

    if mode is Mode.STA_DBB:
        slots, per_cycle = cfg.sdp_width, cfg.sdp_width
    elif mode is Mode.STA_VDBB:
        slots, per_cycle = run_nnz, 1
    else:
        slots, per_cycle = cfg.b, cfg.b

    if mode.sparse:
        vals, idx, pad = _weight_slots(w_p, cfg.b, slots)
    else:
        vals = w_p.reshape(kb, cfg.b, -1)
        idx = np.broadcast_to(np.arange(cfg.b)[None, :, None], vals.shape)
        # zero rows/columns added by tiling count as padding slots
        live = np.zeros(w_p.shape, bool)
        live[:k_dim, :n_cols] = True
        pad = ~live.reshape(vals.shape)
    streams = _Streams(
        act=np.ascontiguousarray(a_p),
        wval=np.ascontiguousarray(vals, dtype=np.int8),
        widx=np.ascontiguousarray(idx, dtype=np.uint8),
        wpad=np.ascontiguousarray(pad, dtype=np.uint8),
        per_cycle=per_cycle,
        occ=slots // per_cycle,
        tm=tm,
        tn=tn,
        run_nnz=run_nnz if mode is Mode.STA_VDBB else None,
    )
    return streams, (m_rows, n_cols)


def simulate_gemm(cfg: StaConfig, act, wt, run_nnz: int | None = None, *,
                  trace: bool = False, backend_name: str | None = None) -> SimResult:
    """Run ``act @ wt`` on the array; ``wt`` is a DbbMatrix or dense int8."""
    s, (m_rows, n_cols) = _prepare(cfg, act, wt, run_nnz)
    if trace:
        backend_name = "python"
    kernel = backend.get(backend_name)
    events = [] if trace else None
    out, raw = kernel(
        s.act, s.wval, s.widx, s.wpad, cfg.a, cfg.b, cfg.c, cfg.m, cfg.n,
        s.per_cycle, s.occ, s.tm, s.tn, bool(cfg.act_clock_gating),
        cfg.mode.sparse, events,
    )
    counters = EventCounters.from_raw(raw, s.occ)
    steady = s.tm * s.tn * s.wval.shape[0] * s.occ
    fill = cfg.fill_cycles
    if int(raw[0]) != steady + fill:
        raise AssertionError("kernel cycle count disagrees with the schedule")
    drain = cfg.drain_cycles
    return SimResult(
        output=_int32_exact(out[:m_rows, :n_cols]),
        cycles_total=fill + steady + drain,
        cycles_fill=fill,
        cycles_steady=steady,
        cycles_drain=drain,
        counters=counters,
        run_nnz=s.run_nnz,
        trace=events,
    )


def steady_state_throughput(cfg: StaConfig, run_nnz: int | None = None) -> Fraction:
    """Effective MACs per cycle once the pipeline is full."""
    if cfg.mode is Mode.STA_VDBB:
        n = cfg.occupancy(run_nnz)
        return Fraction(cfg.a * cfg.c * cfg.m * cfg.n * cfg.b, n)
    return Fraction(cfg.a * cfg.b * cfg.c * cfg.m * cfg.n)


def physical_throughput(cfg: StaConfig) -> int:
    return cfg.physical_macs


def utilization(res: SimResult, cfg: StaConfig) -> Fraction:
    """Occupied MAC lane-cycles over lane-cycles available in steady state."""
    if res.cycles_steady == 0:
        return Fraction(0)
    return Fraction(res.counters.mac_cycles, cfg.physical_macs * res.cycles_steady)
