"""Design-space enumeration at iso-throughput, pareto extraction and
per-layer workload evaluation."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable, Sequence

import numpy as np

from .codec import DbbFormat, encode_matrix, prune_to_dbb
from .cost import CostCoefficients, CostReport, estimate_cost, nominal_macs
from .errors import EmptySpace, ParseError, ValidationError, VdbbError
from .sim import Mode, StaConfig, parse_config, simulate_gemm
from .workload import LayerShape, WorkloadSpec, layer_to_gemm

MODES = tuple(m.value for m in Mode)


@dataclass(frozen=True)
class SweepSpec:
    ranges: dict
    target_tops: float = 4.0
    clock_ghz: float = 1.0
    modes: tuple = MODES
    im2col: tuple = (False, True)
    dbb_bz: int = 8
    dbb_nnz: int = 4
    vdbb_bz: int = 8
    weight_nnz: int = 3
    weight_bz: int = 8
    act_sparsity: float = 0.5
    configs: tuple | None = None

    @property
    def target_macs(self) -> float:
        """Dense MACs per cycle needed for the target (decimal tera)."""
        return self.target_tops * 1000.0 / (2 * self.clock_ghz)

    @property
    def sized_macs(self) -> int:
        """Smallest power of two meeting the target."""
        return 1 << max(0, int(np.ceil(np.log2(self.target_macs))))


def sweep_from_dict(doc: dict) -> SweepSpec:
    if not isinstance(doc, dict):
        raise ParseError("sweep spec must be an object")
    ranges = doc.get("ranges", {})
    for key in "abcmn":
        vals = ranges.get(key, [1])
        if not isinstance(vals, list) or not all(isinstance(v, int) and v > 0 for v in vals):
            raise ParseError("expected a list of positive integers", field=f"ranges.{key}")
        if any(v & (v - 1) for v in vals):
            raise ValidationError(f"ranges.{key}: sizes must be powers of two")
    dbb = doc.get("dbb", {})
    wl = doc.get("workload", {})
    configs = doc.get("configs")
    return SweepSpec(
        ranges={k: list(ranges.get(k, [1])) for k in "abcmn"},
        target_tops=float(doc.get("target_tops", 4.0)),
        clock_ghz=float(doc.get("clock_ghz", 1.0)),
        modes=tuple(doc.get("modes", MODES)),
        im2col=tuple(doc.get("im2col", (False, True))),
        dbb_bz=int(dbb.get("bz", 8)),
        dbb_nnz=int(dbb.get("nnz", 4)),
        vdbb_bz=int(doc.get("vdbb_bz", 8)),
        weight_nnz=int(wl.get("weight_nnz", 3)),
        weight_bz=int(wl.get("weight_bz", 8)),
        act_sparsity=float(wl.get("act_sparsity", 0.5)),
        configs=tuple(configs) if configs is not None else None,
    )


def load_sweep(path=None) -> SweepSpec:
    if path is None:
        text = resources.files("vdbb.data").joinpath("sweep_4tops.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return sweep_from_dict(doc)


@dataclass
class DesignPoint:
    cfg: StaConfig
    metrics: CostReport | None = None
    rounded: bool = False

    @property
    def features(self) -> dict:
        return {
            "im2col": self.cfg.im2col,
            "dbb_fixed": self.cfg.mode is Mode.STA_DBB,
            "vdbb": self.cfg.mode is Mode.STA_VDBB,
        }

    @property
    def id(self) -> str:
        fmt = self.cfg.dbb_fmt
        key = f"{self.cfg.name}|{self.cfg.mode}|{fmt}|{sorted(self.features.items())}"
        return hashlib.sha1(key.encode()).hexdigest()[:12]

    @property
    def group(self) -> str:
        mode = {Mode.SA: "SA", Mode.STA: "STA", Mode.STA_DBB: "DBB", Mode.STA_VDBB: "VDBB"}[self.cfg.mode]
        return mode + ("+IM2C" if self.cfg.im2col else "")


@dataclass
class Enumeration:
    points: list[DesignPoint]
    excluded: list[tuple[str, str]] = field(default_factory=list)


def _make_config(a, b, c, m, n, mode: str, im2col: bool, spec: SweepSpec) -> StaConfig:
    mode = Mode(mode)
    if mode is Mode.STA_DBB:
        fmt = DbbFormat(spec.dbb_bz, spec.dbb_nnz)
    elif mode is Mode.STA_VDBB:
        fmt = DbbFormat(spec.vdbb_bz, min(spec.weight_nnz, spec.vdbb_bz))
    else:
        fmt = None
    return StaConfig(a, b, c, m, n, mode, fmt, clock_ghz=spec.clock_ghz, im2col=im2col)


def _candidate_macs(a, b, c, m, n, mode: str, spec: SweepSpec, coeffs: CostCoefficients) -> int:
    if mode == "STA_DBB":
        return a * spec.dbb_nnz * c * m * n
    if mode == "STA_VDBB":
        return coeffs.vdbb_lane_factor * a * c * m * n
    return a * b * c * m * n


def enumerate_designs(spec: SweepSpec, coeffs: CostCoefficients) -> Enumeration:
    """All valid iso-throughput designs of ``spec``, evaluated with ``coeffs``."""
    target = spec.sized_macs
    rounded = target != spec.target_macs
    points, excluded = [], []

    def admit(cfg: StaConfig):
        metrics = estimate_cost(cfg, coeffs, spec.weight_nnz, spec.act_sparsity, weight_bz=spec.weight_bz)
        points.append(DesignPoint(cfg, metrics, rounded))

    if spec.configs is not None:
        for text in spec.configs:
            try:
                cfg = parse_config(text, nnz=spec.dbb_nnz if "_DBB" in text.upper() else None,
                                   clock_ghz=spec.clock_ghz)
                if cfg.mode is Mode.STA_VDBB:
                    cfg = cfg.with_(dbb_fmt=DbbFormat(cfg.b, min(spec.weight_nnz, cfg.b)))
                if nominal_macs(cfg, coeffs) != target:
                    excluded.append((text, f"nominal {nominal_macs(cfg, coeffs)} MACs != {target}"))
                    continue
                admit(cfg)
            except (VdbbError, ValueError) as exc:
                excluded.append((text, f"{type(exc).__name__}: {exc}"))
    else:
        r = spec.ranges
        for a, b, c, m, n in itertools.product(r["a"], r["b"], r["c"], r["m"], r["n"]):
            for mode in spec.modes:
                if _candidate_macs(a, b, c, m, n, mode, spec, coeffs) != target:
                    continue
                for im2col in spec.im2col:
                    label = f"{a}x{b}x{c}_{m}x{n}:{mode}{'+IM2C' if im2col else ''}"
                    try:
                        cfg = _make_config(a, b, c, m, n, mode, im2col, spec)
                        if mode == "STA" and (a, b, c) == (1, 1, 1):
                            raise ValidationError("1x1x1 STA duplicates SA")
                        admit(cfg)
                    except (VdbbError, ValueError) as exc:
                        excluded.append((label, f"{type(exc).__name__}: {exc}"))
    if not points:
        raise EmptySpace("no valid design meets the throughput target")
    points.sort(key=lambda p: p.id)
    return Enumeration(points, excluded)


# ----------------------------------------------------------------- pareto

OBJECTIVES: dict[str, Callable[[DesignPoint], float]] = {
    "power": lambda p: p.metrics.power_per_tops,
    "area": lambda p: p.metrics.area_per_tops,
    "power_total": lambda p: p.metrics.total_power_mw,
    "area_total": lambda p: p.metrics.total_area_mm2,
}


def _dominates(u: Sequence[float], v: Sequence[float]) -> bool:
    return all(x <= y for x, y in zip(u, v)) and any(x < y for x, y in zip(u, v))


def pareto(points: Iterable, objectives: Sequence[str] = ("power", "area"), key=None) -> list:
    """Non-dominated points under minimization; exact ties are all kept.

    Items are DesignPoints scored by ``objectives`` unless ``key`` maps an
    item to its objective vector (plain tuples score as themselves).
    """
    items = list(points)
    if key is None:
        def key(p):
            if isinstance(p, DesignPoint):
                return tuple(OBJECTIVES[o](p) for o in objectives)
            return tuple(p)
    scored = [(key(p), p) for p in items]
    # sort by objectives so a dominator always precedes what it dominates
    order = sorted(range(len(scored)), key=lambda i: scored[i][0])
    front_idx = []
    for i in order:
        v = scored[i][0]
        if not any(_dominates(scored[j][0], v) for j in front_idx):
            front_idx.append(i)
    front_idx.sort()
    front = [scored[i][1] for i in front_idx]
    if front and isinstance(front[0], DesignPoint):
        front.sort(key=lambda p: p.id)
    return front


# ------------------------------------------------------------ layer sweep


@dataclass
class LayerResult:
    layer: str
    gemm: tuple[int, int, int, int]
    run_nnz: int
    cycles: int
    report: CostReport
    simulated: bool = False
    clock_ghz: float = 1.0

    @property
    def energy_uj(self) -> float:
        # mW x ns = pJ
        return self.report.total_power_mw * self.cycles / self.clock_ghz * 1e-6


@dataclass
class WorkloadResult:
    design: str
    layers: list[LayerResult]

    @property
    def cycles(self) -> int:
        return sum(l.cycles for l in self.layers)

    @property
    def power_mw(self) -> float:
        """Cycle-weighted average power."""
        return sum(l.report.total_power_mw * l.cycles for l in self.layers) / self.cycles

    @property
    def energy_uj(self) -> float:
        return sum(l.energy_uj for l in self.layers)


def _layer_density(cfg: StaConfig, layer: LayerShape) -> tuple[int, int]:
    """(nnz, bz) of the layer's weights as seen by the array."""
    if layer.dense:
        bz = cfg.b if cfg.mode.sparse else layer.bz
        return bz, bz
    if cfg.mode.sparse and layer.bz != cfg.b:
        # a block-bz model also satisfies any multiple of bz
        if cfg.b % layer.bz:
            raise ValidationError(f"{layer.name}: block size {layer.bz} does not divide B={cfg.b}")
        f = cfg.b // layer.bz
        return min(layer.nnz * f, cfg.b), cfg.b
    return layer.nnz, layer.bz


def _random_operands(rng, m, k, n, nnz, bz, act_sparsity):
    act = rng.integers(-128, 128, size=(m, k), dtype=np.int16)
    act[act == 0] = 1
    act[rng.random((m, k)) < act_sparsity] = 0
    wt = rng.integers(-128, 128, size=(k, n), dtype=np.int16)
    wt[wt == 0] = 1
    wt = prune_to_dbb(wt.astype(np.int8), DbbFormat(bz, nnz))
    return act.astype(np.int8), wt


def layer_sweep(
    point: DesignPoint | StaConfig,
    workload: WorkloadSpec,
    coeffs: CostCoefficients,
    simulate: bool = False,
    seed: int = 0,
) -> WorkloadResult:
    """Per-layer costs of a workload on one design; cycles analytic or simulated."""
    cfg = point.cfg if isinstance(point, DesignPoint) else point
    rng = np.random.default_rng(seed)
    results = []
    for layer in workload.layers:
        g = layer_to_gemm(layer)
        nnz, bz = _layer_density(cfg, layer)
        run_nnz = nnz if cfg.mode.sparse else None
        if simulate:
            if cfg.mode is Mode.STA_DBB and nnz > cfg.sdp_width:
                raise ValidationError(f"{layer.name}: fixed-DBB array cannot simulate {nnz}/{bz} weights")
            act, wt = _random_operands(rng, g.m, g.k, g.n, nnz, bz, layer.act_sparsity)
            if cfg.mode.sparse:
                res = simulate_gemm(cfg, act, encode_matrix(wt, DbbFormat(bz, nnz)),
                                    run_nnz if cfg.mode is Mode.STA_VDBB else None)
            else:
                res = simulate_gemm(cfg, act, wt)
            cycles = res.cycles_total * g.groups
            z = float(np.mean(act == 0))
        else:
            cycles = cfg.gemm_cycles(g.m, g.k, g.n, run_nnz)["total"] * g.groups
            z = layer.act_sparsity
        use_unit = cfg.im2col and g.magnification > 1.0
        report = estimate_cost(
            cfg, coeffs, nnz, z, use_unit, weight_bz=bz,
            magnification=g.magnification if use_unit else None,
        )
        results.append(LayerResult(layer.name, (g.m, g.k, g.n, g.groups), nnz, cycles, report,
                                   simulate, cfg.clock_ghz))
    return WorkloadResult(cfg.name, results)


def power_reduction(design, baseline, workload: WorkloadSpec, coeffs: CostCoefficients) -> float:
    """Whole-model power saving of ``design`` relative to ``baseline``."""
    opt = layer_sweep(design, workload, coeffs)
    base = layer_sweep(baseline, workload, coeffs)
    return 1.0 - opt.power_mw / base.power_mw


def sparsity_scan(cfg: StaConfig, coeffs: CostCoefficients, act_sparsity: float = 0.5,
                  nnz_values: Sequence[int] | None = None) -> list[CostReport]:
    bz = cfg.b if cfg.mode.sparse else 8
    nnz_values = nnz_values or range(1, bz + 1)
    return [estimate_cost(cfg, coeffs, n, act_sparsity, weight_bz=bz) for n in nnz_values]


# ---------------------------------------------------------------- output

POINT_COLUMNS = [
    "id", "config", "mode", "im2col", "dbb_fixed", "vdbb", "rounded",
    "power_mw", "area_mm2", "nominal_tops", "effective_tops",
    "tops_per_w", "tops_per_mm2", "pareto",
]
LAYER_COLUMNS = ["design", "layer", "m", "k", "n", "groups", "run_nnz", "act_sparsity",
                 "cycles", "power_mw", "energy_uj", "simulated"]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def points_csv(points: Sequence[DesignPoint], frontier_ids: set[str] = frozenset()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POINT_COLUMNS)
    for p in points:
        r = p.metrics
        f = p.features
        w.writerow([
            p.id, p.cfg.name, p.cfg.mode.value, int(f["im2col"]), int(f["dbb_fixed"]), int(f["vdbb"]),
            int(p.rounded), _fmt(r.total_power_mw), _fmt(r.total_area_mm2), _fmt(r.nominal_tops),
            _fmt(r.effective_tops), _fmt(r.tops_per_w), _fmt(r.tops_per_mm2), int(p.id in frontier_ids),
        ])
    return buf.getvalue()


def layers_csv(results: Sequence[WorkloadResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LAYER_COLUMNS)
    for res in results:
        for l in res.layers:
            w.writerow([
                res.design, l.layer, *l.gemm, l.run_nnz, _fmt(l.report.act_sparsity), l.cycles,
                _fmt(l.report.total_power_mw), _fmt(l.energy_uj), int(l.simulated),
            ])
        w.writerow([res.design, "TOTAL", "", "", "", "", "", "", res.cycles,
                    _fmt(res.power_mw), _fmt(res.energy_uj), ""])
    return buf.getvalue()


def points_json(points: Sequence[DesignPoint], frontier_ids: set[str] = frozenset()) -> str:
    rows = []
    for p in points:
        rows.append({
            "id": p.id,
            "config": p.cfg.name,
            "features": p.features,
            "rounded": p.rounded,
            "pareto": p.id in frontier_ids,
            "metrics": p.metrics.to_dict(),
        })
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"
