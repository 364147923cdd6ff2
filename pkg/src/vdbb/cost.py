"""Analytic reuse metrics and a calibrated power/area model.

The reference design's component table is taken as input and reproduced
exactly. Other designs are scaled from it by unit counts: operand bytes
latched per cycle, MAC lanes, accumulators and activation muxes for the
array, and per-cycle SRAM traffic for the buffers.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from importlib import resources
from typing import Sequence

from .errors import InsufficientAnchors, NegativeCoefficient, UncalibratedModel
from .sim.config import Mode, StaConfig, parse_config

# ------------------------------------------------------------------ reuse


@dataclass(frozen=True)
class ReuseMetrics:
    macs_per_tpe: int
    accs_per_tpe: int
    oprs_per_tpe: int
    inter_tpe_reuse: Fraction
    intra_tpe_reuse: Fraction
    acc_reuse: int


def reuse_metrics(cfg: StaConfig, run_nnz: int | None = None) -> ReuseMetrics:
    a, b, c, m, n = cfg.a, cfg.b, cfg.c, cfg.m, cfg.n
    mode = cfg.mode
    if mode is Mode.SA:
        return ReuseMetrics(1, 1, 2, Fraction(m * n, m + n), Fraction(1, 2), 1)
    if mode is Mode.STA:
        return ReuseMetrics(
            a * b * c, a * c, b * (a + c),
            Fraction(a * m * c * n, a * m + c * n), Fraction(a * c, a + c), b,
        )
    if mode is Mode.STA_DBB:
        s = cfg.sdp_width
        return ReuseMetrics(
            a * s * c, a * c, a * b + s * c,
            Fraction(a * s * c * m * n, a * b * m + c * s * n),
            Fraction(a * s * c, a * b + s * c), s,
        )
    k = cfg.occupancy(run_nnz)
    return ReuseMetrics(
        a * c, a * c, a * b + k * c,
        Fraction(a * k * c * m * n, a * b * m + c * k * n),
        Fraction(a * k * c, a * b + k * c), 1,
    )


# ------------------------------------------------------------ coefficients

COMPONENTS = ("array", "wt_sram", "act_sram", "mcu", "im2col")


@dataclass(frozen=True)
class CostCoefficients:
    # reference component table (mW, mm^2)
    p_array_base: float
    p_act_path_slope: float
    p_wt_sram: float
    p_act_sram: float
    p_act_sram_no_im2col: float
    p_mcu: float
    p_im2col: float
    area_array: float
    area_wt_sram: float
    area_act_sram: float
    area_mcu: float
    area_im2col: float
    # reference operating point
    ref_config: str = "4x8x8_4x8_VDBB_IM2C"
    ref_weight_nnz: int = 3
    ref_act_sparsity: float = 0.5
    # throughput accounting
    vdbb_lane_factor: int = 2
    giga_per_tera: int = 1024
    # relative switching energy per unit-cycle (accumulator = 1)
    e_mac: float = 0.1
    e_acc: float = 1.0
    e_mux: float = 0.03
    idle_activity: float = 0.35
    gating_residue: float = 0.1
    # relative area per unit, in full-adder equivalents
    a_mac: float = 130.0
    a_acc: float = 163.0
    a_opr_byte: float = 32.0
    a_mux: float = 25.0
    # SRAM periphery area per byte/cycle of port bandwidth (mm^2)
    sram_port_area: float = 0.002
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and not isinstance(v, bool) and v < 0:
                raise NegativeCoefficient(f"{f.name} = {v}")
        if self.p_act_sram_no_im2col <= 0 or self.p_act_sram <= 0:
            raise UncalibratedModel("activation SRAM power must be positive")

    @property
    def reference(self) -> StaConfig:
        return parse_config(self.ref_config, nnz=self.ref_weight_nnz)

    @property
    def ref_magnification(self) -> float:
        return self.p_act_sram_no_im2col / self.p_act_sram

    @property
    def opr_energy(self) -> float:
        """mW per byte/cycle of latched operands, fixed by the NNZ slope."""
        ref = self.reference
        # act + mask bytes per cycle grow as BZ/NNZ: MN*(A + C/8) per unit
        per_unit = ref.m * ref.n * (ref.a + (ref.c / 8))
        return self.p_act_path_slope / per_unit

    def with_(self, **kw) -> "CostCoefficients":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CostCoefficients":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown coefficient fields: {sorted(extra)}")
        return cls(**d)


def save_coefficients(coeffs: CostCoefficients, path) -> None:
    with open(path, "w") as fh:
        json.dump(coeffs.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_coefficients(path=None) -> CostCoefficients:
    """Load a JSON coefficient file; default is $VDBB_COEFFS, then the bundled set."""
    path = path or os.environ.get("VDBB_COEFFS")
    if path is None:
        text = resources.files("vdbb.data").joinpath("reference_coeffs.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return CostCoefficients.from_dict(json.loads(text))


def reference_coefficients() -> CostCoefficients:
    """The bundled calibration, ignoring $VDBB_COEFFS."""
    text = resources.files("vdbb.data").joinpath("reference_coeffs.json").read_text()
    return CostCoefficients.from_dict(json.loads(text))


# --------------------------------------------------------------- the model


@dataclass
class CostReport:
    config: str
    weight_nnz: int
    weight_bz: int
    act_sparsity: float
    im2col: bool
    power_mw: dict
    area_mm2: dict
    nominal_tops: float
    effective_tops: float

    @property
    def total_power_mw(self) -> float:
        return sum(self.power_mw.values())

    @property
    def total_area_mm2(self) -> float:
        return sum(self.area_mm2.values())

    @property
    def tops_per_w(self) -> float:
        return self.effective_tops / (self.total_power_mw / 1000.0)

    @property
    def tops_per_mm2(self) -> float:
        return self.effective_tops / self.total_area_mm2

    @property
    def power_per_tops(self) -> float:
        return self.total_power_mw / self.effective_tops

    @property
    def area_per_tops(self) -> float:
        return self.total_area_mm2 / self.effective_tops

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(
            total_power_mw=self.total_power_mw,
            total_area_mm2=self.total_area_mm2,
            tops_per_w=self.tops_per_w,
            tops_per_mm2=self.tops_per_mm2,
        )
        return d


@dataclass(frozen=True)
class _Units:
    opr_bytes: float  # operand bytes latched by all TPEs per cycle
    mac: float  # activity-weighted MAC lane units
    acc: float
    mux: float
    reg_bytes: float  # operand register bytes (area)
    lanes: int
    accs: int
    mux_lanes: float


def _occupancy(cfg: StaConfig, nnz: int) -> int:
    return cfg.occupancy(nnz) if cfg.mode.sparse else 1


def _check_density(cfg: StaConfig, nnz: int, bz: int) -> None:
    if not 1 <= nnz <= bz:
        raise ValueError(f"weight nnz {nnz} outside [1, {bz}]")
    if cfg.mode.sparse and bz != cfg.b:
        raise ValueError(f"model block size {bz} != array B {cfg.b}")


def _array_units(cfg: StaConfig, nnz: int, bz: int, z: float, k: CostCoefficients) -> _Units:
    a, b, c, mn = cfg.a, cfg.b, cfg.c, cfg.m * cfg.n
    mode = cfg.mode
    occ = _occupancy(cfg, nnz)
    per_cycle = cfg.slots
    sparse = mode.sparse
    mask = c * b / 8 if sparse else 0.0
    opr = mn * (a * b / occ + per_cycle * c + mask / occ)
    regs = mn * (a * b + per_cycle * c + mask)

    pw = nnz / bz
    idle, res = k.idle_activity, k.gating_residue
    gated = cfg.act_clock_gating
    if mode is Mode.STA_VDBB:
        p_lane = 1 - z  # every slot holds a real weight
        width = 1
    elif mode is Mode.STA_DBB:
        p_lane = (nnz / (cfg.sdp_width * occ)) * (1 - z)
        width = cfg.sdp_width
    else:
        p_lane = pw * (1 - z)
        width = b
    if gated:
        lane_act = p_lane + z * res + (1 - z - p_lane) * idle
        q = p_lane
        acc_act = q + z * res + (1 - z - q) * idle
    else:
        lane_act = p_lane + (1 - p_lane) * idle
        q = 1 - (1 - p_lane) ** width
        acc_act = q + (1 - q) * idle
    lanes = cfg.physical_macs
    accs = cfg.accumulators
    mux_lanes = lanes * (b - 1) / 7 if sparse else 0.0
    return _Units(
        opr_bytes=opr,
        mac=lanes * lane_act,
        acc=accs * acc_act,
        mux=mux_lanes * lane_act,
        reg_bytes=regs,
        lanes=lanes,
        accs=accs,
        mux_lanes=mux_lanes,
    )


def _compute_energy(u: _Units, k: CostCoefficients) -> float:
    return k.e_mac * u.mac + k.e_acc * u.acc + k.e_mux * u.mux


def _area_units(u: _Units, k: CostCoefficients) -> float:
    return k.a_mac * u.lanes + k.a_acc * u.accs + k.a_opr_byte * u.reg_bytes + k.a_mux * u.mux_lanes


def sram_rates(cfg: StaConfig, nnz: int, bz: int) -> tuple[float, float]:
    """(activation, weight) bytes per cycle crossing the array edges."""
    occ = _occupancy(cfg, nnz)
    act = cfg.m * cfg.a * cfg.b / occ
    wt = cfg.n * cfg.c * cfg.slots
    if cfg.mode.sparse:
        wt += cfg.n * cfg.c * cfg.b / 8 / occ
    return act, wt


@dataclass(frozen=True)
class _Scales:
    compute: float  # mW per relative energy unit
    area: float  # mm^2 per full-adder equivalent
    e_act_sram: float  # mW per byte/cycle
    e_wt_sram: float
    act_cap_area: float
    wt_cap_area: float


def _scales(k: CostCoefficients) -> _Scales:
    ref = k.reference
    bz = ref.b
    u = _array_units(ref, k.ref_weight_nnz, bz, k.ref_act_sparsity, k)
    compute_mw = k.p_array_base - k.opr_energy * u.opr_bytes
    if compute_mw <= 0:
        raise NegativeCoefficient("operand path exceeds the reference array power")
    act, wt = sram_rates(ref, k.ref_weight_nnz, bz)
    act_port = act / k.ref_magnification if ref.im2col else act
    act_cap = k.area_act_sram - k.sram_port_area * act_port
    wt_cap = k.area_wt_sram - k.sram_port_area * wt
    if act_cap < 0 or wt_cap < 0:
        raise NegativeCoefficient("SRAM port area exceeds the reference SRAM area")
    return _Scales(
        compute=compute_mw / _compute_energy(u, k),
        area=k.area_array / _area_units(u, k),
        e_act_sram=k.p_act_sram_no_im2col / act,
        e_wt_sram=k.p_wt_sram / wt,
        act_cap_area=act_cap,
        wt_cap_area=wt_cap,
    )


def nominal_macs(cfg: StaConfig, coeffs: CostCoefficients) -> int:
    """Dense-equivalent MACs per cycle used for the nominal TOPS label."""
    if cfg.mode is Mode.STA_VDBB:
        return coeffs.vdbb_lane_factor * cfg.a * cfg.c * cfg.m * cfg.n
    return cfg.physical_macs


def throughput(cfg: StaConfig, coeffs: CostCoefficients, weight_nnz: int, weight_bz: int) -> tuple[float, float]:
    """(nominal, effective) TOPS."""
    nominal = 2 * nominal_macs(cfg, coeffs) * cfg.clock_ghz / coeffs.giga_per_tera
    if cfg.mode is Mode.STA_VDBB:
        speedup = weight_bz / weight_nnz
    elif cfg.mode is Mode.STA_DBB:
        speedup = cfg.b / (cfg.sdp_width * _occupancy(cfg, weight_nnz))
    else:
        speedup = 1.0
    return nominal, nominal * speedup


def estimate_cost(
    cfg: StaConfig,
    coeffs: CostCoefficients | None = None,
    weight_nnz: int | None = None,
    act_sparsity: float | None = None,
    im2col_enabled: bool | None = None,
    *,
    weight_bz: int | None = None,
    magnification: float | None = None,
) -> CostReport:
    """Power, area and throughput of ``cfg`` on a workload with the given statistics.

    ``magnification`` overrides the activation-SRAM reduction of the im2col
    unit (defaults to the reference value when enabled).
    """
    if coeffs is None:
        raise UncalibratedModel("no cost coefficients supplied")
    k = coeffs
    bz = weight_bz or (cfg.b if cfg.mode.sparse else k.reference.b)
    nnz = k.ref_weight_nnz if weight_nnz is None else weight_nnz
    z = k.ref_act_sparsity if act_sparsity is None else act_sparsity
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"activation sparsity {z} outside [0, 1]")
    im2col = cfg.im2col if im2col_enabled is None else im2col_enabled
    _check_density(cfg, nnz, bz)
    s = _scales(k)

    u = _array_units(cfg, nnz, bz, z, k)
    p_array = k.opr_energy * u.opr_bytes + s.compute * _compute_energy(u, k)
    # SRAM traffic is a per-design constant taken at the reference density
    ref_nnz = min(round(k.ref_weight_nnz * bz / k.reference.b), bz) or 1
    act_rate, wt_rate = sram_rates(cfg, ref_nnz, bz)
    mag = 1.0
    if im2col:
        mag = k.ref_magnification if magnification is None else magnification
    power = {
        "array": p_array,
        "wt_sram": s.e_wt_sram * wt_rate,
        "act_sram": s.e_act_sram * act_rate / mag,
        "mcu": k.p_mcu,
        "im2col": k.p_im2col if im2col else 0.0,
    }
    act_port = act_rate / k.ref_magnification if im2col else act_rate
    area = {
        "array": s.area * _area_units(u, k),
        "wt_sram": s.wt_cap_area + k.sram_port_area * wt_rate,
        "act_sram": s.act_cap_area + k.sram_port_area * act_port,
        "mcu": k.area_mcu,
        "im2col": k.area_im2col if im2col else 0.0,
    }
    nominal, effective = throughput(cfg, k, nnz, bz)
    return CostReport(cfg.name, nnz, bz, z, im2col, power, area, nominal, effective)


# ------------------------------------------------------------- calibration


@dataclass(frozen=True)
class Anchor:
    """A measured efficiency point of the reference design at one density."""

    weight_nnz: int
    weight_bz: int
    tops_per_w: float | None = None
    power_mw: float | None = None


@dataclass
class Calibration:
    coeffs: CostCoefficients
    slope: float
    intercept: float  # fitted power at BZ/NNZ = 0
    residuals: list[float]

    def power_at(self, x: float) -> float:
        return self.intercept + self.slope * x


def calibrate(anchors: Sequence[Anchor], table: CostCoefficients) -> Calibration:
    """Fit the activation-path slope to anchor points of the reference design.

    Anchor power is taken directly or implied as effective TOPS / (TOPS/W).
    The component table of ``table`` is kept; only the slope is replaced.
    """
    ref = table.reference
    xs, ps = [], []
    for an in anchors:
        x = an.weight_bz / an.weight_nnz
        if an.power_mw is not None:
            p = an.power_mw
        elif an.tops_per_w is not None:
            _, eff = throughput(ref, table, an.weight_nnz, an.weight_bz)
            p = eff / an.tops_per_w * 1000.0
        else:
            raise ValueError("anchor needs power_mw or tops_per_w")
        xs.append(x)
        ps.append(p)
    if len(set(xs)) < 2:
        raise InsufficientAnchors("the slope needs anchors at two or more densities")
    n = len(xs)
    mx, mp = sum(xs) / n, sum(ps) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    slope = sum((x - mx) * (p - mp) for x, p in zip(xs, ps)) / sxx
    if abs(slope) < 1e-9:
        slope = 0.0
    if slope < 0:
        raise NegativeCoefficient(f"fitted slope {slope:.3f} mW per unit is negative")
    intercept = mp - slope * mx
    coeffs = table.with_(p_act_path_slope=slope)
    _scales(coeffs)  # raises if the slope is non-physical for the table
    return Calibration(coeffs, slope, intercept, [p - (intercept + slope * x) for x, p in zip(xs, ps)])


def load_anchors(path=None) -> list[Anchor]:
    if path is None:
        text = resources.files("vdbb.data").joinpath("reference_anchors.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return [Anchor(**a) for a in json.loads(text)["anchors"]]


# ---------------------------------------------------------------- compare


def baseline_comparison(
    cfg_opt: StaConfig,
    cfg_baseline: StaConfig,
    coeffs: CostCoefficients,
    weight_nnz: int | None = None,
    act_sparsity: float | None = None,
) -> dict:
    """Baseline-over-optimized ratios of area and power per effective TOPS."""
    opt = estimate_cost(cfg_opt, coeffs, weight_nnz, act_sparsity)
    base = estimate_cost(cfg_baseline, coeffs, weight_nnz, act_sparsity)
    return {
        "area_ratio": base.area_per_tops / opt.area_per_tops,
        "power_ratio": base.power_per_tops / opt.power_per_tops,
    }
