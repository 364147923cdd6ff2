"""Array configuration: ``A×B×C_M×N`` tensor-PE arrays in four styles."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, replace

from ..codec import DbbFormat
from ..errors import ModeMismatch, ParseError


class Mode(str, enum.Enum):
    SA = "SA"
    STA = "STA"
    STA_DBB = "STA_DBB"
    STA_VDBB = "STA_VDBB"

    def __str__(self) -> str:
        return self.value

    @property
    def sparse(self) -> bool:
        return self in (Mode.STA_DBB, Mode.STA_VDBB)

    @property
    def gateable(self) -> bool:
        """Activation clock gating exists only for scalar MACs (SA, VDBB)."""
        return self in (Mode.SA, Mode.STA_VDBB)


@dataclass(frozen=True)
class StaConfig:
    a: int
    b: int
    c: int
    m: int
    n: int
    mode: Mode = Mode.STA
    dbb_fmt: DbbFormat | None = None
    sdp_width: int | None = None
    act_clock_gating: bool | None = None
    clock_ghz: float = 1.0
    im2col: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        for name in ("a", "b", "c", "m", "n"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.clock_ghz <= 0:
            raise ValueError("clock_ghz must be positive")
        mode = self.mode
        if mode is Mode.SA and (self.a, self.b, self.c) != (1, 1, 1):
            raise ModeMismatch("SA requires a 1x1x1 processing element")
        if mode.sparse:
            if self.dbb_fmt is None:
                raise ModeMismatch(f"{mode} requires a DBB format")
            if self.b != self.dbb_fmt.bz:
                raise ModeMismatch(f"{mode} requires B == BZ ({self.b} != {self.dbb_fmt.bz})")
        elif self.dbb_fmt is not None:
            raise ModeMismatch(f"{mode} takes no DBB format")
        if mode is Mode.STA_DBB:
            if self.sdp_width is None:
                object.__setattr__(self, "sdp_width", self.dbb_fmt.nnz)
            if self.sdp_width != self.dbb_fmt.nnz:
                raise ModeMismatch("STA_DBB requires sdp_width == NNZ of the format")
        elif self.sdp_width is not None:
            raise ModeMismatch("sdp_width applies to STA_DBB only")
        if self.act_clock_gating is None:
            object.__setattr__(self, "act_clock_gating", mode.gateable)
        elif self.act_clock_gating and not mode.gateable:
            raise ModeMismatch(f"{mode} has no activation clock gating")

    # geometry -----------------------------------------------------------

    @property
    def slots(self) -> int:
        """Weight slots consumed per TPE column per cycle (VDBB: per block)."""
        if self.mode is Mode.STA_DBB:
            return self.sdp_width
        if self.mode is Mode.STA_VDBB:
            return 1
        return self.b

    @property
    def tpes(self) -> int:
        return self.m * self.n

    @property
    def physical_macs(self) -> int:
        return self.a * self.slots * self.c * self.m * self.n

    @property
    def accumulators(self) -> int:
        return self.a * self.c * self.m * self.n

    @property
    def tile_rows(self) -> int:
        return self.a * self.m

    @property
    def tile_cols(self) -> int:
        return self.c * self.n

    def occupancy(self, run_nnz: int | None = None) -> int:
        """Cycles per K-block. A fixed-DBB array runs denser blocks in several passes."""
        if self.mode is Mode.STA_VDBB:
            return self.dbb_fmt.nnz if run_nnz is None else run_nnz
        if self.mode is Mode.STA_DBB and run_nnz is not None:
            return -(-run_nnz // self.sdp_width)
        return 1

    @property
    def fill_cycles(self) -> int:
        return (self.m - 1) + (self.n - 1)

    @property
    def drain_cycles(self) -> int:
        # calibrated: log2 of the accumulator columns per TPE
        return math.ceil(math.log2(self.c))

    def gemm_cycles(self, m: int, k: int, n: int, run_nnz: int | None = None) -> dict:
        """Closed-form cycle count of one GEMM call (matches the simulator)."""
        tiles = -(-m // self.tile_rows) * -(-n // self.tile_cols)
        kb = -(-k // self.b)
        steady = tiles * kb * self.occupancy(run_nnz)
        fill, drain = self.fill_cycles, self.drain_cycles
        return {"fill": fill, "steady": steady, "drain": drain, "total": fill + steady + drain}

    # naming -------------------------------------------------------------

    @property
    def name(self) -> str:
        s = f"{self.a}x{self.b}x{self.c}_{self.m}x{self.n}"
        if self.mode is Mode.STA_DBB:
            s += "_DBB"
        elif self.mode is Mode.STA_VDBB:
            s += "_VDBB"
        if self.im2col:
            s += "_IM2C"
        return s

    def __str__(self) -> str:
        return self.name

    def with_(self, **kw) -> "StaConfig":
        return replace(self, **kw)


_CONFIG_RE = re.compile(
    r"^\s*(\d+)[x×](\d+)[x×](\d+)_(\d+)[x×](\d+)((?:_[A-Za-z0-9]+)*)\s*$", re.IGNORECASE
)
_SUFFIX_MODES = {"SA": Mode.SA, "STA": Mode.STA, "DBB": Mode.STA_DBB, "VDBB": Mode.STA_VDBB}


def parse_config(
    text: str,
    *,
    mode: Mode | str | None = None,
    nnz: int | None = None,
    gating: bool | None = None,
    clock_ghz: float = 1.0,
    im2col: bool | None = None,
) -> StaConfig:
    """Parse ``AxBxC_MxN[_DBB|_VDBB][_IM2C]`` (``×`` also accepted).

    Without a mode suffix, ``1x1x1`` is SA and anything else STA. For DBB
    the hardware bound defaults to BZ/2; for VDBB ``nnz`` is the default run
    density (BZ when omitted).
    """
    match = _CONFIG_RE.match(text)
    if not match:
        raise ParseError(f"bad array configuration {text!r}", field="config")
    a, b, c, m, n = (int(g) for g in match.groups()[:5])
    suffixes = [s.upper() for s in match.group(6).split("_") if s]
    found_mode = None
    has_im2c = False
    for s in suffixes:
        if s == "IM2C":
            has_im2c = True
        elif s in _SUFFIX_MODES and found_mode is None:
            found_mode = _SUFFIX_MODES[s]
        else:
            raise ParseError(f"unexpected suffix {s!r} in {text!r}", field="config")
    if mode is not None:
        mode = Mode(str(mode).upper())
        if found_mode is not None and found_mode is not mode:
            raise ModeMismatch(f"config suffix says {found_mode}, mode says {mode}")
        found_mode = mode
    if found_mode is None:
        found_mode = Mode.SA if (a, b, c) == (1, 1, 1) else Mode.STA
    fmt = None
    if found_mode is Mode.STA_DBB:
        fmt = DbbFormat(b, nnz if nnz is not None else max(1, b // 2))
    elif found_mode is Mode.STA_VDBB:
        fmt = DbbFormat(b, nnz if nnz is not None else b)
    elif nnz is not None:
        raise ModeMismatch(f"nnz given for dense mode {found_mode}")
    return StaConfig(
        a, b, c, m, n, found_mode, fmt,
        act_clock_gating=gating, clock_ghz=clock_ghz,
        im2col=has_im2c if im2col is None else im2col,
    )
