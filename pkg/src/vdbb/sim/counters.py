from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction

# order shared with both kernel backends
COUNTER_NAMES = (
    "cycles_run",
    "mac_active",
    "mac_gated_act",
    "mac_gated_pad",
    "edge_act",
    "edge_wt",
    "edge_mask_bits",
    "tpe_act",
    "tpe_wt",
    "tpe_mask_bits",
    "acc_writes",
    "blocks",
)


@dataclass
class EventCounters:
    """Event totals for one GEMM call.

    MAC counts are lane-cycles. Byte counts cover operands entering the
    array edges (``edge_*``) and operands latched by any TPE (``tpe_*``).
    """

    mac_cycles_active: int = 0
    mac_cycles_gated_act: int = 0
    mac_cycles_gated_pad: int = 0
    edge_reads_act_bytes: int = 0
    edge_reads_wt_bytes: int = 0
    edge_reads_mask_bits: int = 0
    tpe_reads_act_bytes: int = 0
    tpe_reads_wt_bytes: int = 0
    tpe_reads_mask_bits: int = 0
    acc_writes: int = 0
    occupancy_hist: dict[int, int] = field(default_factory=dict)

    @property
    def mac_cycles_gated(self) -> int:
        return self.mac_cycles_gated_act + self.mac_cycles_gated_pad

    @property
    def mac_cycles(self) -> int:
        return self.mac_cycles_active + self.mac_cycles_gated

    @property
    def edge_reads_mask_bytes(self) -> Fraction:
        return Fraction(self.edge_reads_mask_bits, 8)

    @property
    def tpe_reads_mask_bytes(self) -> Fraction:
        return Fraction(self.tpe_reads_mask_bits, 8)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["occupancy_hist"] = {str(k): v for k, v in sorted(self.occupancy_hist.items())}
        d["mac_cycles_gated"] = self.mac_cycles_gated
        d["edge_reads_mask_bytes"] = str(self.edge_reads_mask_bytes)
        return d

    @classmethod
    def from_raw(cls, raw, occupancy: int) -> "EventCounters":
        v = dict(zip(COUNTER_NAMES, (int(x) for x in raw)))
        return cls(
            mac_cycles_active=v["mac_active"],
            mac_cycles_gated_act=v["mac_gated_act"],
            mac_cycles_gated_pad=v["mac_gated_pad"],
            edge_reads_act_bytes=v["edge_act"],
            edge_reads_wt_bytes=v["edge_wt"],
            edge_reads_mask_bits=v["edge_mask_bits"],
            tpe_reads_act_bytes=v["tpe_act"],
            tpe_reads_wt_bytes=v["tpe_wt"],
            tpe_reads_mask_bits=v["tpe_mask_bits"],
            acc_writes=v["acc_writes"],
            occupancy_hist={occupancy: v["blocks"]} if v["blocks"] else {},
        )
