"""Energy accounting in integer picojoules.

Each hardware operation of the emulated chip has a fixed cost; a ledger
counts operations and its total is the exact integer sum of count times
cost.  Ledgers are immutable values, so accumulating returns a new ledger
and ledgers from parallel runs merge associatively with ``+``.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping

from .errors import PreconditionError


class OpKind(str, enum.Enum):
    SPIKE_GENERATION = "spike_generation"
    ENCODING = "spike_and_destination_encoding"
    BROADCAST = "intracore_broadcast"
    ROUTING = "intercore_routing"
    CAM_MATCH = "cam_match_pulse_extension"


class Variant(str, enum.Enum):
    STC = "STC"
    DSTC = "dSTC"


@dataclass(frozen=True)
class EnergyCostTable:
    """Per-operation costs in pJ (DYNAP-SE measurements by default)."""

    spike_generation: int = 883
    spike_and_destination_encoding: int = 883
    intracore_broadcast: int = 6840
    intercore_routing: int = 360
    cam_match_pulse_extension: int = 324

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise PreconditionError(f"cost {f.name} must be a non-negative integer pJ, got {v!r}")

    def cost(self, op: OpKind | str) -> int:
        return getattr(self, _op(op).value)

    @classmethod
    def zero(cls) -> "EnergyCostTable":
        return cls(0, 0, 0, 0, 0)

    @classmethod
    def from_mapping(cls, m: Mapping[str, int]) -> "EnergyCostTable":
        unknown = set(m) - {f.name for f in fields(cls)}
        if unknown:
            raise PreconditionError(f"unknown cost entries: {sorted(unknown)}")
        return cls(**dict(m))

    def to_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _op(op) -> OpKind:
    try:
        return OpKind(op)
    except ValueError:
        raise PreconditionError(f"unknown operation kind {op!r}") from None


@dataclass(frozen=True)
class EnergyLedger:
    table: EnergyCostTable = field(default_factory=EnergyCostTable)
    counts: Mapping[OpKind, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "counts", {op: int(self.counts.get(op, 0)) for op in OpKind})

    def count(self, op: OpKind | str) -> int:
        return self.counts[_op(op)]

    @property
    def total_pj(self) -> int:
        return sum(self.counts[op] * self.table.cost(op) for op in OpKind)

    def accumulate(self, op: OpKind | str, count: int = 1) -> "EnergyLedger":
        return ledger_accumulate(self, op, count)

    def __add__(self, other: "EnergyLedger") -> "EnergyLedger":
        if other.table != self.table:
            raise PreconditionError("cannot merge ledgers priced with different cost tables")
        return EnergyLedger(self.table, {op: self.counts[op] + other.counts[op] for op in OpKind})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["op", "count", "unit_cost_pJ", "subtotal_pJ"])
        for op in OpKind:
            c = self.counts[op]
            w.writerow([op.value, c, self.table.cost(op), c * self.table.cost(op)])
        w.writerow(["total", "", "", self.total_pj])
        return buf.getvalue()


def ledger_accumulate(ledger: EnergyLedger, op_kind: OpKind | str, count: int) -> EnergyLedger:
    """Return ``ledger`` with ``count`` more operations of ``op_kind``."""
    op = _op(op_kind)
    if int(count) != count or count < 0:
        raise PreconditionError(f"count must be a non-negative integer, got {count!r}")
    if count == 0:
        return ledger
    counts = dict(ledger.counts)
    counts[op] += int(count)
    return EnergyLedger(ledger.table, counts)


def merge(ledgers: Iterable[EnergyLedger], table: EnergyCostTable | None = None) -> EnergyLedger:
    out = EnergyLedger(table or EnergyCostTable())
    for led in ledgers:
        out = out + led
    return out


# Operations added by one lateral spike.  STC relays it through a dedicated
# delay neuron, which has to generate, encode, broadcast and route a spike of
# its own before the terminal synapse matches it; in the dSTC the same spike
# only hits the two CAM entries of the E-I pair.
LATERAL_OPS: dict[Variant, dict[OpKind, int]] = {
    Variant.STC: {
        OpKind.SPIKE_GENERATION: 1,
        OpKind.ENCODING: 1,
        OpKind.BROADCAST: 1,
        OpKind.ROUTING: 1,
        OpKind.CAM_MATCH: 2,
    },
    Variant.DSTC: {OpKind.CAM_MATCH: 2},
}

# Column base cost, shared by both variants: the A spike and the B1 relay
# spike (generation, encoding, broadcast each) and the forward CAM match.
BASE_COLUMN_OPS: dict[OpKind, int] = {
    OpKind.SPIKE_GENERATION: 2,
    OpKind.ENCODING: 2,
    OpKind.BROADCAST: 2,
    OpKind.CAM_MATCH: 1,
}


def _price(ops: Mapping[OpKind, int], table: EnergyCostTable) -> int:
    return sum(n * table.cost(op) for op, n in ops.items())


def lateral_spike_energy(variant: Variant | str, table: EnergyCostTable | None = None) -> int:
    """Energy in pJ added by one lateral spike."""
    return _price(LATERAL_OPS[Variant(variant)], table or EnergyCostTable())


def column_activation_energy(
    variant: Variant | str,
    k: int,
    table: EnergyCostTable | None = None,
    base_ops: Mapping[OpKind, int] | None = None,
) -> int:
    """Energy in pJ of one A spike and the lateral spike events it triggers with fan-in ``k``."""
    if k < 0:
        raise PreconditionError("k must be >= 0")
    table = table or EnergyCostTable()
    base = _price(BASE_COLUMN_OPS if base_ops is None else base_ops, table)
    return base + k * lateral_spike_energy(variant, table)


def lateral_table_csv(table: EnergyCostTable | None = None) -> str:
    """Per-lateral-spike breakdown for both variants, with sums."""
    table = table or EnergyCostTable()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "op", "count", "unit_cost_pJ", "subtotal_pJ"])
    for v in Variant:
        for op in OpKind:
            n = LATERAL_OPS[v].get(op, 0)
            if n:
                w.writerow([v.value, op.value, n, table.cost(op), n * table.cost(op)])
        w.writerow([v.value, "sum", "", "", lateral_spike_energy(v, table)])
    return buf.getvalue()


def scaling_csv(k_values: Iterable[int] = range(0, 11), table: EnergyCostTable | None = None) -> str:
    """Column-activation energy against lateral fan-in for both variants."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "variant", "energy_pJ"])
    for k in k_values:
        for v in Variant:
            w.writerow([k, v.value, column_activation_energy(v, k, table)])
    return buf.getvalue()
