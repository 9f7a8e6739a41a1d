"""STC and dSTC column networks: construction, simulation and export.

Each column has an input neuron A, a relay B1 and a coincidence detector B2.
A drives its own B2 on one forward slot; B1 forwards the spike laterally to
the B2 neurons of neighbouring columns.  The two variants differ only in how
a lateral projection is delayed:

* STC: through a dedicated delay neuron C per lateral edge, which relays the
  spike after its membrane integration latency;
* dSTC: through an E-I element, two CAM slots on the target B2 neuron.

A and B1 are ideal relays (an input spike is an output spike at the same
instant) and are never integrated; B2 and C neurons run the AdEx dynamics.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import defaults
from .dynamics import AdExArrays, AdExParams, DpiParams, SynapseType, integrate
from .ei import Balance, EiElement, make_ei_element
from .energy import EnergyCostTable, EnergyLedger, OpKind, Variant
from .errors import AllocationError, PreconditionError
from .fabric import CircuitAddress, Fabric, N_SLOTS, sample_params


class Role(str, enum.Enum):
    A = "A"
    B1 = "B1"
    B2 = "B2"
    C = "C"


@dataclass(frozen=True)
class ColumnSpec:
    index: int
    k: int
    sources: tuple[int, ...]

    def __post_init__(self):
        if self.index in self.sources:
            raise PreconditionError("a column cannot be its own lateral source")
        if len(self.sources) != self.k or len(set(self.sources)) != self.k:
            raise PreconditionError(f"column {self.index} needs {self.k} distinct sources")


def neighbour_sources(index: int, n_columns: int, k: int) -> tuple[int, ...]:
    """Nearest neighbours, k//2 on the left and the rest on the right, wrapping."""
    if k < 0:
        raise PreconditionError("k must be >= 0")
    if k > n_columns - 1:
        raise PreconditionError(f"fan-in {k} needs at least {k + 1} columns")
    left, right = k // 2, k - k // 2
    return tuple(
        [(index - d) % n_columns for d in range(1, left + 1)]
        + [(index + d) % n_columns for d in range(1, right + 1)]
    )


@dataclass(frozen=True)
class DelayRelay:
    """Nominal configuration of an STC delay neuron and its single input synapse."""

    adex: AdExParams = field(default_factory=lambda: defaults.RELAY_NEURON)
    synapse: DpiParams = field(default_factory=lambda: defaults.RELAY_SYNAPSE)


@dataclass
class ColumnBinding:
    spec: ColumnSpec
    a: CircuitAddress
    b1: CircuitAddress
    b2: CircuitAddress
    forward_slot: int
    elements: list[EiElement] = field(default_factory=list)  # dSTC, ordered like spec.sources
    relays: list[CircuitAddress] = field(default_factory=list)  # STC, ordered like spec.sources
    relay_slots: list[int] = field(default_factory=list)  # STC: B2 slot fed by each relay
    inhibition_slot: int | None = None


@dataclass
class Network:
    variant: Variant
    fabric: Fabric
    columns: list[ColumnBinding]
    balance: Balance | None = None
    forward: DpiParams = field(default_factory=lambda: defaults.FORWARD)
    relay: DelayRelay | None = None
    inhibition: bool = False

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    @property
    def k(self) -> int:
        return self.columns[0].spec.k if self.columns else 0

    def role_of(self) -> dict[CircuitAddress, tuple[Role, int]]:
        out = {}
        for c in self.columns:
            i = c.spec.index
            out[c.a], out[c.b1], out[c.b2] = (Role.A, i), (Role.B1, i), (Role.B2, i)
            for r in c.relays:
                out[r] = (Role.C, i)
        return out

    def simulated_neurons(self) -> list[CircuitAddress]:
        """B2 neurons first (by column), then delay neurons."""
        return [c.b2 for c in self.columns] + [r for c in self.columns for r in c.relays]

    def neuron_params(self, addr: CircuitAddress) -> AdExParams:
        if self.relay is not None and any(addr in c.relays for c in self.columns):
            return sample_params(self.relay.adex, addr, self.fabric.mismatch)
        return self.fabric.neuron_params(addr)

    def lateral_circuits_per_column(self) -> int:
        """Dedicated delay circuits (neurons) used for the lateral edges of one column."""
        return len(self.columns[0].relays) if self.columns else 0

    def describe(self) -> str:
        """Plain-text listing of columns, neuron addresses and CAM slots."""
        lines = [
            f"network {self.variant.value}",
            f"columns {self.n_columns}",
            f"fan_in {self.k}",
            f"b1_b2_inhibition {'on' if self.inhibition else 'off'}",
        ]
        src_name = {}
        for c in self.columns:
            i = c.spec.index
            src_name[c.a.global_id] = f"A[{i}]"
            src_name[c.b1.global_id] = f"B1[{i}]"
            for e, r in enumerate(c.relays):
                src_name[r.global_id] = f"C[{i}.{e}]"
        for c in self.columns:
            i = c.spec.index
            lines.append("")
            lines.append(f"column {i}")
            lines.append(f"  A  {c.a}")
            lines.append(f"  B1 {c.b1}")
            lines.append(f"  B2 {c.b2}")
            lines.append("  lateral_sources " + " ".join(str(s) for s in c.spec.sources))
            for e, r in enumerate(c.relays):
                lines.append(f"  C[{i}.{e}] {r}")
            neurons = [c.b2, *c.relays]
            for n in neurons:
                for slot, entry in sorted(self.fabric.entries(n).items()):
                    lines.append(
                        f"  cam {n} slot {slot:2d} <- {src_name.get(entry.source_id, entry.source_id)}"
                        f" {entry.syn_type.value}"
                    )
        return "\n".join(lines) + "\n"


def _alloc(fabric: Fabric) -> CircuitAddress:
    try:
        return fabric.allocate_neuron()
    except AllocationError as e:
        raise AllocationError(f"fabric capacity exhausted while building the network: {e}") from None


def _columns(n_columns: int, k: int) -> list[ColumnSpec]:
    if n_columns < 1:
        raise PreconditionError("need at least one column")
    return [ColumnSpec(i, k, neighbour_sources(i, n_columns, k)) for i in range(n_columns)]


def _base(fabric, specs, forward, inhibition, inh_nominal):
    cols = []
    for s in specs:
        a, b1, b2 = _alloc(fabric), _alloc(fabric), _alloc(fabric)
        cols.append(ColumnBinding(s, a, b1, b2, forward_slot=0))
    for c in cols:
        fabric.bind_cam(c.b2, 0, c.a.global_id, forward.syn_type, forward)
    return cols


def _check_slots(needed: int) -> None:
    if needed > N_SLOTS:
        raise AllocationError(f"a B2 neuron would need {needed} CAM slots, only {N_SLOTS} exist")


def _bind_inhibition(fabric, cols, slot_of, inh_nominal):
    for c in cols:
        s = slot_of(c)
        fabric.bind_cam(c.b2, s, c.b1.global_id, inh_nominal.syn_type, inh_nominal)
        c.inhibition_slot = s


def build_dstc(
    fabric: Fabric,
    n_columns: int,
    k: int = 4,
    balance: Balance | None = None,
    forward: DpiParams | None = None,
    inhibition: bool = False,
) -> Network:
    """Columns whose B2 neurons get a forward slot and ``k`` lateral E-I elements.

    B2 slot layout: 0 forward, then ``2e+1, 2e+2`` for the E-I pair of edge
    ``e``; with the B1-B2 inhibition enabled, one more slot after those.
    """
    balance = balance or defaults.BALANCE
    forward = forward or defaults.FORWARD
    _check_slots(2 * k + 1 + int(inhibition))
    cols = _base(fabric, _columns(n_columns, k), forward, inhibition, defaults.B1_INHIBITION)
    by_index = {c.spec.index: c for c in cols}
    for c in cols:
        for e, src in enumerate(c.spec.sources):
            el = make_ei_element(fabric, by_index[src].b1.global_id, c.b2, 2 * e + 1, 2 * e + 2, balance)
            c.elements.append(el)
    if inhibition:
        _bind_inhibition(fabric, cols, lambda c: 2 * k + 1, defaults.B1_INHIBITION)
    return Network(Variant.DSTC, fabric, cols, balance=balance, forward=forward, inhibition=inhibition)


def build_stc(
    fabric: Fabric,
    n_columns: int,
    k: int = 4,
    delay_params: DelayRelay | None = None,
    forward: DpiParams | None = None,
    lateral_synapse: DpiParams | None = None,
    inhibition: bool = False,
) -> Network:
    """Columns whose lateral edges each pass through a dedicated delay neuron C.

    A C neuron has one slot (slot 0) listening to the source column's B1; the
    target B2 listens to the C neuron on slot ``e+1`` for edge ``e``.
    """
    relay = delay_params or DelayRelay()
    forward = forward or defaults.FORWARD
    lateral_synapse = lateral_synapse or defaults.STC_LATERAL
    _check_slots(k + 1 + int(inhibition))
    cols = _base(fabric, _columns(n_columns, k), forward, inhibition, defaults.B1_INHIBITION)
    by_index = {c.spec.index: c for c in cols}
    for c in cols:
        for e, src in enumerate(c.spec.sources):
            r = _alloc(fabric)
            fabric.bind_cam(r, 0, by_index[src].b1.global_id, relay.synapse.syn_type, relay.synapse)
            fabric.bind_cam(c.b2, e + 1, r.global_id, lateral_synapse.syn_type, lateral_synapse)
            c.relays.append(r)
            c.relay_slots.append(e + 1)
    if inhibition:
        _bind_inhibition(fabric, cols, lambda c: k + 1, defaults.B1_INHIBITION)
    return Network(Variant.STC, fabric, cols, forward=forward, relay=relay, inhibition=inhibition)


# -- simulation -------------------------------------------------------------------


@dataclass
class SimulationResult:
    spikes: dict[CircuitAddress, list[float]]
    ledger: EnergyLedger
    forward_deliveries: int
    lateral_deliveries: int
    roles: dict[CircuitAddress, tuple[Role, int]]

    def b2_spikes(self, column: int) -> list[float]:
        for addr, (role, col) in self.roles.items():
            if role is Role.B2 and col == column:
                return self.spikes.get(addr, [])
        raise KeyError(column)

    def raster_csv(self) -> str:
        rows = sorted(
            (t, str(a), self.roles[a][0].value, self.roles[a][1])
            for a, ts in self.spikes.items() for t in ts
        )
        out = ["time_ms,neuron,role,column"]
        out += [f"{t:.3f},{a},{r},{c}" for t, a, r, c in rows]
        return "\n".join(out) + "\n"


def _spike_cost(ledger: EnergyLedger, n: int, routed: bool) -> EnergyLedger:
    ledger = ledger.accumulate(OpKind.SPIKE_GENERATION, n)
    ledger = ledger.accumulate(OpKind.ENCODING, n)
    ledger = ledger.accumulate(OpKind.BROADCAST, n)
    if routed:
        ledger = ledger.accumulate(OpKind.ROUTING, n)
    return ledger


def simulate(
    network: Network,
    inputs: Mapping[int, Sequence[float]] | Sequence[Sequence[float]],
    horizon: float,
    dt: float = defaults.B2_DT,
    table: EnergyCostTable | None = None,
) -> SimulationResult:
    """Drive the A neurons with the given spike trains and run B2 (and C) dynamics.

    Every spike costs generation, encoding and broadcast; spikes of a delay
    neuron are additionally charged one routing operation, matching the
    per-lateral-spike cost model.  Every CAM delivery costs one match.
    """
    if not isinstance(inputs, Mapping):
        inputs = dict(enumerate(inputs))
    cols = {c.spec.index: c for c in network.columns}
    for col, times in inputs.items():
        if col not in cols:
            raise PreconditionError(f"no column {col}")
        if any(not 0 <= t <= horizon for t in times):
            raise PreconditionError("input spikes must lie within [0, horizon]")
    fab = network.fabric
    roles = network.role_of()
    ledger = EnergyLedger(table or EnergyCostTable())

    neurons = network.simulated_neurons()
    nidx = {a: i for i, a in enumerate(neurons)}
    syn_params, syn_target, syn_index = [], [], {}
    for a in neurons:
        for slot, e in sorted(fab.entries(a).items()):
            syn_index[(a, slot)] = len(syn_params)
            syn_params.append(e.params)
            syn_target.append(nidx[a])

    ev_s, ev_t = [], []
    forward_deliveries = lateral_deliveries = 0
    cam_matches = 0
    inh_slots = {(c.b2, c.inhibition_slot) for c in network.columns if c.inhibition_slot is not None}
    # one lateral delivery per E-I element (counted on its excitatory slot) or per delay neuron
    lateral_sites = {(c.b2, el.exc.slot) for c in network.columns for el in c.elements}
    lateral_sites |= {(r, 0) for c in network.columns for r in c.relays}
    for col in sorted(inputs):
        c = cols[col]
        times = sorted(float(t) for t in inputs[col])
        n = len(times)
        if n == 0:
            continue
        # A spike and its ideal B1 relay spike
        ledger = _spike_cost(ledger, 2 * n, routed=False)
        for src in (c.a.global_id, c.b1.global_id):
            deliveries = fab.route_spike(src)
            for addr, slot in deliveries:
                if (addr, slot) not in syn_index:
                    continue
                delay = 1.0 if (addr, slot) in inh_slots else 0.0
                for t in times:
                    if t + delay <= horizon:
                        ev_s.append(syn_index[(addr, slot)])
                        ev_t.append(t + delay)
                        cam_matches += 1
                if src == c.a.global_id:
                    forward_deliveries += n
                elif (addr, slot) in lateral_sites:
                    lateral_deliveries += n

    routes = {}
    for a in neurons:
        if roles[a][0] is Role.C:
            routes[nidx[a]] = np.array(
                [syn_index[d] for d in fab.route_spike(a.global_id) if d in syn_index], dtype=np.int64
            )

    spikes: dict[CircuitAddress, list[float]] = {a: [] for a in neurons}
    if neurons and syn_params and ev_t:
        params = AdExArrays.stack([network.neuron_params(a) for a in neurons])
        rec = integrate(
            params,
            np.array([p.tau_syn for p in syn_params]),
            np.array([p.I_w for p in syn_params]),
            np.array([p.syn_type.sign for p in syn_params], dtype=float),
            np.array(syn_target, dtype=np.int64),
            len(neurons),
            (np.zeros(len(ev_t), dtype=np.int64), np.array(ev_s, dtype=np.int64), np.array(ev_t)),
            t_start=0.0,
            t_stop=horizon,
            dt=dt,
            routes=routes,
        )
        for ni, t in zip(rec.neuron, rec.times):
            a = neurons[int(ni)]
            spikes[a].append(float(t))
            if roles[a][0] is Role.C:
                ledger = _spike_cost(ledger, 1, routed=True)
                cam_matches += len(routes[int(ni)])
            else:
                ledger = _spike_cost(ledger, 1, routed=False)
    ledger = ledger.accumulate(OpKind.CAM_MATCH, cam_matches)
    return SimulationResult(spikes, ledger, forward_deliveries, lateral_deliveries, roles)
