"""The virtual chip: circuit addressing, static mismatch and CAM routing.

Every mismatched parameter is a pure function of ``(seed, address, name)``:
the multiplicative factor is drawn from a generator seeded with exactly that
tuple, so a fabric never has to store its draws and re-querying an address
always returns the same value, as with real device mismatch.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import functools
import hashlib
import io
import json
import math
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .dynamics import AdExParams, DpiParams, NeuronSlice, SynapseType
from .errors import AddressError, AllocationError, SlotConflictError

N_CHIPS = 4
N_CORES = 4
N_NEURONS = 256
N_SLOTS = 64

# first id used for virtual (spike-generator) sources; chip neurons use 0..4095
VIRTUAL_SOURCE_BASE = 1 << 16


def virtual_source(channel: int) -> int:
    """Source id of input channel ``channel`` of the external spike generator."""
    return VIRTUAL_SOURCE_BASE + int(channel)


@dataclass(frozen=True, order=True)
class CircuitAddress:
    chip: int = 0
    core: int = 0
    neuron: int = 0
    slot: int | None = None

    def __post_init__(self):
        for name, bound in (("chip", N_CHIPS), ("core", N_CORES), ("neuron", N_NEURONS)):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and 0 <= v < bound):
                raise AddressError(f"{name}={v!r} outside [0, {bound - 1}]")
        if self.slot is not None and not (
            isinstance(self.slot, (int, np.integer)) and 0 <= self.slot < N_SLOTS
        ):
            raise AddressError(f"slot={self.slot!r} outside [0, {N_SLOTS - 1}]")

    @property
    def global_id(self) -> int:
        """Chip-wide neuron id, also used as the neuron's AER source id."""
        return (self.chip * N_CORES + self.core) * N_NEURONS + self.neuron

    def neuron_address(self) -> "CircuitAddress":
        return dataclasses.replace(self, slot=None)

    def with_slot(self, slot: int) -> "CircuitAddress":
        return dataclasses.replace(self, slot=slot)

    def __str__(self) -> str:
        s = f"{self.chip}.{self.core}.{self.neuron}"
        return s if self.slot is None else f"{s}:{self.slot}"

    @classmethod
    def parse(cls, text: str) -> "CircuitAddress":
        head, _, slot = text.partition(":")
        chip, core, neuron = (int(x) for x in head.split("."))
        return cls(chip, core, neuron, int(slot) if slot else None)


class Distribution(str, enum.Enum):
    NORMAL = "normal"
    LOGNORMAL = "lognormal"


# Potentials are signed; a multiplicative factor on them is meaningless.
UNVARIED_PARAMS = frozenset({"adex.E_L", "adex.V_T", "adex.V_peak", "adex.V_r"})


@functools.lru_cache(maxsize=1 << 18)
def _unit_draw(seed: int, key: tuple[int, ...], name: str) -> float:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *key, zlib.crc32(name.encode())]
    return float(np.random.default_rng(np.random.SeedSequence(entropy)).standard_normal())


@dataclass(frozen=True)
class MismatchModel:
    """Static multiplicative mismatch: one independent factor per parameter per circuit.

    ``cv`` is the default coefficient of variation; ``per_param`` overrides it
    for individual parameter names (``"adex.g_L"``, ``"sub_inh.tau_syn"``, ...).
    Factors are floored at ``floor`` times nominal.
    """

    cv: float = 0.2
    seed: int = 0
    distribution: Distribution = Distribution.NORMAL
    per_param: Mapping[str, float] = field(default_factory=dict)
    floor: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "distribution", Distribution(self.distribution))
        object.__setattr__(self, "per_param", dict(self.per_param))
        if self.cv < 0 or any(v < 0 for v in self.per_param.values()):
            raise ValueError("coefficients of variation must be >= 0")

    def cv_for(self, name: str) -> float:
        if name in self.per_param:
            return self.per_param[name]
        if name in UNVARIED_PARAMS:
            return 0.0
        return self.cv

    def factor(self, addr: CircuitAddress, name: str) -> float:
        cv = self.cv_for(name)
        if cv == 0:
            return 1.0
        slot = -1 if addr.slot is None else addr.slot
        z = _unit_draw(self.seed, (addr.chip, addr.core, addr.neuron, slot + 1), name)
        if self.distribution is Distribution.LOGNORMAL:
            # median-one lognormal whose cv equals the requested one
            f = math.exp(math.sqrt(math.log1p(cv * cv)) * z)
        else:
            f = 1.0 + cv * z
        return max(f, self.floor)

    def to_dict(self) -> dict:
        return {
            "cv": self.cv,
            "seed": self.seed,
            "distribution": self.distribution.value,
            "per_param": dict(sorted(self.per_param.items())),
            "floor": self.floor,
        }


def _param_prefix(nominal) -> str:
    if isinstance(nominal, AdExParams):
        return "adex"
    if isinstance(nominal, DpiParams):
        return nominal.syn_type.value
    raise TypeError(f"no mismatch naming for {type(nominal).__name__}")


_VARIED_FIELDS = {
    AdExParams: ("C", "g_L", "E_L", "delta_T", "V_T", "V_peak", "V_r", "a", "tau_w", "b", "t_ref"),
    DpiParams: ("tau_syn", "I_w"),
}


def sample_params(nominal, addr: CircuitAddress, model: MismatchModel):
    """Return ``nominal`` with every numeric field scaled by its mismatch factor."""
    prefix = _param_prefix(nominal)
    changes = {}
    for name in _VARIED_FIELDS[type(nominal)]:
        f = model.factor(addr, f"{prefix}.{name}")
        if f != 1.0:
            changes[name] = getattr(nominal, name) * f
    return dataclasses.replace(nominal, **changes) if changes else nominal


DEFAULT_SYNAPSE_NOMINALS = {
    SynapseType.FAST_EXC: DpiParams(2.0, 1000.0, SynapseType.FAST_EXC),
    SynapseType.SLOW_EXC: DpiParams(20.0, 100.0, SynapseType.SLOW_EXC),
    SynapseType.SUB_INH: DpiParams(5.0, 150.0, SynapseType.SUB_INH),
    SynapseType.SHUNT_INH: DpiParams(5.0, 150.0, SynapseType.SHUNT_INH),
}


@dataclass(frozen=True)
class CamEntry:
    """One occupied CAM slot: who it listens to and the circuit it drives."""

    neuron: CircuitAddress
    slot: int
    source_id: int
    syn_type: SynapseType
    params: DpiParams
    nominal: DpiParams | None = None


class Fabric:
    """Neuron/synapse inventory with mismatched parameters and a CAM table.

    Mismatched parameters are derived on demand and never change.  The CAM
    table is the only mutable part; use :meth:`copy` to get an independent
    table, e.g. for a tuning worker.
    """

    def __init__(
        self,
        mismatch: MismatchModel | None = None,
        n_chips: int = 1,
        n_cores: int = 1,
        neuron_nominal: AdExParams | None = None,
        synapse_nominals: Mapping[SynapseType, DpiParams] | None = None,
    ):
        if not (1 <= n_chips <= N_CHIPS and 1 <= n_cores <= N_CORES):
            raise AddressError(f"topology {n_chips}x{n_cores} exceeds {N_CHIPS}x{N_CORES}")
        self.mismatch = mismatch or MismatchModel()
        self.n_chips = n_chips
        self.n_cores = n_cores
        if neuron_nominal is None:
            from .defaults import B2_NEURON as neuron_nominal
        self.neuron_nominal = neuron_nominal
        noms = dict(DEFAULT_SYNAPSE_NOMINALS)
        noms.update({SynapseType(k): v for k, v in (synapse_nominals or {}).items()})
        self.synapse_nominals = noms
        self._cam: dict[CircuitAddress, dict[int, CamEntry]] = {}
        self._by_source: dict[int, set[tuple[CircuitAddress, int]]] = {}
        self._allocated: set[CircuitAddress] = set()

    # -- inventory -----------------------------------------------------------

    def neurons(self) -> Iterable[CircuitAddress]:
        for chip in range(self.n_chips):
            for core in range(self.n_cores):
                for n in range(N_NEURONS):
                    yield CircuitAddress(chip, core, n)

    def check_address(self, addr: CircuitAddress) -> CircuitAddress:
        if addr.chip >= self.n_chips or addr.core >= self.n_cores:
            raise AddressError(f"{addr} is outside this {self.n_chips}x{self.n_cores} fabric")
        return addr

    def allocate_neuron(self) -> CircuitAddress:
        """Reserve the lowest-addressed neuron not yet allocated."""
        for addr in self.neurons():
            if addr not in self._allocated and addr not in self._cam:
                self._allocated.add(addr)
                return addr
        raise AllocationError("no free neurons left on the fabric")

    def reserve(self, addr: CircuitAddress) -> CircuitAddress:
        self._allocated.add(self.check_address(addr.neuron_address()))
        return addr

    # -- mismatched parameters ------------------------------------------------

    def neuron_params(self, addr: CircuitAddress) -> AdExParams:
        addr = self.check_address(addr.neuron_address())
        return sample_params(self.neuron_nominal, addr, self.mismatch)

    def synapse_params(
        self, addr: CircuitAddress, slot: int, syn_type: SynapseType, nominal: DpiParams | None = None
    ) -> DpiParams:
        """Mismatched DPI parameters of input circuit ``slot`` on neuron ``addr``."""
        syn_type = SynapseType(syn_type)
        nominal = nominal or self.synapse_nominals[syn_type]
        if nominal.syn_type is not syn_type:
            nominal = dataclasses.replace(nominal, syn_type=syn_type)
        site = self.check_address(addr.neuron_address()).with_slot(slot)
        return sample_params(nominal, site, self.mismatch)

    # -- CAM table -------------------------------------------------------------

    def bind_cam(
        self,
        neuron_addr: CircuitAddress,
        slot: int,
        source_id: int,
        syn_type: SynapseType,
        nominal: DpiParams | None = None,
    ) -> CamEntry:
        """Store ``source_id`` in CAM slot ``slot`` of ``neuron_addr``."""
        neuron = self.check_address(neuron_addr.neuron_address())
        if not (isinstance(slot, (int, np.integer)) and 0 <= slot < N_SLOTS):
            raise AddressError(f"slot={slot!r} outside [0, {N_SLOTS - 1}]")
        table = self._cam.setdefault(neuron, {})
        if slot in table:
            raise SlotConflictError(neuron, slot)
        syn_type = SynapseType(syn_type)
        nominal = nominal or self.synapse_nominals[syn_type]
        entry = CamEntry(
            neuron, int(slot), int(source_id), syn_type,
            self.synapse_params(neuron, slot, syn_type, nominal),
            nominal,
        )
        table[int(slot)] = entry
        self._by_source.setdefault(int(source_id), set()).add((neuron, int(slot)))
        return entry

    def unbind(self, neuron_addr: CircuitAddress, slot: int) -> None:
        neuron = neuron_addr.neuron_address()
        entry = self._cam.get(neuron, {}).pop(slot, None)
        if entry is not None:
            self._by_source[entry.source_id].discard((neuron, slot))

    def clear_neuron(self, neuron_addr: CircuitAddress) -> None:
        neuron = neuron_addr.neuron_address()
        for slot in list(self._cam.get(neuron, {})):
            self.unbind(neuron, slot)

    def entries(self, neuron_addr: CircuitAddress) -> dict[int, CamEntry]:
        return dict(self._cam.get(neuron_addr.neuron_address(), {}))

    def all_entries(self) -> list[CamEntry]:
        return [e for n in sorted(self._cam) for _, e in sorted(self._cam[n].items())]

    def occupied_slots(self) -> int:
        return sum(len(t) for t in self._cam.values())

    def route_spike(self, source_id: int, t: float | None = None) -> list[tuple[CircuitAddress, int]]:
        """All ``(neuron, slot)`` pairs whose CAM holds ``source_id``, ascending."""
        return sorted(self._by_source.get(int(source_id), ()))

    def neuron_slice(self, neuron_addr: CircuitAddress) -> NeuronSlice:
        return NeuronSlice(
            self.neuron_params(neuron_addr),
            {s: e.params for s, e in self.entries(neuron_addr).items()},
        )

    def copy(self) -> "Fabric":
        new = Fabric(self.mismatch, self.n_chips, self.n_cores, self.neuron_nominal, self.synapse_nominals)
        new._cam = {n: dict(t) for n, t in self._cam.items()}
        new._by_source = {s: set(v) for s, v in self._by_source.items()}
        new._allocated = set(self._allocated)
        return new

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "mismatch": self.mismatch.to_dict(),
            "topology": {"chips": self.n_chips, "cores": self.n_cores},
            "neuron_nominal": self.neuron_nominal.as_dict(),
            "synapse_nominals": {
                t.value: {"tau_syn": p.tau_syn, "I_w": p.I_w}
                for t, p in sorted(self.synapse_nominals.items(), key=lambda kv: kv[0].value)
            },
            "cam": [
                {
                    "neuron": str(e.neuron),
                    "slot": e.slot,
                    "source": e.source_id,
                    "type": e.syn_type.value,
                    "nominal": {"tau_syn": e.nominal.tau_syn, "I_w": e.nominal.I_w},
                }
                for e in self.all_entries()
            ],
            "allocated": sorted(str(a) for a in self._allocated),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Fabric":
        m = d["mismatch"]
        fab = cls(
            MismatchModel(m["cv"], m["seed"], m["distribution"], m.get("per_param", {}), m.get("floor", 0.05)),
            d["topology"]["chips"],
            d["topology"]["cores"],
            AdExParams(**d["neuron_nominal"]),
            {
                SynapseType(k): DpiParams(v["tau_syn"], v["I_w"], SynapseType(k))
                for k, v in d["synapse_nominals"].items()
            },
        )
        for e in d["cam"]:
            t = SynapseType(e["type"])
            fab.bind_cam(
                CircuitAddress.parse(e["neuron"]), e["slot"], e["source"], t,
                DpiParams(e["nominal"]["tau_syn"], e["nominal"]["I_w"], t),
            )
        for a in d.get("allocated", ()):
            fab._allocated.add(CircuitAddress.parse(a))
        return fab

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON description."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def dump_csv(self, neurons: Iterable[CircuitAddress] | None = None) -> str:
        """Rows of ``address, parameter, value`` for neuron and bound-synapse parameters."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["address", "parameter", "value"])
        for addr in neurons if neurons is not None else self.neurons():
            for k, v in self.neuron_params(addr).as_dict().items():
                w.writerow([str(addr), f"adex.{k}", repr(float(v))])
            for slot, e in sorted(self.entries(addr).items()):
                site = str(addr.with_slot(slot))
                w.writerow([site, f"{e.syn_type.value}.tau_syn", repr(e.params.tau_syn)])
                w.writerow([site, f"{e.syn_type.value}.I_w", repr(e.params.I_w)])
        return buf.getvalue()

