"""Receptive-field mapping and feature tuning on standalone B2 neurons.

A B2 neuron listens to one forward channel (channel 0, always at ``t = 0``)
on a fast excitatory synapse and to ``k`` lateral channels, each through an
E-I element.  Both protocols present single-spike patterns to a freshly
reset neuron and count its output spikes:

* receptive-field mapping draws lateral spike times uniformly from a window
  before the forward spike and keeps the patterns that made the neuron fire;
* feature tuning re-draws which physical CAM slots the 2k+1 synapses use and
  keeps the slot assignments that separate two fixed patterns.

Trials are independent, so they are simulated as rows of one vectorized
batch; fanning chunks out to worker processes gives identical results.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import defaults
from .dynamics import AdExArrays, AdExParams, DpiParams, SynapseType, integrate
from .ei import Balance, DelayProfile, NoRebound, characterize_pair, make_ei_element
from .errors import PreconditionError
from .fabric import N_SLOTS, CircuitAddress, Fabric, virtual_source

# -- patterns ------------------------------------------------------------------


@dataclass(frozen=True)
class SpikePattern:
    """One spike per channel; ``times[0]`` is the forward spike at 0 ms."""

    times: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if not self.times or self.times[0] != 0.0:
            raise PreconditionError("channel 0 must spike at t=0")

    @property
    def k(self) -> int:
        return len(self.times) - 1

    @property
    def lateral(self) -> np.ndarray:
        return np.array(self.times[1:])

    @classmethod
    def from_lateral(cls, lateral) -> "SpikePattern":
        return cls((0.0, *np.asarray(lateral, dtype=float).tolist()))

    def check_window(self, t_min: float, t_max: float) -> None:
        lat = self.lateral
        if np.any(lat > -t_min + 1e-9) or np.any(lat < -t_max - 1e-9):
            raise PreconditionError(f"lateral times {lat} outside [-{t_max}, -{t_min}]")


def random_pattern(rng: np.random.Generator, k: int, t_min: float = 1.0, t_max: float = 50.0) -> SpikePattern:
    """Lateral spikes drawn independently and uniformly from ``[-t_max, -t_min]`` ms."""
    if not 0 < t_min <= t_max:
        raise PreconditionError("need 0 < t_min <= t_max")
    return SpikePattern.from_lateral(-rng.uniform(t_min, t_max, size=k))


def random_lateral_times(rng: np.random.Generator, n: int, k: int, t_min: float, t_max: float) -> np.ndarray:
    """``n`` patterns at once as an ``(n, k)`` array; same stream as repeated :func:`random_pattern`."""
    if not 0 < t_min <= t_max:
        raise PreconditionError("need 0 < t_min <= t_max")
    return -rng.uniform(t_min, t_max, size=(n, k))


# -- B2 neurons ----------------------------------------------------------------


@dataclass(frozen=True)
class SlotAssignment:
    """Which CAM slots the forward synapse and each lateral E-I pair occupy."""

    forward: int
    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(e), int(i)) for e, i in self.pairs))
        used = self.slots
        if len(set(used)) != len(used):
            raise PreconditionError(f"slot assignment reuses a slot: {used}")
        if any(not 0 <= s < N_SLOTS for s in used):
            raise PreconditionError(f"slot outside [0, {N_SLOTS - 1}]: {used}")

    @property
    def k(self) -> int:
        return len(self.pairs)

    @property
    def slots(self) -> tuple[int, ...]:
        return (int(self.forward), *(s for p in self.pairs for s in p))

    @classmethod
    def sequential(cls, k: int) -> "SlotAssignment":
        """Forward on slot 0, pair ``i`` on slots ``2i+1, 2i+2``."""
        return cls(0, tuple((2 * i + 1, 2 * i + 2) for i in range(k)))

    @classmethod
    def from_slots(cls, slots: Sequence[int]) -> "SlotAssignment":
        slots = [int(s) for s in slots]
        if len(slots) % 2 != 1:
            raise PreconditionError("a slot list has 2k+1 entries")
        return cls(slots[0], tuple(zip(slots[1::2], slots[2::2])))

    def label(self) -> str:
        return " ".join([str(self.forward), *(f"({e},{i})" for e, i in self.pairs)])


@dataclass(frozen=True)
class B2Config:
    """Realized parameters of one B2 neuron: everything a simulation needs."""

    adex: AdExParams
    forward: DpiParams
    lateral: tuple[tuple[DpiParams, DpiParams], ...]
    min_peak: float = 0.0

    @property
    def k(self) -> int:
        return len(self.lateral)

    def synapses(self) -> list[DpiParams]:
        """Synapse order used in simulations: forward, then exc/inh per channel."""
        return [self.forward, *(s for pair in self.lateral for s in pair)]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        syn = self.synapses()
        return (
            np.array([s.tau_syn for s in syn]),
            np.array([s.I_w for s in syn]),
            np.array([s.syn_type.sign for s in syn], dtype=float),
        )

    def profiles(self, dt: float = 0.01) -> list[DelayProfile | NoRebound]:
        return [characterize_pair(e, i, self.min_peak, dt) for e, i in self.lateral]


@dataclass
class B2Neuron:
    """A B2 neuron bound on a fabric together with its slot assignment."""

    fabric: Fabric
    address: CircuitAddress
    assignment: SlotAssignment
    balance: Balance = field(default_factory=lambda: defaults.BALANCE)
    forward_nominal: DpiParams = field(default_factory=lambda: defaults.FORWARD)

    @property
    def k(self) -> int:
        return self.assignment.k

    def config(self) -> B2Config:
        return config_for(self.fabric, self.address, self.assignment, self.balance, self.forward_nominal)

    def rebind(self, assignment: SlotAssignment) -> None:
        """Clear the neuron's CAM and bind the same connections on new slots."""
        if assignment.k != self.k:
            raise PreconditionError("a new assignment must keep the lateral fan-in")
        self.fabric.clear_neuron(self.address)
        _bind(self.fabric, self.address, assignment, self.balance, self.forward_nominal)
        self.assignment = assignment


def _bind(fabric, address, assignment, balance, forward_nominal):
    fabric.bind_cam(address, assignment.forward, virtual_source(0), forward_nominal.syn_type, forward_nominal)
    for ch, (e, i) in enumerate(assignment.pairs, start=1):
        make_ei_element(fabric, virtual_source(ch), address, e, i, balance)


def config_for(
    fabric: Fabric,
    address: CircuitAddress,
    assignment: SlotAssignment,
    balance: Balance | None = None,
    forward_nominal: DpiParams | None = None,
) -> B2Config:
    """Realized B2 parameters for ``assignment`` without touching the CAM table."""
    balance = balance or defaults.BALANCE
    fwd = forward_nominal or defaults.FORWARD
    lateral = tuple(
        (
            fabric.synapse_params(address, e, balance.exc_type, balance.exc_nominal),
            fabric.synapse_params(address, i, balance.inh_type, balance.inh_nominal),
        )
        for e, i in assignment.pairs
    )
    return B2Config(
        fabric.neuron_params(address),
        fabric.synapse_params(address, assignment.forward, fwd.syn_type, fwd),
        lateral,
        balance.min_rebound * balance.weight_exc,
    )


def build_b2(
    fabric: Fabric,
    k: int = 4,
    address: CircuitAddress | None = None,
    assignment: SlotAssignment | None = None,
    balance: Balance | None = None,
    forward_nominal: DpiParams | None = None,
) -> B2Neuron:
    """Allocate (or reserve) a neuron and bind a forward synapse plus ``k`` E-I elements."""
    assignment = assignment or SlotAssignment.sequential(k)
    if assignment.k != k:
        raise PreconditionError("assignment does not match k")
    address = fabric.reserve(address) if address is not None else fabric.allocate_neuron()
    b2 = B2Neuron(fabric, address, assignment, balance or defaults.BALANCE, forward_nominal or defaults.FORWARD)
    _bind(fabric, address, assignment, b2.balance, b2.forward_nominal)
    return b2


def _as_config(b2) -> B2Config:
    return b2 if isinstance(b2, B2Config) else b2.config()


# -- batched presentation ------------------------------------------------------


def present(
    configs: B2Config | Sequence[B2Config],
    lateral_times: np.ndarray,
    dt: float = defaults.B2_DT,
    t_max: float = defaults.T_MAX,
    window: float = defaults.RESPONSE_WINDOW,
    config_index: np.ndarray | None = None,
) -> np.ndarray:
    """Spike counts of reset B2 neurons, one per row of ``lateral_times``.

    Row ``r`` presents the pattern ``(0, *lateral_times[r])`` to
    ``configs[config_index[r]]`` (or to the single config).  Only spikes in
    ``[0, window]`` ms are counted.
    """
    lat = np.atleast_2d(np.asarray(lateral_times, dtype=float))
    n, k = lat.shape
    if n == 0:
        return np.zeros(0, dtype=int)
    single = isinstance(configs, B2Config)
    configs = [configs] if single else list(configs)
    if any(c.k != k for c in configs):
        raise PreconditionError("pattern width does not match the neuron's fan-in")
    if config_index is None:
        if len(configs) != 1:
            raise PreconditionError("config_index is required with several configs")
        config_index = np.zeros(n, dtype=np.int64)
    config_index = np.asarray(config_index, dtype=np.int64)

    arrs = [c.arrays() for c in configs]
    tau = np.stack([a[0] for a in arrs])[config_index]
    gain = np.stack([a[1] for a in arrs])[config_index]
    sign = arrs[0][2]
    if len(configs) == 1:
        neurons = configs[0].adex
        tau, gain = tau[:1], gain[:1]
    else:
        stacked = AdExArrays.stack([c.adex for c in configs])
        neurons = AdExArrays(*(f[config_index][:, None] for f in stacked))

    n_syn = 2 * k + 1
    # forward event on synapse 0, lateral channel c drives synapses 2c-1 and 2c
    times = np.concatenate([np.zeros((n, 1)), np.repeat(lat, 2, axis=1)], axis=1)
    eb = np.repeat(np.arange(n), n_syn)
    es = np.tile(np.arange(n_syn), n)
    rec = integrate(
        neurons, tau, gain, sign, np.zeros(n_syn, dtype=np.int64), 1,
        (eb, es, times.ravel()),
        t_start=-(t_max + 1.0), t_stop=window, dt=dt, n_batch=n,
    )
    counted = rec.times >= 0.0
    out = np.zeros(n, dtype=int)
    np.add.at(out, rec.batch[counted], 1)
    return out


def _present_chunk(args):
    return present(*args)


def present_parallel(configs, lateral_times, dt, t_max, window, config_index=None,
                     workers: int = 1, chunk: int = 1000) -> np.ndarray:
    """:func:`present` split into row chunks, optionally across worker processes.

    Rows are independent, so the concatenated result does not depend on
    ``workers`` or ``chunk``.
    """
    lat = np.atleast_2d(np.asarray(lateral_times, dtype=float))
    n = lat.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    idx = None if config_index is None else np.asarray(config_index)
    jobs = []
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        jobs.append((configs, lat[lo:hi], dt, t_max, window, None if idx is None else idx[lo:hi]))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_present_chunk, jobs))
    else:
        parts = [_present_chunk(j) for j in jobs]
    return np.concatenate(parts)


# -- receptive fields ------------------------------------------------------------


@dataclass
class ReceptiveField:
    """Patterns that elicited at least one output spike, plus order statistics."""

    accepted: np.ndarray  # shape (n_accepted, k+1), channel 0 column is all zeros
    n_trials: int
    k: int

    @property
    def n_accepted(self) -> int:
        return int(self.accepted.shape[0])

    def channel_stats(self, channel: int) -> dict[str, float] | None:
        """Quartiles, median and data range of the accepted times on ``channel``."""
        if self.n_accepted == 0:
            return None
        x = self.accepted[:, channel]
        q1, med, q3 = np.percentile(x, [25, 50, 75])
        return {"q1": float(q1), "median": float(med), "q3": float(q3),
                "whisker_lo": float(x.min()), "whisker_hi": float(x.max())}

    def medians(self) -> np.ndarray:
        """Lateral-channel medians, NaN for an empty field."""
        if self.n_accepted == 0:
            return np.full(self.k, np.nan)
        return np.median(self.accepted[:, 1:], axis=0)


def map_receptive_field(
    b2: B2Neuron | B2Config,
    n_patterns: int,
    seed: int = 0,
    dt: float = defaults.B2_DT,
    t_min: float = defaults.T_MIN,
    t_max: float = defaults.T_MAX,
    window: float = defaults.RESPONSE_WINDOW,
    workers: int = 1,
) -> ReceptiveField:
    """Present ``n_patterns`` random patterns and keep the ones that made the neuron fire."""
    if n_patterns < 0:
        raise PreconditionError("n_patterns must be >= 0")
    cfg = _as_config(b2)
    rng = np.random.default_rng(seed)
    lat = random_lateral_times(rng, n_patterns, cfg.k, t_min, t_max)
    counts = present_parallel(cfg, lat, dt, t_max, window, workers=workers)
    acc = lat[counts > 0]
    accepted = np.concatenate([np.zeros((acc.shape[0], 1)), acc], axis=1)
    return ReceptiveField(accepted, n_patterns, cfg.k)


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def rf_report(rf: ReceptiveField) -> str:
    """Box-plot table, one row per channel; statistics are empty for an empty field."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["channel", "q1", "median", "q3", "whisker_lo", "whisker_hi", "n_accepted"])
    for ch in range(rf.k + 1):
        st = rf.channel_stats(ch)
        if st is None:
            w.writerow([ch, "", "", "", "", "", 0])
        else:
            w.writerow([ch, *(_fmt(st[c]) for c in ("q1", "median", "q3", "whisker_lo", "whisker_hi")),
                        rf.n_accepted])
    return buf.getvalue()


def accepted_csv(rf: ReceptiveField) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pattern", *(f"ch{c}_ms" for c in range(rf.k + 1))])
    for i, row in enumerate(rf.accepted):
        w.writerow([i, *(_fmt(v) for v in row)])
    return buf.getvalue()


# -- feature tuning --------------------------------------------------------------


def resample_synapses(fabric: Fabric, b2_neuron: B2Neuron, rng: np.random.Generator) -> SlotAssignment:
    """Move the neuron's 2k+1 synapses to distinct slots drawn uniformly from all 64."""
    slots = rng.choice(N_SLOTS, size=2 * b2_neuron.k + 1, replace=False)
    assignment = SlotAssignment.from_slots(slots.tolist())
    if b2_neuron.fabric is not fabric:
        raise PreconditionError("b2_neuron is bound on a different fabric")
    b2_neuron.rebind(assignment)
    return assignment


def tuning_patterns(b2: B2Neuron | B2Config, dt: float = 0.01,
                    t_min: float = defaults.T_MIN, t_max: float = defaults.T_MAX) -> tuple[SpikePattern, SpikePattern]:
    """Pattern A aligns every channel's net-excitation peak with the forward spike.

    Pattern B presents the same lateral times cyclically shifted by one
    channel, so the two patterns share their spike-time content.  Channels
    without a usable rebound keep the window midpoint.
    """
    cfg = _as_config(b2)
    times = []
    for p in cfg.profiles(dt):
        t = p.peak_time if isinstance(p, DelayProfile) else 0.5 * (t_min + t_max)
        times.append(-min(max(t, t_min), t_max))
    a = SpikePattern.from_lateral(times)
    b = SpikePattern.from_lateral(np.roll(times, 1))
    return a, b


@dataclass(frozen=True)
class TuningOutcome:
    index: int
    assignment: SlotAssignment
    counts_a: tuple[int, ...]
    counts_b: tuple[int, ...]
    success: bool


def _judge(counts_a, counts_b, strict: bool = True) -> bool:
    if strict:
        return bool(np.all(np.asarray(counts_a) >= 1) and np.all(np.asarray(counts_b) == 0))
    return bool(np.mean(np.asarray(counts_a) >= 1) > np.mean(np.asarray(counts_b) >= 1))


def draw_assignments(rng: np.random.Generator, k: int, n_configs: int) -> list[SlotAssignment]:
    return [
        SlotAssignment.from_slots(rng.choice(N_SLOTS, size=2 * k + 1, replace=False).tolist())
        for _ in range(n_configs)
    ]


def tune_feature(
    fabric: Fabric,
    b2_neuron: B2Neuron,
    pattern_a: SpikePattern,
    pattern_b: SpikePattern,
    n_configs: int = 200,
    trials_per_pattern: int = 10,
    seed: int = 0,
    dt: float = defaults.B2_DT,
    t_max: float = defaults.T_MAX,
    window: float = defaults.RESPONSE_WINDOW,
    workers: int = 1,
    strict: bool = True,
) -> list[TuningOutcome]:
    """Random search over slot assignments for one that answers A and ignores B.

    All assignments are drawn up front from ``seed``; each is evaluated on an
    independent reset neuron, ``trials_per_pattern`` times per pattern.  The
    neuron is left bound on the first successful assignment, or on its
    original one when none succeeds.
    """
    if n_configs < 1:
        raise PreconditionError("n_configs must be >= 1")
    if pattern_a.k != b2_neuron.k or pattern_b.k != b2_neuron.k:
        raise PreconditionError("patterns do not match the neuron's fan-in")
    if b2_neuron.fabric is not fabric:
        raise PreconditionError("b2_neuron is bound on a different fabric")
    rng = np.random.default_rng(seed)
    assignments = draw_assignments(rng, b2_neuron.k, n_configs)
    configs = [config_for(fabric, b2_neuron.address, a, b2_neuron.balance, b2_neuron.forward_nominal)
               for a in assignments]
    T = trials_per_pattern
    # rows: config-major, then pattern A trials, then pattern B trials
    per_cfg = np.concatenate([np.tile(pattern_a.lateral, (T, 1)), np.tile(pattern_b.lateral, (T, 1))])
    lat = np.tile(per_cfg, (n_configs, 1))
    idx = np.repeat(np.arange(n_configs), 2 * T)
    counts = present_parallel(configs, lat, dt, t_max, window, idx, workers=workers).reshape(n_configs, 2 * T)
    outcomes = []
    for c, a in enumerate(assignments):
        ca, cb = counts[c, :T], counts[c, T:]
        outcomes.append(TuningOutcome(c, a, tuple(int(x) for x in ca), tuple(int(x) for x in cb),
                                      _judge(ca, cb, strict)))
    winners = [o for o in outcomes if o.success]
    if winners:
        b2_neuron.rebind(winners[0].assignment)
    return outcomes


def replay(fabric: Fabric, b2_neuron: B2Neuron, outcome: TuningOutcome, pattern_a: SpikePattern,
           pattern_b: SpikePattern, trials_per_pattern: int = 10, dt: float = defaults.B2_DT,
           t_max: float = defaults.T_MAX, window: float = defaults.RESPONSE_WINDOW) -> TuningOutcome:
    """Re-run one configuration from its slot list by actually rebinding the CAM."""
    b2_neuron.rebind(outcome.assignment)
    cfg = b2_neuron.config()
    T = trials_per_pattern
    lat = np.concatenate([np.tile(pattern_a.lateral, (T, 1)), np.tile(pattern_b.lateral, (T, 1))])
    counts = present(cfg, lat, dt, t_max, window)
    ca, cb = counts[:T], counts[T:]
    return TuningOutcome(outcome.index, outcome.assignment, tuple(int(x) for x in ca),
                         tuple(int(x) for x in cb), _judge(ca, cb))


def tuning_csv(outcomes: Sequence[TuningOutcome]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    k = outcomes[0].assignment.k if outcomes else 0
    head = ["config", "forward_slot"]
    for c in range(1, k + 1):
        head += [f"exc{c}_slot", f"inh{c}_slot"]
    w.writerow(head + ["spikes_a", "spikes_b", "success"])
    for o in sorted(outcomes, key=lambda o: o.index):
        w.writerow([o.index, *o.assignment.slots, sum(o.counts_a), sum(o.counts_b), int(o.success)])
    return buf.getvalue()


def successes_text(outcomes: Sequence[TuningOutcome]) -> str:
    """Successful slot lists, grouped like ``f (e,i) (e,i) ...``."""
    lines = [f"{o.index}: {o.assignment.label()}" for o in outcomes if o.success]
    return "\n".join(lines) + ("\n" if lines else "")
