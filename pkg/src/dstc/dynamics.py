"""AdEx neuron and DPI synapse dynamics.

Units follow the usual AdEx convention: potentials in mV, currents in pA,
capacitance in pF, conductances in nS and time in ms (so ``C / g_L`` is a
time constant in ms and ``I / C`` a slope in mV/ms).

The neuron takes explicit one-step updates: an exponential (Rosenbrock)
Euler step for the membrane and forward Euler for the adaptation current,
under a stability guard on ``dt``.  Synaptic currents are first order
low-pass filters of instantaneous spike-triggered current jumps and are
advanced with the exact exponential update, so their value at the grid
points does not depend on ``dt``; the neuron sees their exact mean over each
step, including events that arrive mid-step.

Scalar, value-semantics step functions (:func:`adex_step`, :func:`dpi_step`,
:func:`dpi_inject`) sit next to :func:`integrate`, the vectorized driver used
by the network and experiment layers.  Both go through the same neuron
update, :func:`_advance`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import IntegrationDivergenceError, PreconditionError


class SynapseType(str, enum.Enum):
    """The four DPI synapse types available per input circuit."""

    FAST_EXC = "fast_exc"
    SLOW_EXC = "slow_exc"
    SUB_INH = "sub_inh"
    SHUNT_INH = "shunt_inh"

    @property
    def sign(self) -> int:
        return 1 if self in (SynapseType.FAST_EXC, SynapseType.SLOW_EXC) else -1

    @property
    def excitatory(self) -> bool:
        return self.sign > 0


@dataclass(frozen=True)
class AdExParams:
    """Parameters of one adaptive exponential integrate-and-fire circuit."""

    C: float = 200.0
    g_L: float = 10.0
    E_L: float = -70.0
    delta_T: float = 2.0
    V_T: float = -50.0
    V_peak: float = -40.0
    V_r: float = -70.0
    a: float = 2.0
    tau_w: float = 100.0
    b: float = 20.0
    t_ref: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise PreconditionError(f"AdExParams.{f.name} must be finite, got {v}")
        for name in ("delta_T", "tau_w", "C", "g_L"):
            if getattr(self, name) <= 0:
                raise PreconditionError(f"AdExParams.{name} must be > 0")
        if self.t_ref < 0:
            raise PreconditionError("AdExParams.t_ref must be >= 0")
        if not self.V_r < self.V_peak:
            raise PreconditionError("AdExParams requires V_r < V_peak")

    @property
    def tau_m(self) -> float:
        """Membrane time constant ``C / g_L`` in ms."""
        return self.C / self.g_L

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class NeuronState:
    """Membrane potential, adaptation current and refractory deadline.

    ``t`` is the time the state refers to; :func:`adex_step` advances it.
    """

    V: float
    w: float = 0.0
    refractory_until: float = -math.inf
    t: float = 0.0

    @classmethod
    def rest(cls, p: AdExParams, t: float = 0.0) -> "NeuronState":
        return cls(V=p.E_L, w=0.0, t=t)


@dataclass(frozen=True)
class DpiParams:
    """A DPI synapse: time constant (ms), unsigned weight gain (pA) and type."""

    tau_syn: float
    I_w: float
    syn_type: SynapseType = SynapseType.FAST_EXC

    def __post_init__(self):
        if not (self.tau_syn > 0 and math.isfinite(self.tau_syn)):
            raise PreconditionError(f"DpiParams.tau_syn must be > 0, got {self.tau_syn}")
        if not (self.I_w >= 0 and math.isfinite(self.I_w)):
            raise PreconditionError(f"DpiParams.I_w must be >= 0, got {self.I_w}")
        object.__setattr__(self, "syn_type", SynapseType(self.syn_type))

    @property
    def signed_gain(self) -> float:
        return self.syn_type.sign * self.I_w


@dataclass(frozen=True)
class SynapseState:
    """Instantaneous (unsigned) postsynaptic current of one DPI circuit."""

    I_syn: float = 0.0


def dpi_inject(s: SynapseState, p: DpiParams) -> SynapseState:
    """Add one presynaptic spike: the current jumps by ``I_w``."""
    if p.I_w == 0:
        return s
    return SynapseState(s.I_syn + p.I_w)


def dpi_step(s: SynapseState, p: DpiParams, dt: float) -> SynapseState:
    """Exact exponential decay of the synaptic current over ``dt``."""
    if dt <= 0:
        raise PreconditionError(f"dt must be > 0, got {dt}")
    return SynapseState(s.I_syn * math.exp(-dt / p.tau_syn))


def check_step_size(p, dt: float) -> None:
    """Stability guard: ``dt`` at most a tenth of both the adaptation and membrane time constants."""
    if not dt > 0:
        raise PreconditionError(f"dt must be > 0, got {dt}")
    tau_w = np.min(p.tau_w)
    tau_m = np.min(np.asarray(p.C) / np.asarray(p.g_L))
    if dt > tau_w / 10 or dt > tau_m / 10:
        raise PreconditionError(
            f"dt={dt} ms exceeds the stability guard (tau_w/10={tau_w / 10:.4g}, "
            f"tau_m/10={tau_m / 10:.4g})"
        )


def _phi1(z):
    """``(exp(z) - 1) / z`` with its series near zero."""
    small = np.abs(z) < 1e-5
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(safe) / safe)


def _advance(V, w, refr, t, I, p, dt):
    """One explicit step of the AdEx equations; works on scalars or arrays.

    ``I`` is the input current averaged over the step.  The membrane uses an
    exponential (Rosenbrock) Euler step: the right-hand side is linearized
    around the current potential, which integrates the leak exactly and keeps
    the exponential upswing stable.  A neuron whose refractory period ends
    inside the step integrates only the remainder.  The adaptation current
    takes a forward-Euler step.  Returns ``(V, w, refractory_until, spiked,
    spike_time)``; the spike time is linearly interpolated inside the step.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if not np.all(np.isfinite(I)):
            raise IntegrationDivergenceError("I_in", I)
        t_next = t + dt
        clamped = t_next <= refr
        partial = (t < refr) & ~clamped
        h = np.where(partial, t_next - refr, dt)
        V0 = np.where(t < refr, p.V_r, V)
        ex = np.exp((V0 - p.V_T) / p.delta_T)
        f = (-p.g_L * (V0 - p.E_L) + p.g_L * p.delta_T * ex - w + I) / p.C
        J = p.g_L * (ex - 1.0) / p.C
        V1 = V0 + h * _phi1(h * J) * f
        w1 = w + dt * (p.a * (V0 - p.E_L) - w) / p.tau_w
        # an overflowing upswing is a spike at the start of the step
        V1 = np.where(np.isnan(V1) | (V1 == np.inf), np.inf, V1)
        V1 = np.where(clamped, p.V_r, V1)
        spiked = ~clamped & (V1 >= p.V_peak)
        frac = np.where(np.isinf(V1), 0.0, np.clip((p.V_peak - V0) / (V1 - V0), 0.0, 1.0))
        t_spike = np.where(spiked, t_next - h + frac * h, np.nan)
        V1 = np.where(spiked, p.V_r, V1)
        w1 = w1 + np.where(spiked, p.b, 0.0)
        refr = np.where(spiked, t_spike + p.t_ref, refr)
    if not np.all(np.isfinite(V1)):
        raise IntegrationDivergenceError("V", V1)
    if not np.all(np.isfinite(w1)):
        raise IntegrationDivergenceError("w", w1)
    return V1, w1, refr, spiked, t_spike


def adex_step(
    state: NeuronState, I_in: float, p: AdExParams, dt: float
) -> tuple[NeuronState, bool]:
    """Advance one neuron by ``dt`` under a constant input current ``I_in``."""
    check_step_size(p, dt)
    for name in ("V", "w"):
        if not math.isfinite(getattr(state, name)):
            raise IntegrationDivergenceError(name, getattr(state, name))
    V, w, refr, spiked, _ = _advance(
        state.V, state.w, state.refractory_until, state.t, float(I_in), p, dt
    )
    new = NeuronState(V=float(V), w=float(w), refractory_until=float(refr), t=state.t + dt)
    return new, bool(spiked)


class AdExArrays(NamedTuple):
    """AdEx parameters as broadcastable arrays, one entry per simulated circuit."""

    C: np.ndarray
    g_L: np.ndarray
    E_L: np.ndarray
    delta_T: np.ndarray
    V_T: np.ndarray
    V_peak: np.ndarray
    V_r: np.ndarray
    a: np.ndarray
    tau_w: np.ndarray
    b: np.ndarray
    t_ref: np.ndarray

    @classmethod
    def stack(cls, params: Sequence[AdExParams]) -> "AdExArrays":
        return cls(*(np.array([getattr(p, f) for p in params], dtype=float) for f in cls._fields))


@dataclass
class SpikeRecord:
    """Output spikes of :func:`integrate` as parallel arrays sorted by time."""

    batch: np.ndarray
    neuron: np.ndarray
    times: np.ndarray
    n_batch: int
    n_neurons: int
    trace_t: np.ndarray | None = None
    trace_V: np.ndarray | None = None
    trace_I: np.ndarray | None = None

    def counts(self) -> np.ndarray:
        """Spike counts with shape ``(n_batch, n_neurons)``."""
        out = np.zeros((self.n_batch, self.n_neurons), dtype=int)
        np.add.at(out, (self.batch, self.neuron), 1)
        return out

    def times_of(self, batch: int = 0, neuron: int = 0) -> list[float]:
        sel = (self.batch == batch) & (self.neuron == neuron)
        return self.times[sel].tolist()


def _grid_index(times, t_start, dt):
    # step n covers [t_start + n dt, t_start + (n+1) dt); the small offset keeps
    # events that sit exactly on a grid point in the step they open
    return np.floor((np.asarray(times, dtype=float) - t_start) / dt + 1e-9).astype(np.int64)


def integrate(
    neurons: AdExParams | AdExArrays,
    tau_syn: np.ndarray,
    gain: np.ndarray,
    sign: np.ndarray,
    target: np.ndarray,
    n_neurons: int,
    events: tuple[np.ndarray, np.ndarray, np.ndarray],
    t_start: float,
    t_stop: float,
    dt: float,
    n_batch: int = 1,
    routes: Mapping[int, np.ndarray] | None = None,
    record: bool = False,
) -> SpikeRecord:
    """Simulate ``n_batch`` independent copies of a small circuit.

    Parameters
    ----------
    neurons
        AdEx parameters, scalar or broadcastable to ``(n_batch, n_neurons)``.
    tau_syn, gain
        Synapse time constants and unsigned gains, broadcastable to
        ``(n_batch, n_synapses)``; per-row values let each batch row carry a
        different configuration.
    sign, target
        Per-synapse sign (+1/-1) and postsynaptic neuron index.
    events
        ``(batch_index, synapse_index, time)`` arrays of external presynaptic
        spikes.
    routes
        Optional internal wiring: spikes of neuron ``j`` are delivered to the
        synapses ``routes[j]`` of the same batch row at the spike time.
    record
        Keep membrane and synaptic-current traces (small runs only).

    All neurons start at rest at ``t_start``.
    """
    check_step_size(neurons, dt)
    tau_syn = np.asarray(tau_syn, dtype=float)
    gain = np.asarray(gain, dtype=float)
    sign = np.asarray(sign, dtype=float)
    target = np.asarray(target, dtype=np.int64)
    n_syn = target.shape[0]
    shape_s = (n_batch, n_syn)
    tau_b = np.broadcast_to(tau_syn, shape_s)
    gain_b = np.broadcast_to(gain, shape_s)
    decay = np.exp(-dt / tau_b)
    incidence = np.zeros((n_syn, n_neurons))
    incidence[np.arange(n_syn), target] = sign

    n_steps = int(math.ceil((t_stop - t_start) / dt - 1e-9))
    eb, es, et = (np.asarray(x) for x in events)
    if et.size:
        order = np.argsort(et, kind="stable")
        eb, es, et = eb[order].astype(np.int64), es[order].astype(np.int64), et[order].astype(float)
        estep = _grid_index(et, t_start, dt)
        keep = (estep >= 0) & (estep < n_steps)
        eb, es, et, estep = eb[keep], es[keep], et[keep], estep[keep]
        bounds = np.searchsorted(estep, np.arange(n_steps + 1))
    else:
        bounds = np.zeros(n_steps + 1, dtype=np.int64)

    p = neurons
    E_L = np.broadcast_to(np.asarray(p.E_L, dtype=float), (n_batch, n_neurons))
    V = E_L.copy()
    w = np.zeros((n_batch, n_neurons))
    refr = np.full((n_batch, n_neurons), -np.inf)
    I_syn = np.zeros(shape_s)

    out_b, out_n, out_t = [], [], []
    if record:
        tr_V = np.empty((n_steps + 1, n_batch, n_neurons))
        tr_I = np.empty((n_steps + 1, n_batch, n_syn))
        tr_V[0], tr_I[0] = V, I_syn

    # mean of a decaying exponential over one step, per unit starting value
    mean_factor = tau_b / dt * -np.expm1(-dt / tau_b)
    for n in range(n_steps):
        t = t_start + n * dt
        t_next = t + dt
        lo, hi = bounds[n], bounds[n + 1]
        I_mean = I_syn * mean_factor
        if hi > lo:
            # events inside the step contribute from their arrival onwards
            b, s = eb[lo:hi], es[lo:hi]
            tb = tau_b[b, s]
            late = -np.expm1(-(t_next - et[lo:hi]) / tb)
            np.add.at(I_mean, (b, s), gain_b[b, s] * tb / dt * late)
        V, w, refr, spiked, t_spk = _advance(V, w, refr, t, I_mean @ incidence, p, dt)
        I_syn *= decay
        if hi > lo:
            np.add.at(I_syn, (b, s), gain_b[b, s] * np.exp(-(t_next - et[lo:hi]) / tb))
        if spiked.any():
            sb, sn = np.nonzero(spiked)
            ts = t_spk[sb, sn]
            out_b.append(sb)
            out_n.append(sn)
            out_t.append(ts)
            if routes:
                for bi, ni, ti in zip(sb, sn, ts):
                    syns = routes.get(int(ni))
                    if syns is not None and len(syns):
                        I_syn[bi, syns] += gain_b[bi, syns] * np.exp(-(t_next - ti) / tau_b[bi, syns])
        if record:
            tr_V[n + 1], tr_I[n + 1] = V, I_syn

    if out_t:
        bb, nn, tt = np.concatenate(out_b), np.concatenate(out_n), np.concatenate(out_t)
        order = np.lexsort((nn, bb, tt))
        bb, nn, tt = bb[order], nn[order], tt[order]
    else:
        bb = nn = np.zeros(0, dtype=np.int64)
        tt = np.zeros(0)
    rec = SpikeRecord(bb, nn, tt, n_batch, n_neurons)
    if record:
        rec.trace_t = t_start + dt * np.arange(n_steps + 1)
        rec.trace_V, rec.trace_I = tr_V, tr_I
    return rec


@dataclass(frozen=True)
class NeuronSlice:
    """One neuron as seen by :func:`run_neuron`: AdEx params plus its bound synapses."""

    adex: AdExParams
    synapses: Mapping[int, DpiParams] = field(default_factory=dict)


def run_neuron(
    input_events: Iterable[tuple[float, int]],
    fabric_slice: NeuronSlice,
    horizon: float,
    dt: float = 0.1,
) -> list[float]:
    """Simulate a single neuron over ``[0, horizon]`` and return its spike times.

    ``input_events`` are ``(time, slot)`` pairs sorted by time; each slot must
    be bound in ``fabric_slice.synapses``.
    """
    input_events = list(input_events)
    times = [float(t) for t, _ in input_events]
    if any(b < a for a, b in zip(times, times[1:])):
        raise PreconditionError("input events must be sorted by time")
    if times and (times[0] < 0 or times[-1] > horizon):
        raise PreconditionError("input events must lie within [0, horizon]")
    slots = sorted(fabric_slice.synapses)
    index = {s: i for i, s in enumerate(slots)}
    for _, slot in input_events:
        if slot not in index:
            raise PreconditionError(f"slot {slot} is not bound on this neuron")
    syn = [fabric_slice.synapses[s] for s in slots]
    events = (
        np.zeros(len(times), dtype=np.int64),
        np.array([index[s] for _, s in input_events], dtype=np.int64),
        np.array(times, dtype=float),
    )
    rec = integrate(
        fabric_slice.adex,
        tau_syn=np.array([s.tau_syn for s in syn], dtype=float),
        gain=np.array([s.I_w for s in syn], dtype=float),
        sign=np.array([s.syn_type.sign for s in syn], dtype=float),
        target=np.zeros(len(syn), dtype=np.int64),
        n_neurons=1,
        events=events,
        t_start=0.0,
        t_stop=horizon,
        dt=dt,
    )
    return rec.times_of(0, 0)


def scaled(p: AdExParams, **factors: float) -> AdExParams:
    """Return ``p`` with the named fields multiplied by the given factors."""
    return replace(p, **{k: getattr(p, k) * v for k, v in factors.items()})
