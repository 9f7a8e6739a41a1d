"""Balanced excitatory-inhibitory disynaptic elements.

An E-I element is one excitatory and one inhibitory synapse on the same
postsynaptic neuron, both listening to the same presynaptic source.  With a
fast, stronger inhibition and a slower excitation the summed current is
negative right after the presynaptic spike and turns positive later: a
delayed excitation produced without any delay circuit.

For single-exponential synapses the net current is

    I(t) = I_exc exp(-t / tau_exc) - I_inh exp(-t / tau_inh)

which changes sign once, at ``ln(I_inh / I_exc) / (1/tau_inh - 1/tau_exc)``,
and peaks at ``ln(I_inh tau_exc / (I_exc tau_inh)) / (1/tau_inh - 1/tau_exc)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dynamics import DpiParams, SynapseType
from .errors import PreconditionError
from .fabric import CamEntry, CircuitAddress, Fabric, N_SLOTS, virtual_source


@dataclass(frozen=True)
class Balance:
    """Nominal configuration of an E-I element.

    ``ratio`` is the inhibitory to excitatory weight ratio; it has to exceed
    one for the inhibition to lead.
    """

    tau_inh: float = 2.5
    tau_exc: float = 40.0
    ratio: float = 300.0
    weight_exc: float = 1200.0
    exc_type: SynapseType = SynapseType.SLOW_EXC
    inh_type: SynapseType = SynapseType.SUB_INH
    # a rebound smaller than this fraction of weight_exc counts as none
    min_rebound: float = 0.1

    def __post_init__(self):
        if not 0 < self.tau_inh < self.tau_exc:
            raise PreconditionError("balance requires 0 < tau_inh < tau_exc")
        if self.ratio < 1 or self.weight_exc <= 0:
            raise PreconditionError("balance requires ratio >= 1 and weight_exc > 0")
        object.__setattr__(self, "exc_type", SynapseType(self.exc_type))
        object.__setattr__(self, "inh_type", SynapseType(self.inh_type))
        if not (self.exc_type.excitatory and not self.inh_type.excitatory):
            raise PreconditionError("exc_type must be excitatory and inh_type inhibitory")

    @property
    def exc_nominal(self) -> DpiParams:
        return DpiParams(self.tau_exc, self.weight_exc, self.exc_type)

    @property
    def inh_nominal(self) -> DpiParams:
        return DpiParams(self.tau_inh, self.weight_exc * self.ratio, self.inh_type)

    def scaled(self, k: float) -> "Balance":
        """Same balance with both weights multiplied by ``k``."""
        return Balance(self.tau_inh, self.tau_exc, self.ratio, self.weight_exc * k,
                       self.exc_type, self.inh_type, self.min_rebound)


@dataclass(frozen=True)
class EiElement:
    source_id: int
    neuron: CircuitAddress
    exc: CamEntry
    inh: CamEntry
    balance: Balance = field(default_factory=Balance)

    @property
    def slots(self) -> tuple[int, int]:
        return self.exc.slot, self.inh.slot

    @property
    def exc_params(self) -> DpiParams:
        return self.exc.params

    @property
    def inh_params(self) -> DpiParams:
        return self.inh.params


@dataclass(frozen=True)
class DelayProfile:
    """Zero crossing (the delay), peak time and peak amplitude of the net PSC."""

    delay: float
    peak_time: float
    peak_amplitude: float


@dataclass(frozen=True)
class NoRebound:
    """Marker for elements whose net current never turns into a usable excitation."""

    reason: str

    def __bool__(self) -> bool:
        return False


def make_ei_element(
    fabric: Fabric,
    pre_id: int,
    post_addr: CircuitAddress,
    exc_slot: int,
    inh_slot: int,
    balance: Balance | None = None,
) -> EiElement:
    """Bind an E-I pair for ``pre_id`` on two distinct free slots of ``post_addr``."""
    balance = balance or Balance()
    if exc_slot == inh_slot:
        raise PreconditionError("excitatory and inhibitory slots must differ")
    exc = fabric.bind_cam(post_addr, exc_slot, pre_id, balance.exc_type, balance.exc_nominal)
    try:
        inh = fabric.bind_cam(post_addr, inh_slot, pre_id, balance.inh_type, balance.inh_nominal)
    except Exception:
        fabric.unbind(post_addr, exc_slot)
        raise
    return EiElement(pre_id, post_addr.neuron_address(), exc, inh, balance)


def net_psc(element: EiElement, t_grid) -> np.ndarray:
    """Net current ``I_exc(t) - I_inh(t)`` after one presynaptic spike at ``t = 0``."""
    t = np.asarray(t_grid, dtype=float)
    if t.size and (t[0] != 0 or np.any(np.diff(t) <= 0)):
        raise PreconditionError("t_grid must be ascending and start at 0")
    e, i = element.exc_params, element.inh_params
    return e.I_w * np.exp(-t / e.tau_syn) - i.I_w * np.exp(-t / i.tau_syn)


def analytic_zero_crossing(tau_inh: float, tau_exc: float, w_inh: float, w_exc: float) -> float:
    """Closed-form sign change of the two-exponential net current."""
    return math.log(w_inh / w_exc) / (1.0 / tau_inh - 1.0 / tau_exc)


def analytic_peak_time(tau_inh: float, tau_exc: float, w_inh: float, w_exc: float) -> float:
    return math.log(w_inh * tau_exc / (w_exc * tau_inh)) / (1.0 / tau_inh - 1.0 / tau_exc)


def characterize_delay(element: EiElement, dt: float = 0.01) -> DelayProfile | NoRebound:
    """Locate the zero crossing and the peak of the net PSC on a grid of step ``dt``.

    The grid spans ten times the slower time constant.  The crossing is
    linearly interpolated between the bracketing samples and the peak refined
    with a parabola through the three samples around the maximum.
    """
    b = element.balance
    return characterize_pair(element.exc_params, element.inh_params,
                             b.min_rebound * b.weight_exc, dt)


def characterize_pair(
    exc: DpiParams, inh: DpiParams, min_peak: float = 0.0, dt: float = 0.01
) -> DelayProfile | NoRebound:
    """:func:`characterize_delay` for a bare pair of realized synapse parameters."""
    if not 0 < dt <= 0.1:
        raise PreconditionError("characterize_delay needs 0 < dt <= 0.1 ms")
    horizon = 10 * max(exc.tau_syn, inh.tau_syn)
    t = np.arange(int(math.ceil(horizon / dt)) + 1) * dt
    y = exc.I_w * np.exp(-t / exc.tau_syn) - inh.I_w * np.exp(-t / inh.tau_syn)
    if y[0] >= 0:
        return NoRebound("excitation leads: net current is not negative at t=0+")
    pos = np.flatnonzero(y > 0)
    if pos.size == 0:
        return NoRebound("net current never turns positive")
    j = pos[0]
    crossing = t[j - 1] + dt * (-y[j - 1]) / (y[j] - y[j - 1])
    k = j + int(np.argmax(y[j:]))
    peak_t, peak_y = t[k], y[k]
    if 0 < k < len(y) - 1:
        y0, y1, y2 = y[k - 1], y[k], y[k + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            off = 0.5 * (y0 - y2) / denom
            peak_t = t[k] + off * dt
            peak_y = y1 - 0.25 * (y0 - y2) * off
    if peak_y < min_peak:
        return NoRebound(f"rebound peak {peak_y:.4g} below the significance threshold")
    return DelayProfile(float(crossing), float(peak_t), float(peak_y))


@dataclass
class DelaySummary:
    mean: float
    sd: float
    skewness: float
    fraction_no_rebound: float
    n: int
    n_valid: int
    low_confidence: bool
    elements: list[EiElement]
    profiles: list[DelayProfile | NoRebound]

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.profiles if isinstance(p, DelayProfile)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["element", "neuron", "exc_slot", "inh_slot", "delay_ms", "peak_time_ms", "amplitude_pA"])
        for k, (el, p) in enumerate(zip(self.elements, self.profiles)):
            if isinstance(p, DelayProfile):
                vals = [f"{p.delay:.3f}", f"{p.peak_time:.3f}", f"{p.peak_amplitude:.3f}"]
            else:
                vals = ["", "", ""]
            w.writerow([k, str(el.neuron), el.exc.slot, el.inh.slot, *vals])
        return buf.getvalue()


def delay_distribution(
    fabric: Fabric, n: int, balance: Balance | None = None, dt: float = 0.01
) -> DelaySummary:
    """Characterize ``n`` fresh E-I elements and summarize their delays.

    Elements fill free neurons of a private copy of ``fabric`` two slots at a
    time, so the caller's CAM table is left untouched.  Fewer than 30 elements
    are still summarized but flagged ``low_confidence``.
    """
    if n < 1:
        raise PreconditionError("need at least one element")
    balance = balance or Balance()
    fab = fabric.copy()
    per_neuron = N_SLOTS // 2
    elements, profiles = [], []
    neuron = None
    for k in range(n):
        j = k % per_neuron
        if j == 0:
            neuron = fab.allocate_neuron()
        el = make_ei_element(fab, virtual_source(k), neuron, 2 * j, 2 * j + 1, balance)
        elements.append(el)
        profiles.append(characterize_delay(el, dt))
    d = np.array([p.delay for p in profiles if isinstance(p, DelayProfile)])
    sd = float(np.std(d, ddof=1)) if d.size > 1 and np.ptp(d) > 0 else 0.0
    skew = float(stats.skew(d)) if d.size > 2 and sd > 0 else 0.0
    return DelaySummary(
        mean=float(d.mean()) if d.size else math.nan,
        sd=sd,
        skewness=skew,
        fraction_no_rebound=1.0 - d.size / n,
        n=n,
        n_valid=int(d.size),
        low_confidence=n < 30,
        elements=elements,
        profiles=profiles,
    )
