"""Default nominal parameters, collected in one place.

The emulated hardware's bias settings are unknown, so every number here is a
modelling choice.  The only temporal anchor is the 1-50 ms window of lateral
spike times used for receptive-field mapping; the E-I balance is chosen so
that the net-excitation peaks of mismatched elements fall well inside it.
"""

from __future__ import annotations

from .dynamics import AdExParams, DpiParams, SynapseType
from .ei import Balance

#: integration step (ms)
DT = 0.1
#: step for runs that integrate B2 neurons; their 2 ms membrane, once
#: mismatched, can fall below 1 ms, where DT would break the stability guard
B2_DT = 0.05
#: lateral spike window before the forward spike (ms)
T_MIN = 1.0
T_MAX = 50.0
#: output spikes in [0, RESPONSE_WINDOW] ms after the forward spike count as a response
RESPONSE_WINDOW = 100.0

#: generic neuron (tau_m = 20 ms)
NEURON = AdExParams()

#: B2 coincidence detector: a leaky, 2 ms membrane without adaptation, so
#: that the membrane filter does not drag the response away from the lateral
#: current peaks
B2_NEURON = AdExParams(C=200.0, g_L=100.0, a=0.0)

#: forward A -> B2 synapse
FORWARD = DpiParams(tau_syn=12.5, I_w=580.0, syn_type=SynapseType.FAST_EXC)

#: lateral E-I element
BALANCE = Balance(tau_inh=2.5, tau_exc=40.0, ratio=300.0, weight_exc=1200.0)

#: B1 -> own B2 inhibition, only bound when that option is enabled
B1_INHIBITION = DpiParams(tau_syn=5.0, I_w=2000.0, syn_type=SynapseType.SUB_INH)

#: STC delay neuron: one spike per input spike, the refractory period
#: outlasting the input current so that no second spike follows
RELAY_NEURON = AdExParams(t_ref=10.0)
RELAY_SYNAPSE = DpiParams(tau_syn=2.0, I_w=10000.0, syn_type=SynapseType.FAST_EXC)
#: STC terminal synapse from a delay neuron onto B2
STC_LATERAL = DpiParams(tau_syn=10.0, I_w=300.0, syn_type=SynapseType.SLOW_EXC)
