#!/usr/bin/env python3
# %% [markdown]
# # E-I delay elements on a mismatched fabric
#
# A fast inhibitory and a slow excitatory synapse driven by the same source
# spike sum to a current that is negative first and positive later.  The
# time of the sign change acts as a transmission delay.  Mismatch spreads
# those delays across elements.

# %%
import numpy as np

from dstc import defaults
from dstc.ei import Balance, analytic_zero_crossing, characterize_delay, delay_distribution, make_ei_element, net_psc
from dstc.fabric import CircuitAddress, Fabric, MismatchModel

# %% [markdown]
# ## One element without mismatch

# %%
fab = Fabric(MismatchModel(cv=0.0))
el = make_ei_element(fab, pre_id=0, post_addr=CircuitAddress(0, 0, 0), exc_slot=1, inh_slot=2,
                     balance=defaults.BALANCE)
prof = characterize_delay(el, dt=0.01)
b = defaults.BALANCE
print(f"zero crossing {prof.delay:.3f} ms (closed form "
      f"{analytic_zero_crossing(b.tau_inh, b.tau_exc, b.ratio * b.weight_exc, b.weight_exc):.3f} ms)")
print(f"rebound peak {prof.peak_time:.3f} ms, {prof.peak_amplitude:.1f} pA")

t = np.arange(0.0, 80.0, 5.0)
for ti, i in zip(t, net_psc(el, t)):
    print(f"{ti:5.1f} ms  {i:10.2f} pA")

# %% [markdown]
# ## Spread across 256 mismatched elements

# %%
dd = delay_distribution(Fabric(MismatchModel(cv=0.2, seed=0)), 256, defaults.BALANCE, 0.01)
print(f"n={dd.n}  mean={dd.mean:.2f} ms  sd={dd.sd:.2f} ms  skew={dd.skewness:.2f}")
counts, edges = np.histogram(dd.delays, bins=12)
for c, lo, hi in zip(counts, edges, edges[1:]):
    print(f"{lo:6.2f}-{hi:6.2f} ms  {'#' * c}")

# %% [markdown]
# A larger inhibitory weight ratio pushes the crossing later.

# %%
for ratio in (50.0, 150.0, 300.0, 600.0):
    bal = Balance(b.tau_inh, b.tau_exc, ratio, b.weight_exc)
    print(f"ratio {ratio:5.0f}: {analytic_zero_crossing(bal.tau_inh, bal.tau_exc, ratio * bal.weight_exc, bal.weight_exc):.2f} ms")
