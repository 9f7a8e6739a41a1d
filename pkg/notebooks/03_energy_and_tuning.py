#!/usr/bin/env python3
# %% [markdown]
# # Lateral energy and feature tuning
#
# A relayed lateral spike costs a full spike path through a delay neuron.
# Folding the delay into the synapse leaves only two CAM matches.

# %%
from dstc import experiments as ex
from dstc import network as nw
from dstc.energy import OpKind, Variant, column_activation_energy, lateral_spike_energy
from dstc.fabric import Fabric, MismatchModel

# %%
for v in Variant:
    print(f"{v.value:5s} lateral spike {lateral_spike_energy(v):5d} pJ")
print(" k   STC pJ  dSTC pJ")
for k in range(0, 9, 2):
    print(f"{k:2d}  {column_activation_energy('STC', k):7d}  {column_activation_energy('dSTC', k):7d}")

# %% [markdown]
# The simulated networks charge the same operations event by event.

# %%
for build in (nw.build_stc, nw.build_dstc):
    net = build(Fabric(MismatchModel(cv=0.2, seed=0)), 5, 4)
    res = nw.simulate(net, {0: [10.0], 2: [25.0]}, 120.0)
    print(net.variant.value, {op.value: res.ledger.count(op) for op in OpKind}, res.ledger.total_pj, "pJ")

# %% [markdown]
# ## Random search over synapse slots
#
# Resampling which CAM slots hold the forward and lateral synapses redraws
# their mismatch.  A configuration succeeds when pattern A always evokes a
# spike and the rotated pattern B never does.

# %%
fab = Fabric(MismatchModel(cv=0.2, seed=0))
b2 = ex.build_b2(fab, 4)
pa, pb = ex.tuning_patterns(b2)
out = ex.tune_feature(fab, b2, pa, pb, n_configs=200, trials_per_pattern=10, seed=0)
print(f"{sum(o.success for o in out)} of {len(out)} configurations separate A from B")
print(ex.successes_text(out))
