#!/usr/bin/env python3
# %% [markdown]
# # Receptive fields of B2 coincidence detectors
#
# Random lateral spike patterns are presented before a forward spike; every
# pattern that makes B2 fire is kept.  The per-channel medians of the kept
# patterns estimate which lateral timing each neuron prefers.

# %%
import numpy as np

from dstc import experiments as ex
from dstc.ei import DelayProfile
from dstc.fabric import Fabric, MismatchModel

# %%
fab = Fabric(MismatchModel(cv=0.2, seed=0))
neurons = [ex.build_b2(fab, 4) for _ in range(4)]

for n, b2 in enumerate(neurons):
    rf = ex.map_receptive_field(b2, 2000, seed=0)
    profiles = b2.config().profiles()
    peaks = [p.peak_time if isinstance(p, DelayProfile) else np.nan for p in profiles]
    crossings = [p.delay if isinstance(p, DelayProfile) else np.nan for p in profiles]
    print(f"neuron {n}: {rf.n_accepted}/{rf.n_trials} patterns accepted")
    print("  channel  -median  peak  crossing")
    for ch, (m, pk, zc) in enumerate(zip(-rf.medians(), peaks, crossings), start=1):
        print(f"  {ch:7d}  {m:7.2f}  {pk:5.2f}  {zc:8.2f}")

# %% [markdown]
# The boxplot table for one neuron, as written by `dstc map-rf`:

# %%
print(ex.rf_report(ex.map_receptive_field(neurons[0], 2000, seed=0)))
