"""
Greedy sparse allocation
========================

Fragments sorted by value are dropped onto the least-loaded sub-channel a
UE is not already using.  Compare with an exhaustive search on a toy
instance, then look at a full-size drop.
"""

import numpy as np

from ldsnoma import (Fragment, RandomStream, brute_force_partition, certificate,
                     greedy_assign, greedy_partition, make_drop, random_spreading,
                     regular_spreading)
from ldsnoma.allocator import graham_bound

# Toy instance: three UEs, one fragment each, two sub-channels.
state = greedy_assign([3.0, 2.0, 2.0], [1, 1, 1], F=2)
print("greedy loads:", state.eta)
opt = brute_force_partition([Fragment(k, v, 1.0) for k, v in enumerate([3.0, 2.0, 2.0])], 2)
print("best max load:", opt, " bound:", graham_bound(2) * opt)

# 150 UEs on 50 sub-channels with d = 2.
scn = make_drop(50, 150, 2, RandomStream(7))
for name, V in [("greedy", greedy_partition(scn)),
                ("regular", regular_spreading(scn)),
                ("random", random_spreading(scn, RandomStream(8)))]:
    eta = certificate(scn, V).eta
    print(f"{name:8s} eta max/min = {eta.max() / eta.min():10.3f}")

# Every UE ends up on exactly d sub-channels.
V = greedy_partition(scn)
print("fragments per UE:", np.unique(np.count_nonzero(V.V, axis=0)))
