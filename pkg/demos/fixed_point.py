"""
Deterministic EMI from the coupled fixed point
==============================================

Solve for (r, r~) on a random drop, check the result against the common
value r* that every optimal code shares, and read off the load balance.
"""

import numpy as np

from ldsnoma import (RandomStream, certificate, dense_spreading, det_emi,
                     greedy_partition, make_drop, solve_fixed_point, solve_r_star)

# A drop: 20 sub-channels, 40 UEs, each UE spreads over 2 of them.
scn = make_drop(20, 40, 2, RandomStream(1))

# Dense spreading puts P/F on every sub-channel.  Its fixed point is flat
# and equals r*.
V = dense_spreading(scn)
fp = solve_fixed_point(scn, V)
print("iterations:", fp.iterations)
print("spread of r_f:", np.ptp(fp.r))
print("r* from the scalar equation:", solve_r_star(scn), "vs", fp.r[0])

# Rates are in nats per sub-channel use.
print("dense det EMI (nats):", det_emi(scn, V, fp))

# The greedy sparse code targets the same optimum.  Its weighted loads
# eta_f should sit close to 1/r* - 1.
G = greedy_partition(scn)
cert = certificate(scn, G)
print("greedy det EMI (nats):", det_emi(scn, G))
print("eta max/min:", cert.eta.max() / cert.eta.min())
print("target 1/r* - 1:", 1 / cert.r_star - 1, " mean eta:", cert.eta.mean())
