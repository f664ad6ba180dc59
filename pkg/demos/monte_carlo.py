"""
Monte-Carlo EMI and the residual term
=====================================

Average log-det over Rayleigh fading and compare with the deterministic
value.  The gap is large for very sparse codes and vanishes when dense.
"""

import math

from scipy import special

from ldsnoma import (RandomStream, Scenario, SpreadingMatrix, dense_spreading,
                     det_emi, epsilon_stats, make_drop, mc_emi)

# Scalar check: E log(1 + |g|^2) with g ~ CN(0, 1) is e * E1(1).
est = mc_emi(Scenario.symmetric(1, 1, 1), SpreadingMatrix([[1.0]]), 100_000, RandomStream(0))
print(f"scalar: {est.mean:.5f} +/- {est.stderr:.5f}  exact {math.e * special.exp1(1.0):.5f}")

# Dense spreading on a drop: Monte Carlo and deterministic almost coincide.
scn = make_drop(20, 40, 2, RandomStream(3))
V = dense_spreading(scn)
est = mc_emi(scn, V, 500, RandomStream(4))
print(f"dense: mc {est.mean:.4f} +/- {est.stderr:.4f}, det {det_emi(scn, V):.4f} nats")

# Residual term eps = mc - det over random codes of sparsity d.
for d in (1, 2, 4, 20):
    st = epsilon_stats(scn, d, n_matrices=20, trials_per_matrix=200, rng=RandomStream(5))
    print(f"d = {d:2d}: mean eps = {st.mean_eps:+.4f} +/- {st.mean_stderr:.4f} nats")
