"""Deterministic equivalent of the ergodic mutual information.

Everything here is in nats; conversion to bits happens in the harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Scenario, SpreadingMatrix

__all__ = [
    "ConvergenceError",
    "FixedPointSolution",
    "OptimalityCertificate",
    "solve_fixed_point",
    "det_emi",
    "solve_r_star",
    "r_star_from_loads",
    "certificate",
    "optimal_det_emi",
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITER",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000
# r* can be ~1e-3 at high load while eta ~ 1/r*, so r* is bracketed relative
# to its own size, down to a few ulps.
R_STAR_RTOL = 4 * np.finfo(float).eps


class ConvergenceError(RuntimeError):
    """Fixed-point iteration hit ``max_iter`` before reaching ``tol``."""

    def __init__(self, iterations: int, residual: float, tol: float):
        self.iterations = iterations
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"fixed point did not converge in {iterations} iterations "
            f"(last max update {residual:.3e}, tol {tol:.1e})")


@dataclass(frozen=True, eq=False)
class FixedPointSolution:
    r: np.ndarray          # per sub-channel, length F
    r_tilde: np.ndarray    # per UE, length K
    iterations: int
    final_residual: float


@dataclass(frozen=True, eq=False)
class OptimalityCertificate:
    """Quantities that certify whether V maximizes the deterministic EMI.

    V is an exact maximizer iff both residual vectors vanish.
    """

    r_star: float
    r_tilde_star: np.ndarray
    beta: np.ndarray
    eta: np.ndarray
    subchannel_residuals: np.ndarray
    power_residuals: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(max(np.max(np.abs(self.subchannel_residuals)),
                         np.max(np.abs(self.power_residuals))))


def _loads(scn: Scenario, V: SpreadingMatrix) -> np.ndarray:
    """(1/sigma^2) a_k^2 v_{f,k}, the per-entry SNR load."""
    V.check_conforms(scn)
    return V.V * (scn.gain / scn.noise_power)


def solve_fixed_point(scn: Scenario, V: SpreadingMatrix, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER,
                      damping: float = 0.0) -> FixedPointSolution:
    """Solve the coupled equations for ``r`` (sub-channels) and ``r_tilde`` (UEs).

    Alternating sweeps starting from ``r_tilde = 1``::

        r_f       <- 1 / (1 + sum_k S_{f,k} r_tilde_k)
        r_tilde_k <- 1 / (1 + sum_f S_{f,k} r_f)

    with ``S = a_k^2 v_{f,k} / sigma^2``.  Iteration stops once the largest
    absolute change of any entry in a sweep is below ``tol``.

    Parameters
    ----------
    damping : float
        Weight in [0, 1) kept from the previous iterate; 0 means undamped.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` sweeps do not reach ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    S = _loads(scn, V)
    r = np.ones(scn.F)
    rt = np.ones(scn.K)
    resid = np.inf
    for it in range(1, max_iter + 1):
        r_new = 1.0 / (1.0 + S @ rt)
        if damping:
            r_new = damping * r + (1 - damping) * r_new
        rt_new = 1.0 / (1.0 + r_new @ S)
        if damping:
            rt_new = damping * rt + (1 - damping) * rt_new
        resid = max(np.max(np.abs(r_new - r)), np.max(np.abs(rt_new - rt)))
        r, rt = r_new, rt_new
        if resid < tol:
            return FixedPointSolution(r, rt, it, float(resid))
    raise ConvergenceError(max_iter, float(resid), tol)


def det_emi(scn: Scenario, V: SpreadingMatrix,
            fp: FixedPointSolution | None = None) -> float:
    """Deterministic-equivalent EMI in nats per sub-channel use.

    ``fp`` is solved on demand when omitted.
    """
    if fp is None:
        fp = solve_fixed_point(scn, V)
    S = _loads(scn, V)
    r, rt = fp.r, fp.r_tilde
    ue_term = np.log1p(r @ S).sum()
    sc_term = np.log1p(S @ rt).sum()
    cross = r @ S @ rt
    return float((ue_term + sc_term - cross) / scn.F)


def r_star_from_loads(snr: np.ndarray, F: int, tol: float = R_STAR_RTOL) -> float:
    """Root of r = (1 + (1/F) sum_k s_k / (1 + s_k r))^-1 on (0, 1].

    ``snr`` holds s_k = P_k a_k^2 / sigma^2.  Bisection is run on
    ``1 - r - (1/F) sum_k s_k r / (1 + s_k r)``, which is strictly decreasing
    on [0, 1] and has the same positive root.  A few plain fixed-point steps
    shrink the bracket first.  ``tol`` is relative to the bracket's upper end.
    """
    snr = np.asarray(snr, dtype=float)
    if snr.size == 0:
        return 1.0

    def h(r):
        return 1.0 - r - np.sum(snr * r / (1.0 + snr * r)) / F

    lo, hi = 0.0, 1.0
    if h(hi) >= 0:
        return 1.0
    # Fixed-point accelerator; each iterate is kept only if it tightens the bracket.
    r = 1.0
    for _ in range(50):
        r = 1.0 / (1.0 + np.sum(snr / (1.0 + snr * r)) / F)
        hr = h(r)
        if hr > 0:
            lo = max(lo, r)
        elif hr < 0:
            hi = min(hi, r)
        else:
            return float(r)
        if hi - lo < tol * hi:
            break
    while hi - lo >= tol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def solve_r_star(scn: Scenario, tol: float = R_STAR_RTOL) -> float:
    """Common sub-channel value r* shared by every maximizer of the det. EMI."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    return r_star_from_loads(scn.power * scn.gain / scn.noise_power, scn.F, tol)


def certificate(scn: Scenario, V: SpreadingMatrix,
                tol: float = R_STAR_RTOL) -> OptimalityCertificate:
    """Evaluate the optimality system for ``V``.

    Power residuals are ``sum_f v_{f,k} - P_k`` (correctly rounded sums);
    sub-channel residuals are
    ``eta_f - (1/r* - 1)`` with ``eta_f = sum_k beta_k v_{f,k}``.
    """
    V.check_conforms(scn)
    rs = solve_r_star(scn, tol)
    s2, a2, P = scn.noise_power, scn.gain, scn.power
    beta = a2 / (s2 + P * a2 * rs)
    rt_star = s2 / (s2 + P * a2 * rs)
    eta = V.V @ beta
    return OptimalityCertificate(
        r_star=rs,
        r_tilde_star=rt_star,
        beta=beta,
        eta=eta,
        subchannel_residuals=eta - (1.0 / rs - 1.0),
        power_residuals=np.array([math.fsum(col) for col in V.V.T]) - P,
    )


def optimal_det_emi(scn: Scenario, tol: float = R_STAR_RTOL) -> float:
    """Maximum of the deterministic EMI over all power-feasible matrices.

    Depends on r* and r_tilde* only, so no matrix is needed.
    """
    rs = solve_r_star(scn, tol)
    s2, a2, P = scn.noise_power, scn.gain, scn.power
    rt = s2 / (s2 + P * a2 * rs)
    val = (-np.log(rt).sum() / scn.F - np.log(rs)
           - rs / (s2 * scn.F) * np.sum(P * a2 * rt))
    return float(val)
