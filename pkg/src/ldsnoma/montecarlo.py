"""Monte-Carlo ergodic mutual information and residual-term statistics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import lapack

from .allocator import random_spreading
from .detequiv import det_emi
from .model import RandomStream, Scenario, SpreadingMatrix, standard_complex_gaussian

__all__ = [
    "NotPositiveDefiniteError",
    "MCEstimate",
    "EpsilonStats",
    "logdet_hermitian",
    "trial_logdets",
    "mc_emi",
    "mc_emi_many",
    "epsilon_stats",
    "DEFAULT_TRIALS",
]

DEFAULT_TRIALS = 1000
CHUNK_TRIALS = 100
HERMITIAN_RTOL = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite: "
                         f"Cholesky pivot {pivot} (0-based) is not positive")


def _potrf(M: np.ndarray) -> np.ndarray:
    fn = lapack.zpotrf if np.iscomplexobj(M) else lapack.dpotrf
    L, info = fn(M, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"LAPACK potrf: illegal argument {-info}")
    return L


def logdet_hermitian(M: np.ndarray, check: bool = True) -> float | np.ndarray:
    """log|M| of a Hermitian positive-definite matrix via Cholesky.

    Accepts a single (n, n) matrix or a stack (..., n, n); stacks return an
    array of log-determinants.

    Raises
    ------
    ValueError
        If ``M`` is not square or not Hermitian to 1e-10 relative.
    NotPositiveDefiniteError
        If a Cholesky pivot is not positive; ``pivot`` names its index.
    """
    M = np.asarray(M)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {M.shape}")
    if check:
        asym = np.max(np.abs(M - np.swapaxes(M.conj(), -1, -2)), initial=0.0)
        scale = np.max(np.abs(M), initial=0.0)
        if asym > HERMITIAN_RTOL * scale:
            raise ValueError(f"matrix is not Hermitian (max asymmetry {asym:.3e})")
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        # Locate the failing pivot for the diagnostic.
        for m in M.reshape((-1,) + M.shape[-2:]):
            _potrf(m)
        raise
    diag = np.diagonal(L, axis1=-2, axis2=-1).real
    out = 2.0 * np.sum(np.log(diag), axis=-1)
    return float(out) if M.ndim == 2 else out


@dataclass(frozen=True, eq=False)
class MCEstimate:
    """Sample mean of per-trial normalized log-determinants (nats).

    ``samples`` keeps the per-trial values so estimates can be pooled exactly.
    """

    mean: float
    stderr: float
    trials: int
    samples: np.ndarray | None = None

    @classmethod
    def from_samples(cls, x: np.ndarray) -> "MCEstimate":
        x = np.asarray(x, dtype=float)
        n = x.size
        mean = math.fsum(x) / n
        if n > 1:
            var = math.fsum((x - mean) ** 2) / (n - 1)
            stderr = math.sqrt(var / n)
        else:
            stderr = 0.0
        return cls(mean, stderr, n, x)

    @classmethod
    def pool(cls, *parts: "MCEstimate") -> "MCEstimate":
        if any(p.samples is None for p in parts):
            raise ValueError("pooling needs estimates that kept their samples")
        return cls.from_samples(np.concatenate([p.samples for p in parts]))


@dataclass(frozen=True)
class EpsilonStats:
    """Residual term eps = J - J_bar over random sparse matrices of one sparsity.

    ``mean_stderr`` is the Monte-Carlo standard error of ``mean_eps``,
    computed from the per-trial average over matrices (all matrices share the
    same fading draws).
    """

    d: int
    mean_eps: float
    var_eps: float
    samples: int
    mean_stderr: float
    mean_det: float
    mean_mc: float


def _scaled_loads(scn: Scenario, V: SpreadingMatrix) -> np.ndarray:
    V.check_conforms(scn)
    return np.sqrt(V.V * (scn.gain / scn.noise_power))


def trial_logdets(scale: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Per-trial (1/F) log|I + H H^H| with H = scale * G.

    ``scale`` is (F, K) with entries a_k sqrt(v_{f,k}) / sigma; ``G`` is
    (T, F, K).  The Gram matrix is formed on the smaller side.
    """
    F, K = scale.shape
    H = G * scale
    if F <= K:
        gram = H @ np.swapaxes(H.conj(), -1, -2)
    else:
        gram = np.swapaxes(H.conj(), -1, -2) @ H
    n = gram.shape[-1]
    idx = np.arange(n)
    gram[..., idx, idx] += 1.0
    # Hermitian by construction; skip the check in the hot loop
    return logdet_hermitian(gram, check=False) / F


def _chunks(first: int, trials: int, size: int):
    t, end = first, first + trials
    while t < end:
        n = min(size, end - t)
        yield t, n
        t += n


def mc_emi_many(scn: Scenario, Vs: Sequence[SpreadingMatrix], trials: int,
                rng: RandomStream, first_trial: int = 0,
                workers: int = 1) -> list[MCEstimate]:
    """Monte-Carlo EMI for several matrices under common fading draws.

    Trial ``t`` uses the fading realization addressed by ``(rng, t)``
    regardless of batching or ``workers``, so results are identical for any
    thread count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    scales = [_scaled_loads(scn, V) for V in Vs]

    def run(chunk):
        t0, n = chunk
        G = standard_complex_gaussian(rng, (scn.F, scn.K), t0, n)
        return [trial_logdets(s, G) for s in scales]

    chunks = list(_chunks(first_trial, trials, CHUNK_TRIALS))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return [MCEstimate.from_samples(np.concatenate([p[i] for p in parts]))
            for i in range(len(Vs))]


def mc_emi(scn: Scenario, V: SpreadingMatrix, trials: int = DEFAULT_TRIALS,
           rng: RandomStream | None = None, first_trial: int = 0,
           workers: int = 1) -> MCEstimate:
    """Ergodic mutual information (nats per sub-channel use) by Monte Carlo.

    Averages ``(1/F) log|I + H H^H / sigma^2|`` over ``trials`` fading
    draws, trials ``first_trial .. first_trial + trials - 1`` of ``rng``.
    """
    if rng is None:
        rng = RandomStream(0)
    return mc_emi_many(scn, [V], trials, rng, first_trial, workers)[0]


def epsilon_stats(scn: Scenario, d: int, n_matrices: int = 1000,
                  trials_per_matrix: int = DEFAULT_TRIALS,
                  rng: RandomStream | None = None,
                  workers: int = 1) -> EpsilonStats:
    """Mean and variance of J - J_bar over random sparse matrices of sparsity d.

    One fixed drop ``scn`` (its sparsity is replaced by ``d``).  Matrix ``i``
    is drawn from ``rng.spawn("matrix", i)``; every matrix is evaluated on the
    same fading trials from ``rng.spawn("fading")``.
    """
    if n_matrices < 2:
        raise ValueError("n_matrices must be >= 2")
    if rng is None:
        rng = RandomStream(0)
    scn_d = scn.with_sparsity(d)
    Vs = [random_spreading(scn_d, rng.spawn("matrix", i)) for i in range(n_matrices)]
    dets = np.array([det_emi(scn_d, V) for V in Vs])
    ests = mc_emi_many(scn_d, Vs, trials_per_matrix, rng.spawn("fading"),
                       workers=workers)
    mcs = np.array([e.mean for e in ests])
    eps = mcs - dets
    per_trial = np.mean(np.stack([e.samples for e in ests]), axis=0)
    pooled = MCEstimate.from_samples(per_trial)
    return EpsilonStats(
        d=int(d),
        mean_eps=math.fsum(eps) / n_matrices,
        var_eps=float(np.var(eps, ddof=1)),
        samples=n_matrices,
        mean_stderr=pooled.stderr,
        mean_det=math.fsum(dets) / n_matrices,
        mean_mc=math.fsum(mcs) / n_matrices,
    )
