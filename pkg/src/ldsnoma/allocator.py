"""Spreading-matrix construction: balanced greedy partitioning and baselines.

Each UE k splits its power into d_k equal fragments of P_k/d_k Watts, each
carrying weight beta_k * P_k / d_k.  Sub-channel loads eta_f are sums of the
fragment weights placed on f; an optimal (in the deterministic sense) matrix
makes all eta_f equal to 1/r* - 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .detequiv import certificate
from .model import RandomStream, Scenario, SpreadingMatrix

__all__ = [
    "Fragment",
    "PartitionState",
    "fragments",
    "greedy_assign",
    "greedy_partition",
    "dense_spreading",
    "regular_spreading",
    "random_spreading",
    "brute_force_partition",
    "graham_bound",
    "build",
    "METHODS",
]

MAX_BRUTE_FRAGMENTS = 14
MAX_BRUTE_F = 4


@dataclass(frozen=True)
class Fragment:
    ue: int
    value: float   # beta_k * P_k / d_k
    power: float   # P_k / d_k, Watts


@dataclass
class PartitionState:
    """Running sub-channel loads while fragments are placed."""

    F: int
    K: int
    eta: np.ndarray = field(init=False)
    occupied: np.ndarray = field(init=False)   # (F, K) bool

    def __post_init__(self):
        self.eta = np.zeros(self.F)
        self.occupied = np.zeros((self.F, self.K), dtype=bool)

    def least_loaded(self, ue: int) -> int:
        """Lowest-index sub-channel of minimum load not yet used by ``ue``."""
        masked = np.where(self.occupied[:, ue], np.inf, self.eta)
        return int(np.argmin(masked))

    def place(self, ue: int, f: int, value: float) -> None:
        if self.occupied[f, ue]:
            raise ValueError(f"UE {ue} already occupies sub-channel {f}")
        self.occupied[f, ue] = True
        self.eta[f] += value

    def move(self, ue: int, src: int, dst: int, value: float) -> None:
        self.occupied[src, ue] = False
        self.eta[src] -= value
        self.place(ue, dst, value)


def graham_bound(F: int) -> float:
    """Worst-case ratio of greedy to optimal maximum load: 4/3 - 1/(3F)."""
    return 4.0 / 3.0 - 1.0 / (3.0 * F)


def fragments(scn: Scenario, beta: np.ndarray | None = None) -> list[Fragment]:
    """Power fragments of every UE (``beta`` from the certificate if omitted)."""
    if beta is None:
        beta = certificate(scn, SpreadingMatrix(np.zeros((scn.F, scn.K)))).beta
    out = []
    for k in range(scn.K):
        d = int(scn.sparsity[k])
        p = float(scn.power[k]) / d
        out.extend(Fragment(k, float(beta[k]) * p, p) for _ in range(d))
    return out


def _rebalance(state: PartitionState, values: np.ndarray) -> None:
    # Move single fragments off the most loaded sub-channel while that lowers
    # sum(eta^2); every accepted move does, so the loop terminates.
    while True:
        src = int(np.argmax(state.eta))
        best = None
        for ue in np.flatnonzero(state.occupied[src]):
            v = values[ue]
            allowed = ~state.occupied[:, ue]
            if not allowed.any():
                continue
            dst = int(np.argmin(np.where(allowed, state.eta, np.inf)))
            gain = state.eta[src] - (state.eta[dst] + v)
            if gain > 0 and (best is None or gain > best[0]):
                best = (gain, ue, dst)
        if best is None:
            return
        _, ue, dst = best
        state.move(int(ue), src, dst, values[ue])


def greedy_assign(values: Sequence[float], counts: Sequence[int], F: int,
                  rebalance: bool = False) -> PartitionState:
    """Greedy balanced placement of equal-valued fragments.

    UE ``k`` owns ``counts[k]`` fragments of weight ``values[k]``.  UEs are
    served in descending weight (ties: lower index first); each fragment goes
    to the least loaded sub-channel the UE does not already use (ties: lower
    index).

    Parameters
    ----------
    values : sequence of float
        Fragment weight per UE.
    counts : sequence of int
        Number of fragments per UE, each at most ``F``.
    F : int
        Number of sub-channels.
    rebalance : bool
        Run a local single-fragment move pass afterwards.  Off by default.

    Returns
    -------
    PartitionState
        ``occupied[f, k]`` marks placements, ``eta`` the resulting loads.
    """
    values = np.asarray(values, dtype=float)
    counts = np.asarray(counts, dtype=np.int64)
    if values.shape != counts.shape:
        raise ValueError("values and counts must have the same length")
    if np.any(counts > F) or np.any(counts < 0):
        raise ValueError(f"fragment counts must lie in [0, F={F}]")
    state = PartitionState(F, values.size)
    for k in np.argsort(-values, kind="stable"):
        for _ in range(counts[k]):
            state.place(int(k), state.least_loaded(int(k)), values[k])
    if rebalance:
        _rebalance(state, values)
    return state


def _from_occupancy(scn: Scenario, occupied: np.ndarray) -> SpreadingMatrix:
    V = occupied * (scn.power / scn.sparsity)
    return SpreadingMatrix(V, budget=scn.sparsity)


def greedy_partition(scn: Scenario, rebalance: bool = False) -> SpreadingMatrix:
    """Sparse spreading matrix that equalizes the weighted sub-channel loads.

    Every column gets exactly d_k non-zeros, each P_k/d_k, on distinct
    sub-channels.  The result depends only on the scenario.
    """
    cert = certificate(scn, SpreadingMatrix(np.zeros((scn.F, scn.K))))
    values = cert.beta * scn.power / scn.sparsity
    state = greedy_assign(values, scn.sparsity, scn.F, rebalance=rebalance)
    return _from_occupancy(scn, state.occupied)


def dense_spreading(scn: Scenario) -> SpreadingMatrix:
    """v_{f,k} = P_k / F everywhere."""
    return SpreadingMatrix(np.broadcast_to(scn.power / scn.F, (scn.F, scn.K)).copy())


def regular_spreading(scn: Scenario) -> SpreadingMatrix:
    """Round-robin regular matrix: every UE on d, every sub-channel with dK/F UEs.

    Slot ``j`` of UE ``k`` (UE-major index ``i = k*d + j``) goes to
    sub-channel ``i mod F``.  A UE's d slots are consecutive residues, hence
    distinct sub-channels whenever d <= F.
    """
    d = np.unique(scn.sparsity)
    if d.size != 1:
        raise ValueError("regular spreading needs the same sparsity d for all UEs, "
                         f"got {d.tolist()}")
    d = int(d[0])
    if (d * scn.K) % scn.F:
        raise ValueError(f"regular spreading needs d*K divisible by F "
                         f"(d={d}, K={scn.K}, F={scn.F})")
    slots = np.arange(scn.K * d)
    occupied = np.zeros((scn.F, scn.K), dtype=bool)
    occupied[slots % scn.F, slots // d] = True
    return _from_occupancy(scn, occupied)


def random_spreading(scn: Scenario, rng: RandomStream) -> SpreadingMatrix:
    """Each UE picks d_k distinct sub-channels uniformly at random."""
    keys = rng.generator().random((scn.F, scn.K))
    rank = np.argsort(np.argsort(keys, axis=0, kind="stable"), axis=0, kind="stable")
    occupied = rank < scn.sparsity
    return _from_occupancy(scn, occupied)


def brute_force_partition(frags: Sequence[Fragment], F: int) -> float:
    """Exact minimum over placements of the maximum sub-channel load.

    Fragments of one UE must land on distinct sub-channels.  Depth-first
    search with the greedy value as initial incumbent; empty sub-channels are
    interchangeable, so only the first is tried.

    Raises
    ------
    ValueError
        More than 14 fragments, more than 4 sub-channels, or a UE with more
        fragments than sub-channels.
    """
    n = len(frags)
    if n > MAX_BRUTE_FRAGMENTS or F > MAX_BRUTE_F:
        raise ValueError(f"instance too large for enumeration: {n} fragments, F={F} "
                         f"(limits {MAX_BRUTE_FRAGMENTS}, {MAX_BRUTE_F})")
    if n == 0:
        return 0.0
    ues = sorted({fr.ue for fr in frags})
    per_ue = {u: sum(fr.ue == u for fr in frags) for u in ues}
    if max(per_ue.values()) > F:
        raise ValueError("a UE has more fragments than sub-channels")
    for u in ues:
        if len({fr.value for fr in frags if fr.ue == u}) != 1:
            raise ValueError(f"fragments of UE {u} must share one value")

    items = sorted(frags, key=lambda fr: (-fr.value, fr.ue))
    loads = [0.0] * F
    members: list[set[int]] = [set() for _ in range(F)]
    lower = max(math.fsum(fr.value for fr in items) / F, items[0].value)

    greedy = greedy_assign([fr.value for fr in _first_per_ue(items, ues)],
                           [per_ue[u] for u in ues], F)
    best = float(np.max(greedy.eta))

    def search(i: int, current_max: float) -> None:
        nonlocal best
        if best <= lower:
            return
        if i == n:
            best = min(best, current_max)
            return
        fr = items[i]
        tried_empty = False
        for f in range(F):
            if fr.ue in members[f]:
                continue
            if not members[f]:
                if tried_empty:
                    continue
                tried_empty = True
            old = loads[f]
            new = old + fr.value
            if max(new, current_max) >= best:
                continue
            loads[f] = new
            members[f].add(fr.ue)
            search(i + 1, max(new, current_max))
            members[f].discard(fr.ue)
            loads[f] = old

    search(0, 0.0)
    return best


def _first_per_ue(items: Sequence[Fragment], ues: Sequence[int]) -> list[Fragment]:
    first = {}
    for fr in items:
        first.setdefault(fr.ue, fr)
    return [first[u] for u in ues]


METHODS = ("greedy", "regular", "random", "dense")


def build(method: str, scn: Scenario, rng: RandomStream | None = None) -> SpreadingMatrix:
    """Spreading matrix by method name."""
    if method == "greedy":
        return greedy_partition(scn)
    if method == "regular":
        return regular_spreading(scn)
    if method == "random":
        if rng is None:
            raise ValueError("random spreading needs a RandomStream")
        return random_spreading(scn, rng)
    if method == "dense":
        return dense_spreading(scn)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
