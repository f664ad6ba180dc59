"""Problem instances, spreading matrices, seeded random streams and fading.

All internal arithmetic is in linear units; dB values only appear at the
boundaries (scenario generation and serialization).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "Scenario",
    "SpreadingMatrix",
    "RandomStream",
    "db_to_linear",
    "linear_to_db",
    "make_drop",
    "sample_channel",
    "standard_complex_gaussian",
    "PATHLOSS_RANGE_DB",
    "NOISE_DBW",
    "UE_POWER_W",
]

PATHLOSS_RANGE_DB = (-150.0, -60.0)
NOISE_DBW = -120.0
UE_POWER_W = 1.0


def db_to_linear(x_db):
    """Power dB to linear: 10 ** (x / 10)."""
    return np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    """Linear power to dB: 10 * log10(x)."""
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scenario:
    """One UE drop: system dimensions, noise level and per-UE large-scale data.

    Pathloss and noise are stored in dB so that text round trips are exact;
    use :attr:`gain` and :attr:`noise_power` for the linear values.

    Parameters
    ----------
    F : int
        Number of sub-channels.
    noise_dbw : float
        Noise power in dBW.
    pathloss_db : array_like, shape (K,)
        Pathloss power gain per UE in dB.
    power : array_like, shape (K,)
        Power budget per UE in Watts.
    sparsity : array_like of int, shape (K,)
        Number of non-zero code chips per UE, each in ``[1, F]``.
    """

    F: int
    noise_dbw: float
    pathloss_db: np.ndarray
    power: np.ndarray
    sparsity: np.ndarray

    def __post_init__(self):
        pl = _frozen(self.pathloss_db, float).reshape(-1)
        pw = _frozen(self.power, float).reshape(-1)
        sp = _frozen(self.sparsity, np.int64).reshape(-1)
        object.__setattr__(self, "pathloss_db", pl)
        object.__setattr__(self, "power", pw)
        object.__setattr__(self, "sparsity", sp)
        object.__setattr__(self, "F", int(self.F))
        object.__setattr__(self, "noise_dbw", float(self.noise_dbw))

        problems = []
        if self.F < 1:
            problems.append(f"F must be >= 1, got {self.F}")
        if pl.size < 1:
            problems.append("K must be >= 1")
        if not (pl.size == pw.size == sp.size):
            problems.append(
                f"per-UE arrays differ in length: pathloss={pl.size}, "
                f"power={pw.size}, sparsity={sp.size}")
        if not math.isfinite(self.noise_dbw):
            problems.append("noise power must be finite and positive")
        if not np.all(np.isfinite(pl)):
            problems.append("pathloss gains must be finite and positive")
        if not np.all((pw > 0) & np.isfinite(pw)):
            problems.append("power budgets must be positive")
        if np.any((sp < 1) | (sp > self.F)):
            problems.append(f"sparsity values must lie in [1, F={self.F}]")
        if problems:
            raise ValueError("invalid scenario: " + "; ".join(problems))

    @classmethod
    def from_linear(cls, F: int, noise_power: float, gain: Sequence[float],
                    power: Sequence[float], sparsity: Sequence[int]) -> "Scenario":
        """Build a scenario from linear noise power and pathloss gains."""
        if noise_power <= 0:
            raise ValueError("invalid scenario: noise power must be positive")
        gain = np.asarray(gain, dtype=float)
        if np.any(gain <= 0):
            raise ValueError("invalid scenario: pathloss gains must be positive")
        return cls(F, float(linear_to_db(noise_power)), linear_to_db(gain),
                   power, sparsity)

    @classmethod
    def symmetric(cls, F: int, K: int, d: int, gain: float = 1.0,
                  power: float = 1.0, noise_power: float = 1.0) -> "Scenario":
        """Equal pathloss, power and sparsity for every UE."""
        return cls.from_linear(F, noise_power, np.full(K, gain),
                               np.full(K, power), np.full(K, d))

    @property
    def K(self) -> int:
        return int(self.pathloss_db.size)

    @property
    def noise_power(self) -> float:
        return float(db_to_linear(self.noise_dbw))

    @property
    def gain(self) -> np.ndarray:
        """Linear pathloss gains a_k^2."""
        return db_to_linear(self.pathloss_db)

    def permuted(self, order: Sequence[int]) -> "Scenario":
        """Same drop with UEs reordered."""
        order = np.asarray(order)
        return Scenario(self.F, self.noise_dbw, self.pathloss_db[order],
                        self.power[order], self.sparsity[order])

    def with_sparsity(self, d) -> "Scenario":
        return Scenario(self.F, self.noise_dbw, self.pathloss_db, self.power,
                        np.broadcast_to(d, (self.K,)))

    # Serialization --------------------------------------------------------
    # Flat "key = value" text; arrays are comma separated.  Field names:
    #   F, K, sigma2_dBW, pathloss_dB, power_W, sparsity

    def to_text(self) -> str:
        def arr(a):
            return ", ".join(repr(float(x)) for x in a)
        return "\n".join([
            "# ldsnoma scenario",
            f"F = {self.F}",
            f"K = {self.K}",
            f"sigma2_dBW = {self.noise_dbw!r}",
            f"pathloss_dB = {arr(self.pathloss_db)}",
            f"power_W = {arr(self.power)}",
            "sparsity = " + ", ".join(str(int(x)) for x in self.sparsity),
            "",
        ])

    @classmethod
    def from_text(cls, text: str) -> "Scenario":
        kv = parse_key_values(text)
        required = ["F", "K", "sigma2_dBW", "pathloss_dB", "power_W", "sparsity"]
        missing = [k for k in required if k not in kv]
        if missing:
            raise ValueError(f"scenario document missing keys: {missing}")
        scn = cls(int(kv["F"]), float(kv["sigma2_dBW"]),
                  _floats(kv["pathloss_dB"]), _floats(kv["power_W"]),
                  [int(x) for x in _split(kv["sparsity"])])
        if scn.K != int(kv["K"]):
            raise ValueError(f"K = {kv['K']} does not match {scn.K} UE entries")
        return scn

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_text(Path(path).read_text())


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _split(value: str) -> list[str]:
    return [x for x in (s.strip() for s in value.split(",")) if x]


def _floats(value: str) -> list[float]:
    return [float(x) for x in _split(value)]


# ---------------------------------------------------------------------------
# Spreading matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpreadingMatrix:
    """F x K matrix of per-sub-channel powers v_{f,k} = w_{f,k}^2 / d_k.

    ``budget`` optionally records the declared per-column sparsity; when set,
    no column may have more non-zeros than its budget.
    """

    V: np.ndarray
    budget: np.ndarray | None = None

    def __post_init__(self):
        V = _frozen(self.V, float)
        if V.ndim != 2:
            raise ValueError(f"spreading matrix must be 2-D, got shape {V.shape}")
        if np.any(V < 0) or not np.all(np.isfinite(V)):
            raise ValueError("spreading matrix entries must be finite and >= 0")
        object.__setattr__(self, "V", V)
        if self.budget is not None:
            b = _frozen(self.budget, np.int64).reshape(-1)
            if b.size != V.shape[1]:
                raise ValueError("budget length must equal the number of columns")
            nnz = np.count_nonzero(V, axis=0)
            bad = np.flatnonzero(nnz > b)
            if bad.size:
                raise ValueError(
                    f"columns {bad.tolist()} exceed their sparsity budget")
            object.__setattr__(self, "budget", b)

    @property
    def F(self) -> int:
        return self.V.shape[0]

    @property
    def K(self) -> int:
        return self.V.shape[1]

    @property
    def support(self) -> list[np.ndarray]:
        """Row indices with v_{f,k} > 0, per column."""
        return [np.flatnonzero(self.V[:, k]) for k in range(self.K)]

    @property
    def column_power(self) -> np.ndarray:
        return self.V.sum(axis=0)

    def check_conforms(self, scn: Scenario) -> None:
        if self.V.shape != (scn.F, scn.K):
            raise ValueError(
                f"spreading matrix shape {self.V.shape} does not match "
                f"scenario (F={scn.F}, K={scn.K})")

    def is_feasible(self, scn: Scenario, rtol: float = 1e-12) -> bool:
        """Column powers within budgets and supports within sparsity."""
        self.check_conforms(scn)
        ok_power = np.all(self.column_power <= scn.power * (1 + rtol))
        ok_sparse = np.all(np.count_nonzero(self.V, axis=0) <= scn.sparsity)
        return bool(ok_power and ok_sparse)

    # Sparse triplet text format:
    #   F = <int>
    #   K = <int>
    #   then one "f k v" row per non-zero (0-based indices, column-major order)

    def to_text(self) -> str:
        lines = ["# ldsnoma spreading matrix (f k v, 0-based)",
                 f"F = {self.F}", f"K = {self.K}"]
        for k in range(self.K):
            for f in np.flatnonzero(self.V[:, k]):
                lines.append(f"{f} {k} {float(self.V[f, k])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SpreadingMatrix":
        header, rows = {}, []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, value = (s.strip() for s in line.split("=", 1))
                header[key] = int(value)
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 'f k v', got {line!r}")
            rows.append((int(parts[0]), int(parts[1]), float(parts[2])))
        if "F" not in header or "K" not in header:
            raise ValueError("spreading matrix document needs F and K header lines")
        V = np.zeros((header["F"], header["K"]))
        for f, k, v in rows:
            if not (0 <= f < V.shape[0] and 0 <= k < V.shape[1]):
                raise ValueError(f"triplet ({f}, {k}) outside {V.shape}")
            V[f, k] = v
        return cls(V)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "SpreadingMatrix":
        return cls.from_text(Path(path).read_text())


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

_WORDS_PER_BLOCK = 4  # Philox4x64 emits four 64-bit words per counter step


def _label_hash(*parts) -> int:
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RandomStream:
    """Seeded, labelled random stream backed by counter-based Philox.

    ``(seed, stream_id)`` fixes the Philox key.  Child streams are derived by
    hashing labels, so a stream for e.g. ``("fading", K, drop)`` is the same
    no matter which thread or in what order it is requested.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream_id < 2**64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")

    def spawn(self, *labels) -> "RandomStream":
        return RandomStream(self.seed, _label_hash(self.stream_id, *labels))

    def substream(self, index: int) -> "RandomStream":
        """Child stream for trial/drop ``index``."""
        return self.spawn(int(index))

    @property
    def key(self) -> np.ndarray:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return ss.generate_state(2, np.uint64)

    def bit_generator(self) -> np.random.Philox:
        return np.random.Philox(key=self.key)

    def generator(self) -> np.random.Generator:
        """General-purpose numpy generator for this stream."""
        return np.random.Generator(self.bit_generator())

    def uniforms(self, start_block: int, n_blocks: int) -> np.ndarray:
        """Uniforms on (0, 1] from counter blocks [start, start + n).

        Each 64-bit word w maps to ((w >> 11) + 1) * 2**-53.
        """
        bg = self.bit_generator()
        if start_block:
            bg.advance(int(start_block))
        w = bg.random_raw(_WORDS_PER_BLOCK * int(n_blocks))
        return ((w >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


def standard_complex_gaussian(rng: RandomStream, shape: tuple[int, ...],
                              first_trial: int = 0, n_trials: int = 1) -> np.ndarray:
    """CN(0, 1) draws for trials ``first_trial .. first_trial + n_trials - 1``.

    Trial ``t`` owns a fixed slice of the Philox counter space, so its draws
    do not depend on how trials are batched or scheduled.  Box-Muller with
    real and imaginary variance 1/2: ``sqrt(-ln u1) * exp(2j*pi*u2)``.
    """
    n = int(np.prod(shape, dtype=np.int64))
    blocks = -(-2 * n // _WORDS_PER_BLOCK)
    u = rng.uniforms(first_trial * blocks, n_trials * blocks)
    u = u.reshape(n_trials, blocks * _WORDS_PER_BLOCK)[:, :2 * n]
    radius = np.sqrt(-np.log(u[:, :n]))
    # u2 in (0, 1]; the angle is periodic so the closed end is harmless
    g = radius * np.exp(2j * np.pi * u[:, n:])
    return g.reshape((n_trials,) + tuple(shape))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def make_drop(F: int, K: int, d: int, rng: RandomStream) -> Scenario:
    """Random UE drop with the default simulation settings.

    1 W per UE, -120 dBW noise, pathloss uniform in dB on [-150, -60].
    """
    for name, val in (("F", F), ("K", K), ("d", d)):
        if int(val) != val or val < 1:
            raise ValueError(f"invalid dimensions: {name} must be a positive integer, got {val}")
    if d > F:
        raise ValueError(f"invalid dimensions: d={d} exceeds F={F}")
    lo, hi = PATHLOSS_RANGE_DB
    pl = rng.generator().uniform(lo, hi, size=K)
    return Scenario(F, NOISE_DBW, pl, np.full(K, UE_POWER_W), np.full(K, d))


def sample_channel(scn: Scenario, V: SpreadingMatrix, rng: RandomStream,
                   first_trial: int = 0, n_trials: int | None = None) -> np.ndarray:
    """Equivalent channel h_{f,k} = a_k sqrt(v_{f,k}) g_{f,k}.

    Returns an (F, K) complex matrix, or (n_trials, F, K) when ``n_trials``
    is given.  Code signs never enter: only V is used.
    """
    V.check_conforms(scn)
    single = n_trials is None
    g = standard_complex_gaussian(rng, (scn.F, scn.K), first_trial,
                                  1 if single else n_trials)
    H = np.sqrt(scn.gain * V.V) * g
    return H[0] if single else H
