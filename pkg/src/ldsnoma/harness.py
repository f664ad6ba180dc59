"""Experiment sweeps, CSV tables and summaries.

Results are kept in nats internally; :func:`write_csv` converts to bits
(factor 1/ln 2) when asked, and nowhere else.

Random streams are derived from the config seed by label, so any single
drop can be recomputed on its own and gives the same rows:

* drop ``i`` at (F, K):          ``spawn("drop", F, K, i)``
* random matrix at (F, K, d, i): ``spawn("random", F, K, d, i)``
* fading at (F, K, i):           ``spawn("fading", F, K, i)`` (shared by all
  methods and sparsities of that drop)
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .allocator import METHODS, build, greedy_partition
from .detequiv import certificate, det_emi, solve_fixed_point
from .model import RandomStream, Scenario, SpreadingMatrix, make_drop, parse_key_values
from .montecarlo import epsilon_stats, mc_emi_many

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "evaluate_drop",
    "evaluate_matrix",
    "run_sweep_K",
    "run_sweep_d",
    "run_epsilon",
    "allocate",
    "visualize_allocation",
    "summarize",
    "relative_gain",
    "write_csv",
    "to_unit",
    "KINDS",
    "RESULT_COLUMNS",
]

KINDS = ("evaluate", "sweep-K", "sweep-d", "epsilon", "allocate", "visualize-allocation")
LN2 = math.log(2.0)


class ConfigError(ValueError):
    def __init__(self, problems: dict[str, str]):
        self.problems = problems
        detail = "; ".join(f"{k}: {v}" for k, v in problems.items())
        super().__init__(f"invalid config keys [{', '.join(problems)}]: {detail}")


def to_unit(x, unit: str):
    """Convert a nats quantity for emission; ``unit`` is 'bits' or 'nats'."""
    if unit == "bits":
        return x / LN2
    if unit == "nats":
        return x
    raise ValueError(f"unknown unit {unit!r}")


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

def _ints(value) -> tuple[int, ...]:
    if isinstance(value, str):
        return tuple(int(x) for x in value.replace(",", " ").split())
    if isinstance(value, Iterable):
        return tuple(int(x) for x in value)
    return (int(value),)


@dataclass(frozen=True)
class ExperimentConfig:
    """Simulation protocol parameters.

    Defaults are the CI-sized "fast mode" (100 drops, 200 fading trials);
    the full protocol uses 1000 and 1000.
    """

    kind: str = "sweep-K"
    F: int = 50
    K: tuple[int, ...] = (150,)
    d: tuple[int, ...] = (2,)
    drops: int = 100
    fading_trials: int = 200
    seed: int = 0
    methods: tuple[str, ...] = METHODS
    out: str | None = None
    mc: bool = True
    matrices: int = 1000
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "K", _ints(self.K))
        object.__setattr__(self, "d", _ints(self.d))
        if isinstance(self.methods, str):
            object.__setattr__(self, "methods", tuple(
                m.strip() for m in self.methods.split(",") if m.strip()))
        else:
            object.__setattr__(self, "methods", tuple(self.methods))
        self.validate()

    def validate(self) -> None:
        p = {}
        if self.kind not in KINDS:
            p["kind"] = f"{self.kind!r} not in {KINDS}"
        if self.F < 1:
            p["F"] = "must be >= 1"
        if not self.K or min(self.K) < 1:
            p["K"] = "needs at least one positive value"
        if not self.d or min(self.d) < 1 or max(self.d) > self.F:
            p["d"] = f"needs values in [1, F={self.F}]"
        if self.drops < 1:
            p["drops"] = "must be >= 1"
        if self.fading_trials < 1:
            p["fading_trials"] = "must be >= 1"
        if not 0 <= self.seed < 2**64:
            p["seed"] = "must be a 64-bit unsigned integer"
        if not self.methods:
            p["methods"] = "must be non-empty"
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            p["methods"] = f"unknown {bad}; choose from {METHODS}"
        elif "regular" in self.methods and "K" not in p and "d" not in p:
            odd = [(K, d) for K in self.K for d in self.d if (K * d) % self.F]
            if odd:
                p["methods"] = f"regular spreading needs d*K divisible by F, fails for (K, d) in {odd}"
        if self.matrices < 2:
            p["matrices"] = "must be >= 2"
        if self.workers < 1:
            p["workers"] = "must be >= 1"
        if p:
            raise ConfigError(p)

    @staticmethod
    def parse_values(text: str) -> dict:
        """Typed values from a flat ``key = value`` document."""
        kv = parse_key_values(text)
        known = {f.name for f in fields(ExperimentConfig)}
        problems = {k: "unknown key" for k in sorted(set(kv) - known)}
        typed = {}
        for k, v in kv.items():
            if k in problems:
                continue
            try:
                typed[k] = _coerce(k, v)
            except ValueError as exc:
                problems[k] = str(exc)
        if problems:
            raise ConfigError(problems)
        return typed

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        """Parse a config document; non-None ``overrides`` win."""
        typed = cls.parse_values(text)
        typed.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**typed)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), **overrides)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _coerce(key: str, value: str):
    if key in ("kind", "out"):
        return value
    if key == "methods":
        return value
    if key in ("K", "d"):
        return _ints(value)
    if key == "mc":
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    return int(value)


# ---------------------------------------------------------------------------
# Rows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    """One (method, drop) evaluation.  Rates are nats until emission."""

    method: str
    F: int
    K: int
    d: int
    drop_seed: int
    det_emi: float
    mc_emi: float | None
    mc_stderr: float | None
    eta_max: float
    eta_min: float
    kkt_residual_max: float


RESULT_COLUMNS = ("method", "F", "K", "d", "drop_seed", "det_emi", "mc_emi",
                  "mc_stderr", "eta_max", "eta_min", "kkt_residual_max")
_RATE_COLUMNS = {"det_emi", "mc_emi", "mc_stderr"}
_METHOD_ORDER = {m: i for i, m in enumerate(METHODS)}


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(rows: Sequence, path=None, unit: str = "bits",
              columns: Sequence[str] | None = None,
              rate_columns: Iterable[str] = _RATE_COLUMNS) -> str:
    """Serialize rows (dataclasses or dicts) to CSV text; write to ``path`` if given.

    Rate columns are converted to ``unit`` and suffixed with it, e.g.
    ``det_emi_bits``.  Floats use ``repr`` so output is byte-stable.
    """
    rate_columns = set(rate_columns)
    recs = [asdict(r) if hasattr(r, "__dataclass_fields__") else dict(r) for r in rows]
    if columns is None:
        columns = RESULT_COLUMNS if not recs else tuple(recs[0])
    header = [f"{c}_{unit}" if c in rate_columns else c for c in columns]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for rec in recs:
        out = []
        for c in columns:
            v = rec.get(c)
            if c in rate_columns and v is not None:
                v = to_unit(v, unit)
            out.append(_fmt(v))
        w.writerow(out)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def evaluate_matrix(scn: Scenario, V: SpreadingMatrix) -> dict:
    """Deterministic-side diagnostics for one matrix (nats)."""
    fp = solve_fixed_point(scn, V)
    cert = certificate(scn, V)
    return dict(det_emi=det_emi(scn, V, fp), eta_max=float(cert.eta.max()),
                eta_min=float(cert.eta.min()), kkt_residual_max=cert.max_residual)


def evaluate_drop(cfg: ExperimentConfig, K: int, d: int, drop: int,
                  root: RandomStream | None = None) -> list[ResultRow]:
    """All configured methods on drop ``drop`` at (cfg.F, K, d)."""
    root = RandomStream(cfg.seed) if root is None else root
    F = cfg.F
    scn = make_drop(F, K, d, root.spawn("drop", F, K, drop))
    Vs = [build(m, scn, root.spawn("random", F, K, d, drop)) for m in cfg.methods]
    diag = [evaluate_matrix(scn, V) for V in Vs]
    if cfg.mc:
        ests = mc_emi_many(scn, Vs, cfg.fading_trials, root.spawn("fading", F, K, drop))
    else:
        ests = [None] * len(Vs)
    return [ResultRow(m, F, K, d, drop, dg["det_emi"],
                      None if e is None else e.mean,
                      None if e is None else e.stderr,
                      dg["eta_max"], dg["eta_min"], dg["kkt_residual_max"])
            for m, dg, e in zip(cfg.methods, diag, ests)]


def _sort_key(r: ResultRow):
    return (r.F, r.K, r.d, r.drop_seed, _METHOD_ORDER.get(r.method, 99), r.method)


def _run_tasks(cfg: ExperimentConfig, tasks: list[tuple[int, int, int]]) -> list[ResultRow]:
    root = RandomStream(cfg.seed)

    def one(t):
        return evaluate_drop(cfg, *t, root=root)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(one, tasks))
    else:
        parts = [one(t) for t in tasks]
    return sorted((r for p in parts for r in p), key=_sort_key)


def run_sweep_K(cfg: ExperimentConfig) -> list[ResultRow]:
    """Per-drop rows for every K in ``cfg.K`` at sparsity ``cfg.d[0]``."""
    d = cfg.d[0]
    return _run_tasks(cfg, [(K, d, i) for K in cfg.K for i in range(cfg.drops)])


def run_sweep_d(cfg: ExperimentConfig) -> list[ResultRow]:
    """Per-drop rows for every d in ``cfg.d`` at load ``cfg.K[0]``.

    The same drops and fading draws are reused across d.
    """
    K = cfg.K[0]
    return _run_tasks(cfg, [(K, d, i) for d in cfg.d for i in range(cfg.drops)])


def summarize(rows: Sequence[ResultRow]) -> list[dict]:
    """Drop-averaged rates per (method, F, K, d), plus the sparsity gain mc - det."""
    groups: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.F, r.K, r.d, _METHOD_ORDER.get(r.method, 99), r.method), []).append(r)
    out = []
    for (F, K, d, _, method), rs in sorted(groups.items()):
        det = math.fsum(r.det_emi for r in rs) / len(rs)
        has_mc = all(r.mc_emi is not None for r in rs)
        mc = math.fsum(r.mc_emi for r in rs) / len(rs) if has_mc else None
        spread = None
        if has_mc and len(rs) > 1:
            spread = float(np.std([r.mc_emi for r in rs], ddof=1) / math.sqrt(len(rs)))
        out.append(dict(method=method, F=F, K=K, d=d, drops=len(rs),
                        det_emi=det, mc_emi=mc, mc_drop_stderr=spread,
                        sparsity_gain=None if mc is None else mc - det,
                        eta_ratio_max=max(r.eta_max / r.eta_min if r.eta_min > 0 else math.inf
                                          for r in rs)))
    return out


SUMMARY_COLUMNS = ("method", "F", "K", "d", "drops", "det_emi", "mc_emi",
                   "mc_drop_stderr", "sparsity_gain", "eta_ratio_max")
SUMMARY_RATES = {"det_emi", "mc_emi", "mc_drop_stderr", "sparsity_gain"}


def relative_gain(summary: Sequence[dict], method: str, baseline: str,
                  K: int, d: int, field_name: str = "mc_emi") -> float:
    """Ratio of drop-averaged rates minus one, e.g. 0.35 for +35%."""
    pick = {s["method"]: s[field_name] for s in summary if s["K"] == K and s["d"] == d}
    return pick[method] / pick[baseline] - 1.0


# ---------------------------------------------------------------------------
# Single-drop experiments
# ---------------------------------------------------------------------------

def run_epsilon(cfg: ExperimentConfig) -> list[dict]:
    """Residual-term statistics per d on one drop at (cfg.F, cfg.K[0]).

    Every d shares the drop and the fading stream.
    """
    root = RandomStream(cfg.seed)
    K = cfg.K[0]
    scn = make_drop(cfg.F, K, cfg.d[0], root.spawn("drop", cfg.F, K, 0))
    rows = []
    for d in cfg.d:
        st = epsilon_stats(scn, d, cfg.matrices, cfg.fading_trials,
                           root.spawn("epsilon", cfg.F, K), workers=cfg.workers)
        rows.append(dict(F=cfg.F, K=K, d=d, samples=st.samples, mean_eps=st.mean_eps,
                         mean_eps_stderr=st.mean_stderr, var_eps=st.var_eps,
                         mean_det_emi=st.mean_det, mean_mc_emi=st.mean_mc))
    return rows


EPSILON_COLUMNS = ("F", "K", "d", "samples", "mean_eps", "mean_eps_stderr",
                   "var_eps", "mean_det_emi", "mean_mc_emi")
EPSILON_RATES = {"mean_eps", "mean_eps_stderr", "mean_det_emi", "mean_mc_emi"}


def allocate(cfg: ExperimentConfig, method: str | None = None,
             drop: int = 0) -> tuple[Scenario, SpreadingMatrix]:
    """Scenario and spreading matrix for one drop."""
    method = method or cfg.methods[0]
    root = RandomStream(cfg.seed)
    F, K, d = cfg.F, cfg.K[0], cfg.d[0]
    scn = make_drop(F, K, d, root.spawn("drop", F, K, drop))
    return scn, build(method, scn, root.spawn("random", F, K, d, drop))


@dataclass(frozen=True)
class AllocationTable:
    triplets: list[dict]     # f, k, v, beta per non-zero
    subchannels: list[dict]  # f, eta
    scenario: Scenario
    matrix: SpreadingMatrix


def visualize_allocation(cfg: ExperimentConfig, drop: int = 0) -> AllocationTable:
    """Greedy allocation of one drop as (f, k, v, beta) triplets and per-f eta."""
    root = RandomStream(cfg.seed)
    F, K, d = cfg.F, cfg.K[0], cfg.d[0]
    scn = make_drop(F, K, d, root.spawn("drop", F, K, drop))
    V = greedy_partition(scn)
    cert = certificate(scn, V)
    trip = [dict(f=int(f), k=int(k), v=float(V.V[f, k]), beta=float(cert.beta[k]))
            for k in range(K) for f in np.flatnonzero(V.V[:, k])]
    sub = [dict(f=f, eta=float(cert.eta[f])) for f in range(F)]
    return AllocationTable(trip, sub, scn, V)
