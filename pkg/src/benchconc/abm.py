"""Agent-based model of evaluative attention over a population of benchmarks.

Each step either adds a new benchmark (probability ``entry_gamma``) or
selects an incumbent with probability proportional to
``A_i**alpha * exp(-beta * O_i)``; the selected benchmark gains one unit of
authority and one unit of over-fit debt, and every debt that was not
incremented decays.

Randomness: a run consumes exactly two uniforms per step from a Philox
stream keyed by the configured seed (entry draw, then selection draw), so
step ``t`` always sees counter positions ``2t`` and ``2t + 1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numba
import numpy as np

from .metrics import hhi
from .tables import write_table

DECAY_MODES = ("subtractive", "multiplicative")
DEFAULT_SEED = 20250612
_U64 = 2**64


@dataclass(frozen=True)
class SimConfig:
    matthew_alpha: float = 1.5
    overfit_beta: float = 0.02
    entry_gamma: float = 1e-4
    decay_delta: float = 0.1
    steps: int = 10_000
    initial_benchmarks: int = 1
    seed: int = DEFAULT_SEED
    decay_mode: str = "subtractive"

    def __post_init__(self):
        if not self.matthew_alpha > 0:
            raise ValueError(f"matthew_alpha must be > 0, got {self.matthew_alpha}")
        if not self.overfit_beta >= 0:
            raise ValueError(f"overfit_beta must be >= 0, got {self.overfit_beta}")
        if not 0 <= self.entry_gamma <= 1:
            raise ValueError(f"entry_gamma must be in [0, 1], got {self.entry_gamma}")
        if not 0 <= self.decay_delta < 1:
            raise ValueError(f"decay_delta must be in [0, 1), got {self.decay_delta}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        if int(self.initial_benchmarks) != self.initial_benchmarks or self.initial_benchmarks < 1:
            raise ValueError(
                f"initial_benchmarks must be a positive integer, got {self.initial_benchmarks}")
        if int(self.seed) != self.seed or not 0 <= self.seed < _U64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.decay_mode not in DECAY_MODES:
            raise ValueError(f"decay_mode must be one of {DECAY_MODES}, got {self.decay_mode!r}")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class SimState:
    authority: np.ndarray
    debt: np.ndarray
    step: int = 0

    def __post_init__(self):
        self.authority = np.asarray(self.authority, dtype=float)
        self.debt = np.asarray(self.debt, dtype=float)
        if self.authority.ndim != 1 or self.authority.shape != self.debt.shape:
            raise ValueError("authority and debt must be 1-D sequences of equal length")
        if self.authority.size == 0:
            raise ValueError("state needs at least one benchmark")
        if np.any(self.authority < 1):
            raise ValueError("every authority must be >= 1")
        if np.any(self.debt < 0):
            raise ValueError("every debt must be >= 0")
        if self.step < 0:
            raise ValueError("step counter must be >= 0")

    @classmethod
    def initial(cls, n: int = 1) -> "SimState":
        return cls(np.ones(n), np.zeros(n), 0)

    def __len__(self) -> int:
        return self.authority.size


@dataclass
class Trajectory:
    hhi_per_step: np.ndarray
    n_benchmarks: np.ndarray
    final_state: SimState
    config: SimConfig = field(default_factory=SimConfig)

    def __len__(self) -> int:
        return self.hhi_per_step.size


def selection_probabilities(state: SimState, matthew_alpha: float,
                            overfit_beta: float) -> np.ndarray:
    """Normalised ``A**alpha * exp(-beta * O)`` computed in log space."""
    logw = matthew_alpha * np.log(state.authority) - overfit_beta * state.debt
    w = np.exp(logw - logw.max())
    p = w / w.sum()
    assert abs(p.sum() - 1.0) < 1e-12
    return p


@numba.njit(cache=True, nogil=True)
def _advance(A, O, n, u, alpha, beta, gamma, delta, subtractive, hhi_out, count_out):
    """Apply len(u) // 2 steps in place on capacity arrays A, O; returns new n."""
    steps = u.shape[0] // 2
    w = np.empty(A.shape[0])
    tot = 0.0
    sq = 0.0
    for j in range(n):
        tot += A[j]
        sq += A[j] * A[j]
    for t in range(steps):
        chosen = -1
        if u[2 * t] >= gamma:
            m = -np.inf
            for j in range(n):
                w[j] = alpha * np.log(A[j]) - beta * O[j]
                if w[j] > m:
                    m = w[j]
            s = 0.0
            for j in range(n):
                w[j] = np.exp(w[j] - m)
                s += w[j]
            r = u[2 * t + 1] * s
            acc = 0.0
            chosen = n - 1
            for j in range(n):
                acc += w[j]
                if r < acc:
                    chosen = j
                    break
        for j in range(n):
            if j != chosen:
                if subtractive:
                    O[j] = O[j] - delta if O[j] > delta else 0.0
                else:
                    O[j] = O[j] * (1.0 - delta)
        if chosen < 0:
            # entrant: born with A=1, O=0, skips decay on its birth step
            A[n] = 1.0
            O[n] = 0.0
            n += 1
            tot += 1.0
            sq += 1.0
        else:
            sq += 2.0 * A[chosen] + 1.0
            A[chosen] += 1.0
            O[chosen] += 1.0
            tot += 1.0
        hhi_out[t] = sq / (tot * tot)
        count_out[t] = n
    return n


def _simulate(state: SimState, config: SimConfig, u: np.ndarray):
    steps = u.size // 2
    n = len(state)
    A = np.empty(n + steps)
    O = np.empty(n + steps)
    A[:n] = state.authority
    O[:n] = state.debt
    hhi_out = np.empty(steps)
    count_out = np.empty(steps, dtype=np.int64)
    n = _advance(A, O, n, u, float(config.matthew_alpha), float(config.overfit_beta),
                 float(config.entry_gamma), float(config.decay_delta),
                 config.decay_mode == "subtractive", hhi_out, count_out)
    final = SimState(A[:n].copy(), O[:n].copy(), state.step + steps)
    return final, hhi_out, count_out


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def step(state: SimState, config: SimConfig, rng: np.random.Generator) -> SimState:
    """Advance one step, consuming two uniforms from ``rng``."""
    u = rng.random(2)
    final, _, _ = _simulate(state, config, u)
    return final


def run(config: SimConfig) -> Trajectory:
    rng = make_rng(config.seed)
    u = rng.random(2 * config.steps)
    start = SimState.initial(config.initial_benchmarks)
    final, hhi_out, count_out = _simulate(start, config, u)
    return Trajectory(hhi_out, count_out, final, config)


def steady_state_hhi(traj: Union[Trajectory, Sequence[float]], tail_fraction: float = 0.1) -> float:
    """Mean of the last ceil(tail_fraction * N) recorded HHI values."""
    values = np.asarray(traj.hhi_per_step if isinstance(traj, Trajectory) else traj, dtype=float)
    if values.size == 0:
        raise ValueError("empty trajectory")
    if not 0 < tail_fraction <= 1:
        raise ValueError(f"tail_fraction must be in (0, 1], got {tail_fraction}")
    # rounding guards against 0.1 * 10000 landing a hair above 1000
    tail = math.ceil(round(tail_fraction * values.size, 9))
    if tail < 1:
        raise ValueError("tail_fraction selects no steps")
    return float(values[-tail:].mean())


def final_hhi(traj: Trajectory) -> float:
    return hhi(traj.final_state.authority)


def write_trajectory(traj: Trajectory, path: Union[str, Path], fmt: str = "csv",
                     ) -> tuple[Path, Path]:
    """Table ``step,n_benchmarks,hhi`` plus a ``<stem>.config.json`` config echo."""
    path = Path(path)
    rows = zip(range(1, len(traj) + 1), traj.n_benchmarks.tolist(), traj.hhi_per_step.tolist())
    write_table(path, ["step", "n_benchmarks", "hhi"], rows, fmt)
    config_path = path.with_name(path.stem + ".config.json")
    config_path.write_text(json.dumps(traj.config.to_json(), indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    return path, config_path
