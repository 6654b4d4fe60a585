"""(beta, gamma) parameter sweeps, phase diagrams and the HHI tipping contour."""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import abm
from .tables import write_table

DEFAULT_MASTER_SEED = abm.DEFAULT_SEED


class SweepError(RuntimeError):
    """A sweep cell failed; carries the cell coordinates."""

    def __init__(self, message: str, beta_index: int, gamma_index: int, replicate: int):
        self.beta_index, self.gamma_index, self.replicate = beta_index, gamma_index, replicate
        super().__init__(message)


def _strictly_increasing(values: Sequence[float]) -> bool:
    return all(b > a for a, b in zip(values, values[1:]))


@dataclass(frozen=True)
class SweepGrid:
    beta_values: tuple[float, ...]
    gamma_values: tuple[float, ...]
    replicates: int = 16
    base_config: abm.SimConfig = field(default_factory=abm.SimConfig)
    master_seed: int = DEFAULT_MASTER_SEED
    tail_fraction: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "beta_values", tuple(float(b) for b in self.beta_values))
        object.__setattr__(self, "gamma_values", tuple(float(g) for g in self.gamma_values))
        if not self.beta_values or not self.gamma_values:
            raise ValueError("both sweep axes need at least one value")
        if not _strictly_increasing(self.beta_values):
            raise ValueError("beta_values must be strictly increasing")
        if not _strictly_increasing(self.gamma_values):
            raise ValueError("gamma_values must be strictly increasing")
        if self.beta_values[0] < 0:
            raise ValueError("beta_values must be >= 0")
        if self.gamma_values[0] < 0 or self.gamma_values[-1] > 1:
            raise ValueError("gamma_values must lie in [0, 1]")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.beta_values), len(self.gamma_values)

    def cell_seed(self, i: int, j: int, r: int) -> int:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(i, j, r))
        return int(ss.generate_state(1, np.uint64)[0])

    def cell_config(self, i: int, j: int, r: int) -> abm.SimConfig:
        return dataclasses.replace(
            self.base_config,
            overfit_beta=self.beta_values[i],
            entry_gamma=self.gamma_values[j],
            seed=self.cell_seed(i, j, r),
        )


def default_grid(replicates: int = 16, base_config: Optional[abm.SimConfig] = None,
                 master_seed: int = DEFAULT_MASTER_SEED, include_gamma_zero: bool = False,
                 n_beta: int = 11, n_gamma: int = 25) -> SweepGrid:
    """11 betas on [0, 0.05] by 25 log-spaced gammas on [1e-6, 2e-3]."""
    betas = np.linspace(0.0, 0.05, n_beta)
    gammas = np.logspace(-6.0, math.log10(2e-3), n_gamma)
    gammas = list(gammas)
    if include_gamma_zero:
        gammas = [0.0] + gammas
    return SweepGrid(tuple(betas), tuple(gammas), replicates,
                     base_config or abm.SimConfig(), master_seed)


@dataclass
class PhaseDiagram:
    grid: SweepGrid
    mean_hhi: np.ndarray
    stderr_hhi: np.ndarray


@dataclass(frozen=True)
class TippingContour:
    points: tuple[tuple[float, float], ...]
    level: float = 0.5

    def __len__(self) -> int:
        return len(self.points)

    def row_crossings(self, beta: float) -> list[float]:
        return [g for b, g in self.points if b == beta]


def _run_cell(grid: SweepGrid, i: int, j: int) -> np.ndarray:
    out = np.empty(grid.replicates)
    for r in range(grid.replicates):
        try:
            traj = abm.run(grid.cell_config(i, j, r))
            out[r] = abm.steady_state_hhi(traj, grid.tail_fraction)
        except Exception as exc:
            raise SweepError(
                f"sweep cell beta={grid.beta_values[i]!r} gamma={grid.gamma_values[j]!r} "
                f"replicate {r} failed: {exc}", i, j, r) from exc
    return out


def run_sweep(grid: SweepGrid, jobs: int = 1) -> PhaseDiagram:
    """Run every cell; results are position-addressed so ``jobs`` never changes them."""
    nb, ng = grid.shape
    cells = [(i, j) for i in range(nb) for j in range(ng)]
    samples = np.empty((nb, ng, grid.replicates))
    if jobs <= 1:
        for i, j in cells:
            samples[i, j] = _run_cell(grid, i, j)
    else:
        # the simulation kernel releases the GIL, so threads run in parallel
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_run_cell, grid, i, j): (i, j) for i, j in cells}
            for fut, (i, j) in futures.items():
                samples[i, j] = fut.result()
    mean = samples.mean(axis=2)
    if grid.replicates > 1:
        stderr = samples.std(axis=2, ddof=1) / math.sqrt(grid.replicates)
    else:
        stderr = np.zeros_like(mean)
    return PhaseDiagram(grid, mean, stderr)


def tipping_contour(diagram: PhaseDiagram, level: float = 0.5) -> TippingContour:
    """Row-wise crossings of ``level``, interpolated linearly in (log gamma, HHI).

    A prepended gamma = 0 column takes no part in interpolation.
    """
    gammas = np.asarray(diagram.grid.gamma_values)
    points = []
    for i, beta in enumerate(diagram.grid.beta_values):
        row = diagram.mean_hhi[i]
        for j in range(len(gammas)):
            if gammas[j] <= 0:
                continue
            a = row[j] - level
            if a == 0:
                points.append((beta, float(gammas[j])))
                continue
            if j + 1 >= len(gammas):
                continue
            b = row[j + 1] - level
            if a * b < 0:
                lg0, lg1 = math.log10(gammas[j]), math.log10(gammas[j + 1])
                frac = a / (a - b)
                points.append((beta, 10 ** (lg0 + frac * (lg1 - lg0))))
    return TippingContour(tuple(points), level)


def first_crossing(contour: TippingContour, beta: float) -> Optional[float]:
    found = contour.row_crossings(beta)
    return min(found) if found else None


def beta_sensitivity(diagram: PhaseDiagram, level: float = 0.5) -> float:
    """gamma*(beta_max) / gamma*(beta_min), using each row's lowest crossing."""
    contour = tipping_contour(diagram, level)
    lo_beta, hi_beta = diagram.grid.beta_values[0], diagram.grid.beta_values[-1]
    lo, hi = first_crossing(contour, lo_beta), first_crossing(contour, hi_beta)
    missing = [b for b, g in ((lo_beta, lo), (hi_beta, hi)) if g is None]
    if missing:
        raise ValueError(
            "no HHI=%g crossing in the beta row(s) %s" % (level, ", ".join(f"{b:g}" for b in missing)))
    return hi / lo


def write_phase(diagram: PhaseDiagram, path: Union[str, Path], fmt: str = "csv") -> Path:
    grid = diagram.grid
    rows = [
        (beta, gamma, float(diagram.mean_hhi[i, j]), float(diagram.stderr_hhi[i, j]),
         grid.replicates)
        for i, beta in enumerate(grid.beta_values)
        for j, gamma in enumerate(grid.gamma_values)
    ]
    return write_table(path, ["beta", "gamma", "mean_hhi", "stderr_hhi", "replicates"], rows, fmt)


def write_contour(contour: TippingContour, path: Union[str, Path], fmt: str = "csv") -> Path:
    rows = [(beta, float(gamma)) for beta, gamma in contour.points]
    return write_table(path, ["beta", "gamma_star"], rows, fmt)
