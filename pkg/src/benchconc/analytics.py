"""Yearly ecosystem indicators, their PCA, and country-level concentration."""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import metrics
from .records import UNKNOWN_COUNTRY, BenchmarkRecord, ModelRecord
from .tables import write_table

INDICATOR_NAMES = (
    "model_count",
    "mean_log10_params",
    "distinct_manufacturers",
    "distinct_countries",
    "mean_modalities",
    "share_documented",
    "share_open_weights",
    "share_permissive_license",
)


class ZeroVarianceError(ValueError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"indicator column {column!r} has zero variance across years")


@dataclass
class YearlyIndicators:
    years: tuple[int, ...]
    metrics: np.ndarray
    metric_names: tuple[str, ...] = INDICATOR_NAMES
    raw: Optional[np.ndarray] = None


@dataclass
class PcaResult:
    components: np.ndarray
    explained_variance_ratio: np.ndarray
    scores: np.ndarray
    eigenvalues: np.ndarray
    metric_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class CountryPareto:
    rows: tuple[tuple[str, float, float], ...]
    gini: float

    @property
    def total(self) -> float:
        return math.fsum(count for _, count, _ in self.rows)


def raw_indicators(models: Sequence[ModelRecord]) -> tuple[tuple[int, ...], np.ndarray]:
    """Unstandardised (years x 8) indicator matrix.

    A year where no model reports a parameter count gets the mean of the
    other years' ``mean_log10_params``.
    """
    if not models:
        raise ValueError("derive_indicators needs at least one model record")
    by_year: dict[int, list[ModelRecord]] = defaultdict(list)
    for m in models:
        by_year[m.release_date.year].append(m)
    years = tuple(sorted(by_year))
    mat = np.empty((len(years), len(INDICATOR_NAMES)))
    for row, year in enumerate(years):
        group = by_year[year]
        n = len(group)
        params = [math.log10(m.parameter_count) for m in group if m.parameter_count]
        mat[row] = [
            n,
            np.mean(params) if params else np.nan,
            len({m.manufacturer for m in group if m.manufacturer}),
            len({m.country for m in group if m.country and m.country != UNKNOWN_COUNTRY}),
            np.mean([len(m.modalities) for m in group]),
            sum(m.documented for m in group) / n,
            sum(m.weights_access == "open" for m in group) / n,
            sum(m.license_class == "permissive" for m in group) / n,
        ]
    col = mat[:, 1]
    if np.isnan(col).all():
        col[:] = 0.0
    else:
        col[np.isnan(col)] = np.nanmean(col)
    return years, mat


def zscore_columns(mat: np.ndarray, names: Sequence[str]) -> np.ndarray:
    """Population z-scores per column; zero-variance columns are an error."""
    mat = np.asarray(mat, dtype=float)
    mean = mat.mean(axis=0)
    std = mat.std(axis=0)
    for k, s in enumerate(std):
        # spread relative to magnitude; guards against float noise on constant columns
        if s <= 1e-12 * max(1.0, abs(mean[k])):
            raise ZeroVarianceError(names[k])
    return (mat - mean) / std


def derive_indicators(models: Sequence[ModelRecord]) -> YearlyIndicators:
    years, raw = raw_indicators(models)
    return YearlyIndicators(years, zscore_columns(raw, INDICATOR_NAMES), INDICATOR_NAMES, raw)


def pca(data: Union[YearlyIndicators, np.ndarray], n_components: Optional[int] = None) -> PcaResult:
    """Eigen-decomposition of the column covariance.

    Loadings are unit vectors whose largest-magnitude entry is positive;
    explained-variance ratios are relative to the total variance, so they sum
    to 1 only when every component is kept. By default that is
    min(columns, rows): centred data has no variance beyond that rank.
    """
    if isinstance(data, YearlyIndicators):
        X, names = np.asarray(data.metrics, dtype=float), tuple(data.metric_names)
    else:
        X = np.asarray(data, dtype=float)
        names = tuple(f"x{k}" for k in range(X.shape[1]))
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("PCA needs at least two rows")
    p = X.shape[1]
    k = min(p, X.shape[0]) if n_components is None else n_components
    if not 1 <= k <= min(p, X.shape[0]):
        raise ValueError(f"n_components must be in [1, {min(p, X.shape[0])}], got {k}")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order].T
    for vec in evecs:
        if vec[np.argmax(np.abs(vec))] < 0:
            vec *= -1
    total = evals.sum()
    if total <= 0:
        raise ValueError("PCA undefined: data has zero total variance")
    comps = evecs[:k]
    return PcaResult(
        components=comps,
        explained_variance_ratio=evals[:k] / total,
        scores=Xc @ comps.T,
        eigenvalues=evals[:k],
        metric_names=names,
    )


def country_pareto(records: Sequence[BenchmarkRecord]) -> CountryPareto:
    """Fractional benchmark counts per country, largest first, with cumulative share."""
    if not records:
        raise ValueError("country_pareto needs at least one record")
    counts: dict[str, float] = defaultdict(float)
    for rec in records:
        countries = rec.countries() or [UNKNOWN_COUNTRY]
        for c in countries:
            counts[c] += 1.0 / len(countries)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    total = math.fsum(counts.values())
    rows = []
    running = 0.0
    for name, count in ordered:
        running += count
        rows.append((name, count, running / total))
    return CountryPareto(tuple(rows), metrics.gini([c for _, c in ordered]))


def benchmark_concentration_by_year(records: Sequence[BenchmarkRecord],
                                    blend_alpha: float = metrics.DEFAULT_BLEND_ALPHA,
                                    ) -> metrics.ConcentrationSeries:
    """Institutional authority HHI of each release-year cohort."""
    by_year: dict[int, list[BenchmarkRecord]] = defaultdict(list)
    for r in records:
        by_year[r.release_date.year].append(r)
    points = []
    for year in sorted(by_year):
        table = metrics.allocate_authority(by_year[year], blend_alpha=blend_alpha)
        if table.total > 0:
            points.append((year, metrics.hhi(table.values())))
    return metrics.ConcentrationSeries.from_pairs(points)


def model_concentration_by_year(models: Sequence[ModelRecord]) -> metrics.ConcentrationSeries:
    """HHI of model counts by manufacturer within each release year."""
    by_year: dict[int, Counter] = defaultdict(Counter)
    for m in models:
        by_year[m.release_date.year][m.manufacturer or "Unknown"] += 1
    return metrics.ConcentrationSeries.from_pairs(
        (year, metrics.hhi(list(by_year[year].values()))) for year in sorted(by_year))


# ---------------------------------------------------------------------------
# export


def write_indicators(ind: YearlyIndicators, path: Union[str, Path], fmt: str = "csv") -> Path:
    rows = [(year, *map(float, row)) for year, row in zip(ind.years, ind.metrics)]
    return write_table(path, ["year", *ind.metric_names], rows, fmt)


def write_loadings(res: PcaResult, path: Union[str, Path], fmt: str = "csv") -> Path:
    rows = [(f"PC{c}", name, float(value))
            for c, vec in enumerate(res.components, start=1)
            for name, value in zip(res.metric_names, vec)]
    return write_table(path, ["component", "metric", "loading"], rows, fmt)


def write_scores(res: PcaResult, years: Sequence[int], path: Union[str, Path],
                 fmt: str = "csv") -> Path:
    header = ["year", *(f"PC{c}" for c in range(1, res.scores.shape[1] + 1))]
    rows = [(year, *map(float, row)) for year, row in zip(years, res.scores)]
    return write_table(path, header, rows, fmt)


def write_pareto(pareto: CountryPareto, path: Union[str, Path], fmt: str = "csv") -> Path:
    return write_table(path, ["country", "count", "cumulative_share"], pareto.rows, fmt)
