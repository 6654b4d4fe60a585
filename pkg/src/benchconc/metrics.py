"""Authority scoring, concentration indices and rank-stability measures."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from datetime import date
from typing import Callable, Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats

from .records import UNLISTED_ENTITY, BenchmarkRecord, EngagementSignals

DEFAULT_BLEND_ALPHA = 0.25
DAYS_PER_YEAR = 365.25
VARIANT_KINDS = ("baseline", "rate-per-age", "windowed", "exponential-decay")


class UndefinedMetricError(ValueError):
    """Raised when an index is undefined for its input (e.g. zero total mass)."""


def authority_weight(signals: EngagementSignals, blend_alpha: float = DEFAULT_BLEND_ALPHA) -> float:
    """ln(1 + citations) + blend_alpha * ln(1 + stars)."""
    if blend_alpha < 0:
        raise ValueError(f"blend_alpha must be >= 0, got {blend_alpha}")
    return math.log1p(signals.citations) + blend_alpha * math.log1p(signals.stars)


class AuthorityTable:
    """Entity name -> nonnegative authority mass."""

    def __init__(self, entries: Mapping[str, float]):
        clean = {}
        for name, mass in entries.items():
            mass = float(mass)
            if not mass >= 0:
                raise ValueError(f"authority mass for {name!r} must be >= 0, got {mass}")
            clean[name] = mass
        self.entries: dict[str, float] = clean
        self.total = math.fsum(clean.values())

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __getitem__(self, name: str) -> float:
        return self.entries[name]

    def __repr__(self) -> str:
        return f"AuthorityTable({len(self)} entities, total={self.total:.6g})"

    def share(self, name: str) -> float:
        if self.total <= 0:
            raise UndefinedMetricError("shares undefined: total authority is zero")
        return self.entries[name] / self.total

    def ranked(self) -> list[tuple[str, float]]:
        """All (entity, mass) by mass descending, ties by name."""
        return sorted(self.entries.items(), key=lambda kv: (-kv[1], kv[0]))

    def values(self) -> np.ndarray:
        return np.fromiter(self.entries.values(), dtype=float, count=len(self.entries))

    def filtered(self, keep: Callable[[str], bool]) -> "AuthorityTable":
        return AuthorityTable({k: v for k, v in self.entries.items() if keep(k)})


@dataclass(frozen=True)
class RobustnessVariant:
    """How a benchmark's weight is adjusted for its age before allocation."""

    kind: str = "baseline"
    reference_date: Optional[date] = None
    window_years: Optional[float] = None
    half_life_years: Optional[float] = None
    min_age_years: Optional[float] = None

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise ValueError(f"unknown variant kind {self.kind!r}; expected one of {VARIANT_KINDS}")
        needed = {
            "baseline": set(),
            "rate-per-age": {"min_age_years"},
            "windowed": {"window_years"},
            "exponential-decay": {"half_life_years"},
        }[self.kind]
        if self.kind == "rate-per-age" and self.min_age_years is None:
            object.__setattr__(self, "min_age_years", 0.25)
        for param in ("window_years", "half_life_years", "min_age_years"):
            value = getattr(self, param)
            if param in needed:
                if value is None:
                    raise ValueError(f"{self.kind} variant requires {param}")
                if not value > 0:
                    raise ValueError(f"{param} must be positive, got {value}")
            elif value is not None:
                raise ValueError(f"{param} does not apply to the {self.kind} variant")
        if self.kind != "baseline" and self.reference_date is None:
            raise ValueError(f"{self.kind} variant requires a reference_date")

    @classmethod
    def baseline(cls) -> "RobustnessVariant":
        return cls()

    @classmethod
    def rate_per_age(cls, reference_date: date, min_age_years: float = 0.25) -> "RobustnessVariant":
        return cls("rate-per-age", reference_date, min_age_years=min_age_years)

    @classmethod
    def windowed(cls, reference_date: date, window_years: float) -> "RobustnessVariant":
        return cls("windowed", reference_date, window_years=window_years)

    @classmethod
    def decay(cls, reference_date: date, half_life_years: float) -> "RobustnessVariant":
        return cls("exponential-decay", reference_date, half_life_years=half_life_years)

    def label(self) -> str:
        if self.kind == "rate-per-age":
            return f"rate-per-age(>={self.min_age_years:g}y)"
        if self.kind == "windowed":
            return f"windowed({self.window_years:g}y)"
        if self.kind == "exponential-decay":
            return f"decay(h={self.half_life_years:g}y)"
        return "baseline"

    def age_years(self, released: date) -> float:
        days = (self.reference_date - released).days
        if days < 0:
            raise ValueError(
                f"reference_date {self.reference_date} precedes release date {released}"
            )
        return days / DAYS_PER_YEAR

    def adjust(self, weight: float, released: date) -> float:
        if self.kind == "baseline":
            return weight
        age = self.age_years(released)
        if self.kind == "rate-per-age":
            return weight / max(age, self.min_age_years)
        if self.kind == "windowed":
            return weight if age <= self.window_years else 0.0
        return weight * 0.5 ** (age / self.half_life_years)


def benchmark_weight(record: BenchmarkRecord, variant: RobustnessVariant = RobustnessVariant(),
                     blend_alpha: float = DEFAULT_BLEND_ALPHA) -> float:
    return variant.adjust(authority_weight(record.signals, blend_alpha), record.release_date)


def allocate_authority(records: Sequence[BenchmarkRecord],
                       variant: RobustnessVariant = RobustnessVariant(),
                       blend_alpha: float = DEFAULT_BLEND_ALPHA,
                       group_by: str = "institution") -> AuthorityTable:
    """Split each benchmark's weight equally over its distinct grouped entities.

    Benchmarks with no affiliation book their whole weight to
    ``Unknown/unlisted``.
    """
    if not records:
        raise ValueError("allocate_authority needs at least one record")
    if group_by not in ("institution", "country"):
        raise ValueError(f"group_by must be 'institution' or 'country', got {group_by!r}")
    mass: dict[str, float] = defaultdict(float)
    for rec in records:
        weight = benchmark_weight(rec, variant, blend_alpha)
        entities = rec.institutions() if group_by == "institution" else rec.countries()
        if not entities:
            entities = [UNLISTED_ENTITY]
        share = weight / len(entities)
        for name in entities:
            mass[name] += share
    return AuthorityTable(mass)


def _as_nonnegative(values: Iterable[float], what: str) -> np.ndarray:
    x = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{what} expects a 1-D sequence")
    if x.size == 0:
        raise UndefinedMetricError(f"{what} of an empty sequence is undefined")
    if np.any(~np.isfinite(x)) or np.any(x < 0):
        raise ValueError(f"{what} expects finite nonnegative values")
    return x


def gini(values: Iterable[float]) -> float:
    """Population Gini coefficient, sum_ij |x_i - x_j| / (2 n^2 mean)."""
    x = _as_nonnegative(values, "gini")
    total = x.sum()
    if total <= 0:
        raise UndefinedMetricError("gini is undefined when all values are zero")
    x = np.sort(x)
    if x[0] == x[-1]:
        return 0.0
    n = x.size
    # sorted closed form of the pairwise sum
    coef = 2.0 * np.arange(1, n + 1) - n - 1
    # cancellation can leave a -1e-17 residue on near-equal inputs
    return max(0.0, float(np.dot(coef, x) / (n * total)))


def hhi(values: Iterable[float]) -> float:
    """Herfindahl-Hirschman index: sum of squared shares."""
    x = _as_nonnegative(values, "hhi")
    total = x.sum()
    if total <= 0:
        raise UndefinedMetricError("hhi is undefined when the total is zero")
    shares = x / total
    return float(np.dot(shares, shares))


def top_shares(table: AuthorityTable, k: int) -> list[tuple[str, float]]:
    if k < 1 or k > len(table):
        raise ValueError(f"k must be in [1, {len(table)}], got {k}")
    if table.total <= 0:
        raise UndefinedMetricError("shares undefined: total authority is zero")
    return [(name, mass / table.total) for name, mass in table.ranked()[:k]]


def top_k_set(table: AuthorityTable, k: int) -> set[str]:
    if k < 1 or k > len(table):
        raise ValueError(f"table has {len(table)} entities, need at least k={k}")
    return {name for name, _ in table.ranked()[:k]}


def jaccard_top_k(a: AuthorityTable, b: AuthorityTable, k: int = 10) -> float:
    sa, sb = top_k_set(a, k), top_k_set(b, k)
    return len(sa & sb) / len(sa | sb)


def union_ranks(a: AuthorityTable, b: AuthorityTable, k: int = 20,
                ) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Ranks (1 = largest) of the top-k union within each table.

    Average ranks on ties; entities missing from a table share the bottom
    ranks of the union.
    """
    union = sorted(top_k_set(a, k) | top_k_set(b, k))

    def ranks(t: AuthorityTable) -> np.ndarray:
        key = np.array([-t.entries[n] if n in t else np.inf for n in union])
        return stats.rankdata(key, method="average")

    return union, ranks(a), ranks(b)


def spearman_top_union(a: AuthorityTable, b: AuthorityTable, k: int = 20) -> float:
    """Pearson correlation of the two rank vectors over the top-k union."""
    union, ra, rb = union_ranks(a, b, k)
    if len(union) < 2:
        raise UndefinedMetricError("rank correlation needs at least two entities in the union")
    da, db = ra - ra.mean(), rb - rb.mean()
    denom = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if denom == 0:
        raise UndefinedMetricError("rank correlation undefined: one ranking is entirely tied")
    return float(np.dot(da, db) / denom)


@dataclass(frozen=True)
class ConcentrationSeries:
    years: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.years) != len(self.values):
            raise ValueError("years and values must have equal length")
        if any(b <= a for a, b in zip(self.years, self.years[1:])):
            raise ValueError("years must be strictly increasing")
        if any(not 0 <= v <= 1 for v in self.values):
            raise ValueError("concentration values must lie in [0, 1]")

    @classmethod
    def from_pairs(cls, points: Iterable[tuple[int, float]]) -> "ConcentrationSeries":
        pts = list(points)
        return cls(tuple(int(y) for y, _ in pts), tuple(float(v) for _, v in pts))


class TrendFit(NamedTuple):
    annual_change_rate: float
    ci95: tuple[float, float]
    slope: float
    slope_stderr: float
    n: int


def trend_fit(series: ConcentrationSeries) -> TrendFit:
    """Log-linear OLS trend; rate and CI are exp(slope) - 1 transformed."""
    n = len(series.years)
    if n < 3:
        raise ValueError(f"trend fit needs at least 3 points, got {n}")
    if any(v <= 0 for v in series.values):
        raise ValueError("trend fit needs strictly positive values")
    x = np.asarray(series.years, dtype=float)
    y = np.log(np.asarray(series.values, dtype=float))
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    slope = float(np.dot(xc, y - y.mean()) / sxx)
    intercept = y.mean() - slope * x.mean()
    resid = y - (intercept + slope * x)
    sigma2 = float(np.dot(resid, resid)) / (n - 2)
    se = math.sqrt(sigma2 / sxx)
    q = float(stats.t.ppf(0.975, n - 2))
    lo, hi = slope - q * se, slope + q * se
    return TrendFit(math.expm1(slope), (math.expm1(lo), math.expm1(hi)), slope, se, n)


def concentration_summary(table: AuthorityTable, k: int = 3) -> dict:
    """Gini, HHI and top-k shares of a table, for reports."""
    values = table.values()
    return {
        "entities": len(table),
        "total": table.total,
        "gini": gini(values),
        "hhi": hhi(values),
        "top_shares": [[n, s] for n, s in top_shares(table, min(k, len(table)))],
    }


def default_variants(reference_date: date) -> list[RobustnessVariant]:
    """Baseline, rate/age, 1-3 year windows and 1/2/3/5 year half-lives."""
    return [
        RobustnessVariant.baseline(),
        RobustnessVariant.rate_per_age(reference_date, 0.25),
        *(RobustnessVariant.windowed(reference_date, w) for w in (1, 2, 3)),
        *(RobustnessVariant.decay(reference_date, h) for h in (1, 2, 3, 5)),
    ]


def robustness_table(records: Sequence[BenchmarkRecord],
                     variants: Sequence[RobustnessVariant],
                     blend_alpha: float = DEFAULT_BLEND_ALPHA,
                     group_by: str = "institution",
                     jaccard_k: int = 10, spearman_k: int = 20,
                     keep: Optional[Callable[[str], bool]] = None) -> list[dict]:
    """Gini/HHI of each variant and its rank agreement with the first (reference) variant."""
    tables = []
    for v in variants:
        t = allocate_authority(records, v, blend_alpha, group_by)
        tables.append(t.filtered(keep) if keep else t)
    ref = tables[0]
    ref_gini, ref_hhi = gini(ref.values()), hhi(ref.values())
    rows = []
    for v, t in zip(variants, tables):
        row = dict.fromkeys(("gini", "delta_gini_pct", "hhi", "delta_hhi_pct", "spearman",
                             "jaccard"))
        row = {"variant": v.label(), **row}
        if t.total > 0:
            g, h = gini(t.values()), hhi(t.values())
            row.update(gini=g, hhi=h, delta_hhi_pct=100.0 * (h - ref_hhi) / ref_hhi,
                       delta_gini_pct=100.0 * (g - ref_gini) / ref_gini if ref_gini else None)
            row["jaccard"] = jaccard_top_k(ref, t, min(jaccard_k, len(ref), len(t)))
            try:
                row["spearman"] = spearman_top_union(ref, t, min(spearman_k, len(ref), len(t)))
            except UndefinedMetricError:
                pass
        # a variant that zeroes every benchmark (e.g. a window older than all
        # releases) leaves its indices undefined
        rows.append(row)
    return rows
