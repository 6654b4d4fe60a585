"""Validated record types shared by every analysis module."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from typing import Optional

UNKNOWN_COUNTRY = "Unknown"
UNLISTED_ENTITY = "Unknown/unlisted"

LICENSE_CLASSES = ("permissive", "community", "closed", "unspecified")
WEIGHTS_ACCESS = ("open", "gated", "unspecified")


@dataclass(frozen=True)
class EngagementSignals:
    citations: int
    stars: int

    def __post_init__(self):
        if self.citations < 0 or self.stars < 0:
            raise ValueError(f"engagement counts must be >= 0, got {self}")


@dataclass(frozen=True, order=True)
class Affiliation:
    author: str
    institution: str
    country: str = UNKNOWN_COUNTRY


@dataclass(frozen=True)
class BenchmarkRecord:
    id: str
    name: str
    release_date: date
    citations: int
    stars: int
    forks: Optional[int] = None
    watchers: Optional[int] = None
    open_issues: Optional[int] = None
    sample_size: Optional[int] = None
    category: str = ""
    authors: tuple[str, ...] = ()
    affiliations: tuple[Affiliation, ...] = ()

    def __post_init__(self):
        for name in ("citations", "stars", "forks", "watchers", "open_issues"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{self.id}: {name} must be >= 0, got {value}")
        if self.sample_size is not None and self.sample_size <= 0:
            raise ValueError(f"{self.id}: sample_size must be positive")
        if self.authors:
            listed = set(self.authors)
            for aff in self.affiliations:
                if aff.author not in listed:
                    raise ValueError(
                        f"{self.id}: affiliation references unknown author {aff.author!r}"
                    )

    @property
    def signals(self) -> EngagementSignals:
        return EngagementSignals(self.citations, self.stars)

    def institutions(self) -> list[str]:
        """Distinct institutions in first-seen order."""
        return list(dict.fromkeys(a.institution for a in self.affiliations))

    def countries(self) -> list[str]:
        return list(dict.fromkeys(a.country or UNKNOWN_COUNTRY for a in self.affiliations))


@dataclass(frozen=True)
class ModelRecord:
    id: str
    name: str
    release_date: date
    license_class: str = "unspecified"
    weights_access: str = "unspecified"
    modalities: tuple[str, ...] = ()
    parameter_count: Optional[int] = None
    documented: bool = False
    manufacturer: str = ""
    country: str = UNKNOWN_COUNTRY

    def __post_init__(self):
        if self.license_class not in LICENSE_CLASSES:
            raise ValueError(f"{self.id}: unknown license_class {self.license_class!r}")
        if self.weights_access not in WEIGHTS_ACCESS:
            raise ValueError(f"{self.id}: unknown weights_access {self.weights_access!r}")
        if self.parameter_count is not None and self.parameter_count <= 0:
            raise ValueError(f"{self.id}: parameter_count must be positive")


@dataclass(frozen=True)
class SnapshotManifest:
    source_label: str
    snapshot_date: Optional[date]
    record_count: int
    checksum: str
    imprecise_dates: tuple[int, ...] = field(default=())
    sidecar_checksum: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "source_label": self.source_label,
            "snapshot_date": self.snapshot_date.isoformat() if self.snapshot_date else None,
            "record_count": self.record_count,
            "checksum": self.checksum,
            "imprecise_date_rows": list(self.imprecise_dates),
            "sidecar_checksum": self.sidecar_checksum,
        }
