"""Core domain records and the pair-key scheme.

The unit of analysis everywhere in this toolkit is a funding link: one
asserted ``<project, publication>`` pair. Two datasets become comparable by
giving every link the same canonical text key, built from the grant number
and the publication's normalized DOI.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import ValidationError

#: Separator between project id and DOI in a pair key. Grant numbers are
#: purely numeric and DOIs cannot start with a colon, so splitting at the
#: first occurrence is unambiguous even for DOIs that contain "::".
PAIR_KEY_SEPARATOR = "::"

_PROJECT_ID_RE = re.compile(r"[0-9]+")


class Source(str, Enum):
    """Where a funding link was asserted."""

    SYGMA = "SYGMA"
    OPENAIRE = "OPENAIRE"
    CROSSREF = "CROSSREF"
    ANNOTATION = "ANNOTATION"


def is_project_id(value: str) -> bool:
    """True iff ``value`` is a well-formed grant number (ASCII digits, non-empty)."""
    return bool(_PROJECT_ID_RE.fullmatch(value))


def make_pair_key(project_id: str, doi: str) -> str:
    """Build the canonical key for a ``<project, publication>`` pair.

    ``doi`` is expected to be normalized already (see :mod:`fundlink_audit.doi`);
    ``project_id`` is validated here.
    """
    if not is_project_id(project_id):
        raise ValidationError(f"invalid project id: {project_id!r}")
    if not doi:
        raise ValidationError("empty DOI in pair key")
    return f"{project_id}{PAIR_KEY_SEPARATOR}{doi}"


def split_pair_key(key: str) -> tuple[str, str]:
    """Recover ``(project_id, doi)`` from a pair key.

    Splits at the first separator so DOIs containing "::" round-trip.
    """
    project_id, sep, doi = key.partition(PAIR_KEY_SEPARATOR)
    if not sep:
        raise ValidationError(f"pair key without separator: {key!r}")
    return project_id, doi


@dataclass(frozen=True)
class ProjectRef:
    """One funded project from the project registry."""

    grant_number: str
    start_date: dt.date
    end_date: dt.date | None = None
    acronym: str | None = None

    def __post_init__(self):
        if not is_project_id(self.grant_number):
            raise ValidationError(f"invalid grant number: {self.grant_number!r}")
        if self.end_date is not None and self.end_date < self.start_date:
            raise ValidationError(
                f"project {self.grant_number}: end date {self.end_date} "
                f"before start date {self.start_date}"
            )


@dataclass(frozen=True)
class FundingLink:
    """One asserted ``<project, publication>`` pair with provenance."""

    project_id: str
    doi: str
    source: Source
    provenance: str = ""
    deduplicated: bool = False
    publication_date: dt.date | None = None
    report_date: dt.date | None = None

    def __post_init__(self):
        if not is_project_id(self.project_id):
            raise ValidationError(f"invalid project id: {self.project_id!r}")

    @property
    def pair_key(self) -> str:
        return make_pair_key(self.project_id, self.doi)


def _min_date(a: dt.date | None, b: dt.date | None) -> dt.date | None:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def merge_links(a: FundingLink, b: FundingLink) -> FundingLink:
    """Merge two assertions of the same pair into one link.

    Re-reporting of the same pair is common; the pair, not the report event,
    is what we audit. The merge is commutative so snapshot building does not
    depend on input order: earliest dates win, provenance is the sorted union,
    and the dedup-suspect flag is sticky.
    """
    if a.pair_key != b.pair_key:
        raise ValidationError(f"cannot merge different pairs: {a.pair_key} / {b.pair_key}")
    if a.source != b.source:
        raise ValidationError(f"cannot merge across sources: {a.source} / {b.source}")
    parts = set(a.provenance.split(";")) | set(b.provenance.split(";"))
    provenance = ";".join(sorted(p for p in parts if p))
    return replace(
        a,
        provenance=provenance,
        deduplicated=a.deduplicated or b.deduplicated,
        publication_date=_min_date(a.publication_date, b.publication_date),
        report_date=_min_date(a.report_date, b.report_date),
    )


@dataclass(frozen=True)
class Reject:
    """A record that failed parsing or validation, with a machine-readable reason."""

    reason: str
    raw: str


@dataclass
class DatasetSnapshot:
    """A labeled, dated, keyed set of funding links: one side of a comparison.

    ``mode`` records the DOI normalization applied at build time; snapshots
    built under different modes are not comparable. Not mutated after
    construction.
    """

    label: str
    snapshot_date: dt.date
    mode: str
    links: dict[str, FundingLink] = field(default_factory=dict)
    rejects: list[Reject] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.links)

    @property
    def key_set(self) -> frozenset[str]:
        return frozenset(self.links)
