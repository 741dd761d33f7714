"""Snapshot diffing, discrepancy classification, and the statistics funnel.

The diff partitions two snapshots' pair keys into matched, left-only, and
right-only sets. Left-only links (reported but absent from the graph) walk a
fixed rule ladder that attributes each one to a single cause; right-only
links (graph surplus) are verified against Crossref funding evidence,
imported annotations, and the dedup-suspect flag, with a fixed precedence.
Counts flow into a funnel whose stages must conserve: every stage's children
sum to the stage total, or the run aborts.

Everything here is deterministic: partitions are sorted, sampling is
sort-then-shuffle with a seeded PRNG, and shares are exact rationals.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping

from .doi import is_valid
from .errors import ConservationError, DataError, ValidationError
from .funder import date_plausible
from .ingest import Annotation, AnnotationLabel
from .model import DatasetSnapshot, FundingLink, ProjectRef, split_pair_key


@dataclass(frozen=True)
class Partition:
    """Diff outcome: three pairwise-disjoint, sorted key sets."""

    matched: tuple[str, ...]
    left_only: tuple[str, ...]
    right_only: tuple[str, ...]
    left_label: str = "left"
    right_label: str = "right"


def diff(left: DatasetSnapshot, right: DatasetSnapshot) -> Partition:
    """Partition two snapshots by pair key.

    Snapshots built under different normalization modes are incomparable and
    refuse to diff.
    """
    if left.mode != right.mode:
        raise DataError(
            f"incomparable snapshots: left normalized with {left.mode!r}, "
            f"right with {right.mode!r}"
        )
    left_keys = set(left.links)
    right_keys = set(right.links)
    return Partition(
        matched=tuple(sorted(left_keys & right_keys)),
        left_only=tuple(sorted(left_keys - right_keys)),
        right_only=tuple(sorted(right_keys - left_keys)),
        left_label=left.label,
        right_label=right.label,
    )


class LeftCauseCode(str, Enum):
    LATE_ARRIVAL = "LATE_ARRIVAL"
    PROJECT_NOT_IN_GRAPH = "PROJECT_NOT_IN_GRAPH"
    PUBLICATION_NOT_IN_GRAPH = "PUBLICATION_NOT_IN_GRAPH"
    MALFORMED_DOI = "MALFORMED_DOI"
    EXPECTED_FROM_CROSSREF_STRICT = "EXPECTED_FROM_CROSSREF_STRICT"
    RETRIEVABLE_VIA_RELAXED = "RETRIEVABLE_VIA_RELAXED"
    NOT_IN_CROSSREF_FUNDING = "NOT_IN_CROSSREF_FUNDING"


class RightStatusCode(str, Enum):
    CROSSREF_FUNDING_MATCH = "CROSSREF_FUNDING_MATCH"
    EXTERNAL_FUNDING_MATCH = "EXTERNAL_FUNDING_MATCH"
    DEDUP_SUSPECT = "DEDUP_SUSPECT"
    MANUALLY_CONFIRMED = "MANUALLY_CONFIRMED"
    DATA_MISTAKE = "DATA_MISTAKE"
    UNVERIFIED = "UNVERIFIED"


@dataclass(frozen=True)
class LeftCause:
    """Single cause per left-only link, plus the orthogonal date flag."""

    cause: LeftCauseCode
    date_implausible: bool = False
    evidence: str = ""


@dataclass(frozen=True)
class RightStatus:
    status: RightStatusCode
    evidence: str = ""


def classify_left_only(
    partition: Partition,
    *,
    newer_right: DatasetSnapshot | None = None,
    projects: Mapping[str, ProjectRef] | None = None,
    publication_index: frozenset[str] | set[str] | None = None,
    crossref_links_strict: set[str] | None = None,
    crossref_links_relaxed: set[str] | None = None,
    grace_years: int = 2,
    left_links: Mapping[str, FundingLink] | None = None,
) -> tuple[dict[str, LeftCause], dict[str, int]]:
    """Attribute every left-only key to exactly one cause.

    Rules fire in a fixed order; the first hit wins:

    1. key present in a newer right-side snapshot -> LATE_ARRIVAL
    2. project absent from the registry          -> PROJECT_NOT_IN_GRAPH
    3. DOI absent from the publication index     -> PUBLICATION_NOT_IN_GRAPH
    4. DOI fails validation                      -> MALFORMED_DOI
    5. pair in strict-rule Crossref links        -> EXPECTED_FROM_CROSSREF_STRICT
       (an anomaly: the graph should have mapped it)
    6. pair in relaxed-rule Crossref links       -> RETRIEVABLE_VIA_RELAXED
    7. otherwise                                 -> NOT_IN_CROSSREF_FUNDING

    Missing auxiliary inputs skip their rule and bump a warning counter
    instead of failing; the date-implausibility flag is set independently of
    the cause when the left link and its project are known.

    Returns the cause map and the warning counters.
    """
    skips: dict[str, int] = {}

    def skip(rule: str) -> None:
        skips[rule] = skips.get(rule, 0) + 1

    causes: dict[str, LeftCause] = {}
    for key in partition.left_only:
        project_id, doi_value = split_pair_key(key)

        date_implausible = False
        if left_links is None or projects is None:
            skip("date_flag")
        else:
            link = left_links.get(key)
            project = projects.get(project_id)
            if link is not None and project is not None:
                year = link.publication_date.year if link.publication_date else None
                date_implausible = not date_plausible(year, project, grace_years)

        cause = None
        if newer_right is None:
            skip("late_arrival")
        elif key in newer_right.links:
            cause = LeftCause(
                LeftCauseCode.LATE_ARRIVAL,
                date_implausible,
                f"present in {newer_right.label} ({newer_right.snapshot_date.isoformat()})",
            )
        if cause is None:
            if projects is None:
                skip("project_registry")
            elif project_id not in projects:
                cause = LeftCause(
                    LeftCauseCode.PROJECT_NOT_IN_GRAPH,
                    date_implausible,
                    f"project {project_id} not in registry",
                )
        if cause is None:
            if publication_index is None:
                skip("publication_index")
            elif doi_value not in publication_index:
                cause = LeftCause(
                    LeftCauseCode.PUBLICATION_NOT_IN_GRAPH,
                    date_implausible,
                    "doi not in publication index",
                )
        if cause is None and not is_valid(doi_value):
            cause = LeftCause(
                LeftCauseCode.MALFORMED_DOI,
                date_implausible,
                "doi fails the validation pattern",
            )
        if cause is None:
            if crossref_links_strict is None:
                skip("crossref_strict")
            elif key in crossref_links_strict:
                cause = LeftCause(
                    LeftCauseCode.EXPECTED_FROM_CROSSREF_STRICT,
                    date_implausible,
                    "pair present in crossref funding links under strict rules",
                )
        if cause is None:
            if crossref_links_relaxed is None:
                skip("crossref_relaxed")
            elif key in crossref_links_relaxed:
                cause = LeftCause(
                    LeftCauseCode.RETRIEVABLE_VIA_RELAXED,
                    date_implausible,
                    "pair present in crossref funding links under relaxed rules only",
                )
        if cause is None:
            cause = LeftCause(
                LeftCauseCode.NOT_IN_CROSSREF_FUNDING,
                date_implausible,
                "no crossref funding evidence",
            )
        causes[key] = cause
    return causes, skips


def verify_right_only(
    partition: Partition,
    crossref_links: set[str] | None = None,
    annotations: Mapping[str, Annotation] | None = None,
    links: Mapping[str, FundingLink] | None = None,
) -> tuple[dict[str, RightStatus], dict[str, int]]:
    """Assign every right-only key one verification status.

    Precedence puts structured, reproducible evidence above manual labels:

    1. exact pair in Crossref funding links -> CROSSREF_FUNDING_MATCH
    2. annotation EXTERNAL_MATCH            -> EXTERNAL_FUNDING_MATCH
    3. annotation CONFIRMED                 -> MANUALLY_CONFIRMED
    4. annotation DATA_MISTAKE              -> DATA_MISTAKE
    5. dedup-suspect (link flag, or an explicit DEDUP_SUSPECT annotation)
    6. otherwise UNVERIFIED (an explicit UNVERIFIED annotation adds nothing)

    Annotation keys not in the right-only set are stale; they are counted and
    ignored.
    """
    annotations = annotations or {}
    right_set = set(partition.right_only)
    warnings = {"stale_annotations": sum(1 for k in annotations if k not in right_set)}
    if warnings["stale_annotations"] == 0:
        warnings.pop("stale_annotations")

    statuses: dict[str, RightStatus] = {}
    for key in partition.right_only:
        if crossref_links is not None and key in crossref_links:
            statuses[key] = RightStatus(
                RightStatusCode.CROSSREF_FUNDING_MATCH,
                "exact <grant number, doi> pair in crossref funding data",
            )
            continue
        annotation = annotations.get(key)
        if annotation is not None and annotation.label is AnnotationLabel.EXTERNAL_MATCH:
            statuses[key] = RightStatus(
                RightStatusCode.EXTERNAL_FUNDING_MATCH, f"annotation:{annotation.evidence_source}"
            )
            continue
        if annotation is not None and annotation.label is AnnotationLabel.CONFIRMED:
            statuses[key] = RightStatus(
                RightStatusCode.MANUALLY_CONFIRMED, f"annotation:{annotation.evidence_source}"
            )
            continue
        if annotation is not None and annotation.label is AnnotationLabel.DATA_MISTAKE:
            statuses[key] = RightStatus(
                RightStatusCode.DATA_MISTAKE, f"annotation:{annotation.evidence_source}"
            )
            continue
        link = links.get(key) if links is not None else None
        if (link is not None and link.deduplicated) or (
            annotation is not None and annotation.label is AnnotationLabel.DEDUP_SUSPECT
        ):
            evidence = (
                f"annotation:{annotation.evidence_source}"
                if annotation is not None and annotation.label is AnnotationLabel.DEDUP_SUSPECT
                else "link attached to a deduplicated record"
            )
            statuses[key] = RightStatus(RightStatusCode.DEDUP_SUSPECT, evidence)
            continue
        statuses[key] = RightStatus(RightStatusCode.UNVERIFIED)
    return statuses, warnings


def sample_unmatched(keys: Iterable[str], n: int, seed: int) -> list[str]:
    """Draw a reproducible sample of keys for manual verification.

    Keys are sorted, shuffled by a Mersenne Twister seeded with ``seed``
    (``random.Random``), and the first ``min(n, len(keys))`` taken. The same
    inputs give the same sample on any machine, any run.
    """
    if n < 0:
        raise ValidationError("sample size must be >= 0")
    ordered = sorted(keys)
    random.Random(seed).shuffle(ordered)
    return ordered[:n]


#: Funnel stage tree: every stage's children must sum to the stage count.
#: When only some children are known, their sum may not exceed the parent.
FUNNEL_CHILDREN: dict[str, tuple[str, ...]] = {
    "left_only": ("late_arrival", "left_remaining"),
    "left_remaining": (
        "project_not_in_graph",
        "publication_not_in_graph",
        "malformed_doi",
        "expected_from_crossref_strict",
        "retrievable_via_relaxed",
        "not_in_crossref_funding",
    ),
    "right_only": ("crossref_funding_match", "right_unmatched"),
    "sampled": ("external_funding_match", "manual_review"),
    "manual_review": ("dedup_suspect", "manual_remaining"),
    "manual_remaining": ("manually_confirmed", "data_mistake", "unverified"),
}

#: Counts that may appear alongside the funnel stages.
CONTEXT_COUNTS = (
    "left_total",
    "right_total",
    "matched",
    "date_implausible_flagged",
)

_KNOWN_COUNTS = frozenset(FUNNEL_CHILDREN) | frozenset(
    child for children in FUNNEL_CHILDREN.values() for child in children
) | frozenset(CONTEXT_COUNTS)


@dataclass(frozen=True)
class FunnelStats:
    """Validated funnel counts plus derived shares as exact rationals."""

    counts: dict[str, int]
    shares: dict[str, Fraction | None]

    def percent(self, name: str, digits: int = 1) -> str:
        """Rounded display form of a share; 'n/a' when undefined."""
        share = self.shares.get(name)
        if share is None:
            return "n/a"
        return f"{float(share) * 100:.{digits}f}%"


def funnel_stats(counts: Mapping[str, int]) -> FunnelStats:
    """Validate a named count map and derive the funnel shares.

    Conservation is enforced stage by stage: with all children present their
    sum must equal the parent exactly; with a partial set it must not exceed
    it. Shares are exact fractions, never stored independently of the counts
    they derive from; a missing or zero denominator yields None.
    """
    clean: dict[str, int] = {}
    for name, value in counts.items():
        if name not in _KNOWN_COUNTS:
            raise ValidationError(f"unknown funnel count {name!r}")
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ValidationError(f"funnel count {name!r} must be a non-negative integer")
        clean[name] = value

    for parent, children in FUNNEL_CHILDREN.items():
        if parent not in clean:
            continue
        present = [c for c in children if c in clean]
        if not present:
            continue
        total = sum(clean[c] for c in present)
        if len(present) == len(children):
            if total != clean[parent]:
                raise ConservationError(
                    f"stage '{parent}' = {clean[parent]} but its children "
                    f"({' + '.join(present)}) sum to {total}"
                )
        elif total > clean[parent]:
            raise ConservationError(
                f"stage '{parent}' = {clean[parent]} exceeded by partial children sum {total}"
            )
    if "sampled" in clean and "right_unmatched" in clean and clean["sampled"] > clean["right_unmatched"]:
        raise ConservationError(
            f"sample of {clean['sampled']} drawn from only {clean['right_unmatched']} unmatched keys"
        )

    def ratio(numerator: int | None, denominator_name: str) -> Fraction | None:
        denominator = clean.get(denominator_name)
        if numerator is None or not denominator:
            return None
        return Fraction(numerator, denominator)

    remaining = clean.get("left_remaining")
    relaxed = clean.get("retrievable_via_relaxed")
    shares: dict[str, Fraction | None] = {
        "late_share": ratio(clean.get("late_arrival"), "left_only"),
        "not_in_crossref_share": (
            Fraction(remaining - relaxed, remaining)
            if remaining and relaxed is not None
            else None
        ),
        "crossref_match_share": ratio(clean.get("crossref_funding_match"), "right_only"),
        "external_match_share": ratio(clean.get("external_funding_match"), "sampled"),
        "matched_left_share": ratio(clean.get("matched"), "left_total"),
        "matched_right_share": ratio(clean.get("matched"), "right_total"),
    }
    return FunnelStats(clean, shares)


def funnel_counts(
    partition: Partition | None = None,
    left_causes: Mapping[str, LeftCause] | None = None,
    right_statuses: Mapping[str, RightStatus] | None = None,
    sample: Iterable[str] | None = None,
) -> dict[str, int]:
    """Aggregate classification outputs into the funnel's named counts.

    With a sample given, the verification stages count statuses inside the
    sample only (that is where manual evidence exists); otherwise they cover
    all unmatched right-only keys.
    """
    counts: dict[str, int] = {}
    if partition is not None:
        counts["matched"] = len(partition.matched)
        counts["left_only"] = len(partition.left_only)
        counts["right_only"] = len(partition.right_only)
        counts["left_total"] = len(partition.matched) + len(partition.left_only)
        counts["right_total"] = len(partition.matched) + len(partition.right_only)

    if left_causes is not None:
        counts.setdefault("left_only", len(left_causes))
        by_cause: dict[LeftCauseCode, int] = {}
        for cause in left_causes.values():
            by_cause[cause.cause] = by_cause.get(cause.cause, 0) + 1
        late = by_cause.get(LeftCauseCode.LATE_ARRIVAL, 0)
        counts["late_arrival"] = late
        counts["left_remaining"] = len(left_causes) - late
        counts["project_not_in_graph"] = by_cause.get(LeftCauseCode.PROJECT_NOT_IN_GRAPH, 0)
        counts["publication_not_in_graph"] = by_cause.get(LeftCauseCode.PUBLICATION_NOT_IN_GRAPH, 0)
        counts["malformed_doi"] = by_cause.get(LeftCauseCode.MALFORMED_DOI, 0)
        counts["expected_from_crossref_strict"] = by_cause.get(
            LeftCauseCode.EXPECTED_FROM_CROSSREF_STRICT, 0
        )
        counts["retrievable_via_relaxed"] = by_cause.get(LeftCauseCode.RETRIEVABLE_VIA_RELAXED, 0)
        counts["not_in_crossref_funding"] = by_cause.get(LeftCauseCode.NOT_IN_CROSSREF_FUNDING, 0)
        counts["date_implausible_flagged"] = sum(
            1 for cause in left_causes.values() if cause.date_implausible
        )

    if right_statuses is not None:
        counts.setdefault("right_only", len(right_statuses))
        crossref = sum(
            1
            for status in right_statuses.values()
            if status.status is RightStatusCode.CROSSREF_FUNDING_MATCH
        )
        counts["crossref_funding_match"] = crossref
        counts["right_unmatched"] = len(right_statuses) - crossref

        if sample is not None:
            sample_keys = list(sample)
            scope = [right_statuses[k] for k in sample_keys if k in right_statuses]
            counts["sampled"] = len(sample_keys)
        else:
            scope = [
                status
                for status in right_statuses.values()
                if status.status is not RightStatusCode.CROSSREF_FUNDING_MATCH
            ]
        by_status: dict[RightStatusCode, int] = {}
        for status in scope:
            by_status[status.status] = by_status.get(status.status, 0) + 1
        external = by_status.get(RightStatusCode.EXTERNAL_FUNDING_MATCH, 0)
        counts["external_funding_match"] = external
        counts["manual_review"] = len(scope) - external
        counts["dedup_suspect"] = by_status.get(RightStatusCode.DEDUP_SUSPECT, 0)
        counts["manually_confirmed"] = by_status.get(RightStatusCode.MANUALLY_CONFIRMED, 0)
        counts["data_mistake"] = by_status.get(RightStatusCode.DATA_MISTAKE, 0)
        counts["unverified"] = by_status.get(RightStatusCode.UNVERIFIED, 0)
        # Derived bottom-up so a stray status inside the sample scope trips
        # the manual_review conservation check instead of vanishing.
        counts["manual_remaining"] = (
            counts["manually_confirmed"] + counts["data_mistake"] + counts["unverified"]
        )
    return counts
