"""Deterministic rendering of audit outputs.

Two formats. MACHINE is a single JSON document with every count, every share
as an exact fraction plus a rounded percentage, the rule constants, and the
config that produced the run. HUMAN is a readable funnel: the comparison
overview, the left-only cause breakdown, and the right-only verification
breakdown. Identical inputs render to identical bytes; nothing here reads
the clock. Exactness lives in the data, rounding in the view.
"""

from __future__ import annotations

import csv
import io
import json
from enum import Enum

from .config import AuditConfig
from .doi import DOI_PATTERN, DOI_PATTERN_DOTLESS
from .errors import DataError
from .files import atomic_write_text
from .funder import RELAXED_KEYWORDS, STRICT_FUNDER_DOIS, STRICT_FUNDER_NAMES
from .reconcile import (
    FunnelStats,
    LeftCause,
    LeftCauseCode,
    Partition,
    RightStatus,
    RightStatusCode,
)

REPORT_FORMAT = "fundlink-audit-report/1"

CLASSIFICATION_HEADER = ("pair_key", "cause_or_status", "date_implausible", "evidence")


class ReportFormat(str, Enum):
    MACHINE = "machine"
    HUMAN = "human"


def rule_constants() -> dict:
    return {
        "strict_funder_dois": list(STRICT_FUNDER_DOIS),
        "strict_funder_names": list(STRICT_FUNDER_NAMES),
        "relaxed_keywords": list(RELAXED_KEYWORDS),
        "doi_pattern": DOI_PATTERN,
        "doi_pattern_dotless": DOI_PATTERN_DOTLESS,
    }


def _share_entries(stats: FunnelStats) -> dict:
    out = {}
    for name, share in stats.shares.items():
        if share is None:
            out[name] = None
        else:
            out[name] = {
                "numerator": share.numerator,
                "denominator": share.denominator,
                "percent": stats.percent(name),
            }
    return out


def render_report(
    stats: FunnelStats,
    partition: Partition | None = None,
    config: AuditConfig | None = None,
    fmt: ReportFormat = ReportFormat.MACHINE,
) -> str:
    if fmt is ReportFormat.MACHINE:
        doc = {
            "report_format": REPORT_FORMAT,
            "rules": rule_constants(),
            "config": config.to_dict() if config is not None else None,
            "partition": (
                {
                    "left_label": partition.left_label,
                    "right_label": partition.right_label,
                    "matched": len(partition.matched),
                    "left_only": len(partition.left_only),
                    "right_only": len(partition.right_only),
                }
                if partition is not None
                else None
            ),
            "counts": dict(sorted(stats.counts.items())),
            "shares": _share_entries(stats),
        }
        return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    return _render_human(stats, partition, config)


def _fmt_count(counts: dict, name: str) -> str:
    return f"{counts[name]:,}" if name in counts else "-"


def _render_human(stats: FunnelStats, partition: Partition | None, config: AuditConfig | None) -> str:
    counts = stats.counts
    lines: list[str] = []
    add = lines.append

    def row(indent: int, label: str, count_name: str, share: str = "") -> None:
        text = f"{'  ' * indent}{label}"
        add(f"  {text:<44}{_fmt_count(counts, count_name):>12}{('  ' + share) if share else ''}")

    add("funding-link audit report")
    add("=========================")
    add("")
    add("comparison overview")
    add("-------------------")
    if partition is not None:
        left_total = len(partition.matched) + len(partition.left_only)
        right_total = len(partition.matched) + len(partition.right_only)
        add(f"  left  snapshot: {partition.left_label} ({left_total:,} pairs)")
        add(f"  right snapshot: {partition.right_label} ({right_total:,} pairs)")
        add(
            f"  matched {len(partition.matched):,} | left-only {len(partition.left_only):,}"
            f" | right-only {len(partition.right_only):,}"
        )
    else:
        add("  (no partition supplied; counts below were injected)")
    add("")
    add("left-only funnel: reported links missing from the right dataset")
    add("----------------------------------------------------------------")
    row(0, "left-only total", "left_only")
    row(1, "arrived late in the graph", "late_arrival", f"{stats.percent('late_share')} of left-only")
    row(1, "still missing", "left_remaining")
    row(2, "project not in graph", "project_not_in_graph")
    row(2, "publication not in graph", "publication_not_in_graph")
    row(2, "malformed doi", "malformed_doi")
    row(2, "expected from crossref (strict rules)", "expected_from_crossref_strict")
    row(2, "retrievable via relaxed rules only", "retrievable_via_relaxed")
    row(2, "not in crossref funding", "not_in_crossref_funding")
    add(f"  links absent from crossref funding too: {stats.percent('not_in_crossref_share')} of still-missing")
    if "date_implausible_flagged" in counts:
        row(0, "flagged date-implausible (orthogonal)", "date_implausible_flagged")
    add("")
    add("right-only funnel: graph surplus, independently verified")
    add("---------------------------------------------------------")
    row(0, "right-only total", "right_only")
    row(
        1,
        "matched to crossref funding data",
        "crossref_funding_match",
        f"{stats.percent('crossref_match_share')} of right-only",
    )
    row(1, "unmatched", "right_unmatched")
    row(0, "sample drawn for verification", "sampled")
    row(
        1,
        "matched in external evidence",
        "external_funding_match",
        f"{stats.percent('external_match_share')} of sample",
    )
    row(1, "manual review", "manual_review")
    row(2, "dedup-suspect", "dedup_suspect")
    row(2, "remaining", "manual_remaining")
    row(3, "confirmed", "manually_confirmed")
    row(3, "data mistake", "data_mistake")
    row(3, "unverified", "unverified")
    add("")
    add("rules")
    add("-----")
    add(f"  doi validation pattern:          {DOI_PATTERN}")
    add(f"  doi validation pattern (dotless): {DOI_PATTERN_DOTLESS}")
    add(f"  strict funder dois:   {', '.join(STRICT_FUNDER_DOIS)}")
    add(f"  strict funder names:  {' | '.join(STRICT_FUNDER_NAMES)}")
    add(f"  relaxed keywords:     {', '.join(RELAXED_KEYWORDS)}")
    add("")
    add("config")
    add("------")
    if config is not None:
        add("  " + json.dumps(config.to_dict(), sort_keys=True, ensure_ascii=False))
    else:
        add("  (none supplied)")
    return "\n".join(lines) + "\n"


def write_left_classification(path, causes: dict[str, LeftCause]) -> None:
    """CSV `pair_key,cause_or_status,date_implausible,evidence`, sorted by key."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CLASSIFICATION_HEADER)
    for key in sorted(causes):
        cause = causes[key]
        writer.writerow([key, cause.cause.value, "true" if cause.date_implausible else "false", cause.evidence])
    atomic_write_text(path, buf.getvalue())


def write_right_classification(path, statuses: dict[str, RightStatus]) -> None:
    """Same schema as the left file; the date flag column stays empty."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CLASSIFICATION_HEADER)
    for key in sorted(statuses):
        status = statuses[key]
        writer.writerow([key, status.status.value, "", status.evidence])
    atomic_write_text(path, buf.getvalue())


def _read_classification_rows(path):
    with open(path, "r", encoding="utf-8-sig", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != list(CLASSIFICATION_HEADER):
            raise DataError(f"{path}: not a classification file")
        for row in reader:
            if len(row) != len(CLASSIFICATION_HEADER):
                raise DataError(f"{path}: malformed row {row!r}")
            yield row


def load_left_classification(path) -> dict[str, LeftCause]:
    out: dict[str, LeftCause] = {}
    for key, value, flag, evidence in _read_classification_rows(path):
        try:
            code = LeftCauseCode(value)
        except ValueError as exc:
            raise DataError(f"{path}: unknown cause {value!r}") from exc
        out[key] = LeftCause(code, flag.strip().lower() == "true", evidence)
    return out


def load_right_classification(path) -> dict[str, RightStatus]:
    out: dict[str, RightStatus] = {}
    for key, value, _flag, evidence in _read_classification_rows(path):
        try:
            code = RightStatusCode(value)
        except ValueError as exc:
            raise DataError(f"{path}: unknown status {value!r}") from exc
        out[key] = RightStatus(code, evidence)
    return out
