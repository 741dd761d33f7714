"""Streaming readers for the audit's input families.

All readers share one contract: well-formed records come out as domain
objects, malformed rows land in the ingest log with a machine-readable
reason, and nothing disappears silently. After a stream is drained,
``rows_in == emitted + rejected + skipped_no_doi`` holds exactly; the CLI
and the test suite both assert it.

Readers reject bad rows instead of aborting: real feeds contain malformed
DOIs and an audit has to quantify them, not die on the first one. Fatal
errors are reserved for inputs that make the whole file meaningless
(missing or wrong header, duplicate registry entries, conflicting
annotations, corrupt compression).
"""

from __future__ import annotations

import csv
import datetime as dt
import gzip
import io
import json
import re
import zlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .doi import NormalizationMode, normalize
from .errors import DataError, MalformedDoiError, ValidationError
from .model import (
    DatasetSnapshot,
    FundingLink,
    ProjectRef,
    Reject,
    Source,
    is_project_id,
    merge_links,
    split_pair_key,
)

SYGMA_HEADER = ("project_id", "doi", "title", "publication_date", "report_date", "record_id")
PROJECT_HEADER = ("grant_number", "acronym", "start_date", "end_date")
ANNOTATION_HEADER = ("pair_key", "label", "evidence_source", "note")

# Machine-readable reject reasons.
MALFORMED_DOI = "MALFORMED_DOI"
BAD_PROJECT_ID = "BAD_PROJECT_ID"
BAD_ROW = "BAD_ROW"
BAD_DATE = "BAD_DATE"
BAD_DATE_RANGE = "BAD_DATE_RANGE"
BAD_PAIR_KEY = "BAD_PAIR_KEY"
PARSE_ERROR = "PARSE_ERROR"
UNKNOWN_LABEL = "UNKNOWN_LABEL"
CORRUPT_FILE = "CORRUPT_FILE"
MISSING_FIELD = "MISSING_FIELD"

_CHUNK = 65536
_ITEMS_PREFIX_RE = re.compile(r'\s*\{\s*"items"\s*:\s*\[')


class AnnotationLabel(str, Enum):
    CONFIRMED = "CONFIRMED"
    DATA_MISTAKE = "DATA_MISTAKE"
    UNVERIFIED = "UNVERIFIED"
    DEDUP_SUSPECT = "DEDUP_SUSPECT"
    EXTERNAL_MATCH = "EXTERNAL_MATCH"


@dataclass(frozen=True)
class FunderAssertion:
    """One publisher-deposited funder statement on a work."""

    funder_doi: str | None = None
    name: str | None = None
    awards: tuple[str, ...] = ()


@dataclass(frozen=True)
class CrossrefWork:
    """The slice of a Crossref work record the audit needs."""

    doi: str
    work_type: str = ""
    issued_year: int | None = None
    funders: tuple[FunderAssertion, ...] = ()


@dataclass(frozen=True)
class Annotation:
    """One manual-verification verdict imported from an annotation sheet."""

    pair_key: str
    label: AnnotationLabel
    evidence_source: str = ""
    note: str = ""


@dataclass
class IngestLog:
    """Counts and reject trail for one ingest run.

    ``emitted`` counts accepted rows (a re-assertion of an already-seen pair
    still counts: deduplication happens later, in the snapshot builder).
    """

    rows_in: int = 0
    emitted: int = 0
    skipped_no_doi: int = 0
    rejects: list[Reject] = field(default_factory=list)

    @property
    def rejected(self) -> int:
        return len(self.rejects)

    def reject(self, reason: str, raw: str) -> None:
        self.rejects.append(Reject(reason, raw))

    def reject_rate(self) -> float:
        return self.rejected / self.rows_in if self.rows_in else 0.0

    def assert_conserved(self) -> None:
        out = self.emitted + self.rejected + self.skipped_no_doi
        if self.rows_in != out:
            raise DataError(
                f"row conservation violated: {self.rows_in} rows in, "
                f"{self.emitted} emitted + {self.rejected} rejected + "
                f"{self.skipped_no_doi} skipped = {out}"
            )

    def to_ndjson(self) -> str:
        return "".join(
            json.dumps({"raw": r.raw, "reason": r.reason}, sort_keys=True, ensure_ascii=False) + "\n"
            for r in self.rejects
        )


class _LineTap:
    """Line iterator that remembers the physical lines of the current CSV row."""

    def __init__(self, stream):
        self._it = iter(stream)
        self._buf: list[str] = []

    def __iter__(self):
        return self

    def __next__(self) -> str:
        line = next(self._it)
        self._buf.append(line)
        return line

    def take(self) -> str:
        raw = "".join(self._buf).rstrip("\r\n")
        self._buf.clear()
        return raw


def _open_text(source):
    """Accept a path, a text stream, or a byte stream; yield a text stream."""
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8-sig", newline="")
    if hasattr(source, "read"):
        probe = source.read(0)
        if isinstance(probe, bytes):
            return io.TextIOWrapper(source, encoding="utf-8-sig", newline="")
        return source
    raise DataError(f"unreadable source: {source!r}")


def _csv_rows(stream, expected_header: tuple[str, ...], what: str):
    tap = _LineTap(stream)
    reader = csv.reader(tap)
    header = next(reader, None)
    tap.take()
    if header is None or [h.strip() for h in header] != list(expected_header):
        raise DataError(
            f"{what}: expected header {','.join(expected_header)!r}, "
            f"got {header if header is None else ','.join(header)!r}"
        )
    for row in reader:
        yield row, tap.take()


def _parse_date(value: str) -> dt.date | None:
    value = value.strip()
    if not value:
        return None
    return dt.date.fromisoformat(value)


def read_sygma_links(source, mode: NormalizationMode, log: IngestLog, *, allow_dotless: bool = False):
    """Yield funding links from a SyGMA reported-publications CSV.

    Expected header: ``project_id,doi,title,publication_date,report_date,record_id``
    (RFC 4180 quoting, UTF-8). Bad rows are rejected, never fatal.
    """
    stream = _open_text(source)
    for row, raw in _csv_rows(stream, SYGMA_HEADER, "sygma links"):
        log.rows_in += 1
        if len(row) != len(SYGMA_HEADER):
            log.reject(BAD_ROW, raw)
            continue
        project_id, doi_raw, _title, pub_raw, rep_raw, record_id = (v.strip() for v in row)
        if not is_project_id(project_id):
            log.reject(BAD_PROJECT_ID, raw)
            continue
        try:
            doi = normalize(doi_raw, mode, allow_dotless)
        except MalformedDoiError:
            log.reject(MALFORMED_DOI, raw)
            continue
        try:
            publication_date = _parse_date(pub_raw)
            report_date = _parse_date(rep_raw)
        except ValueError:
            log.reject(BAD_DATE, raw)
            continue
        log.emitted += 1
        yield FundingLink(
            project_id,
            doi,
            Source.SYGMA,
            provenance=f"sygma:{record_id}" if record_id else "sygma",
            publication_date=publication_date,
            report_date=report_date,
        )


def read_openaire_links(source, mode: NormalizationMode, log: IngestLog, *, allow_dotless: bool = False):
    """Yield funding links from OpenAIRE project-publication relations.

    Line-delimited records with fields ``project_code``, ``doi``,
    ``provenance``, ``deduplicated`` (plus optional ``publication_date``).
    """
    stream = _open_text(source)
    for line in stream:
        if not line.strip():
            continue
        log.rows_in += 1
        raw = line.rstrip("\r\n")
        try:
            record = json.loads(line)
        except ValueError:
            log.reject(PARSE_ERROR, raw)
            continue
        if not isinstance(record, dict):
            log.reject(PARSE_ERROR, raw)
            continue
        project_code = record.get("project_code")
        doi_raw = record.get("doi")
        if not isinstance(project_code, str) or not isinstance(doi_raw, str):
            log.reject(MISSING_FIELD, raw)
            continue
        project_code = project_code.strip()
        if not is_project_id(project_code):
            log.reject(BAD_PROJECT_ID, raw)
            continue
        try:
            doi = normalize(doi_raw, mode, allow_dotless)
        except MalformedDoiError:
            log.reject(MALFORMED_DOI, raw)
            continue
        try:
            publication_date = _parse_date(str(record.get("publication_date") or ""))
        except ValueError:
            log.reject(BAD_DATE, raw)
            continue
        log.emitted += 1
        yield FundingLink(
            project_code,
            doi,
            Source.OPENAIRE,
            provenance=str(record.get("provenance") or "openaire"),
            deduplicated=bool(record.get("deduplicated", False)),
            publication_date=publication_date,
        )


def _issued_year(obj: dict) -> int | None:
    # First available of issued / print / online year; year granularity only.
    for key in ("issued", "published-print", "published-online"):
        value = obj.get(key)
        if not isinstance(value, dict):
            continue
        parts = value.get("date-parts")
        if isinstance(parts, list) and parts and isinstance(parts[0], list) and parts[0]:
            year = parts[0][0]
            if isinstance(year, int):
                return year
    return None


def _parse_assertions(obj: dict) -> tuple[FunderAssertion, ...]:
    out = []
    for entry in obj.get("funder") or []:
        if not isinstance(entry, dict):
            continue
        funder_doi = entry.get("DOI")
        if isinstance(funder_doi, str) and funder_doi.strip():
            try:
                funder_doi = normalize(funder_doi, NormalizationMode.AGGRESSIVE)
            except MalformedDoiError:
                funder_doi = funder_doi.strip().lower()
        else:
            funder_doi = None
        name = entry.get("name")
        name = name if isinstance(name, str) and name.strip() else None
        awards = tuple(str(a) for a in entry.get("award") or [] if isinstance(a, (str, int)))
        if funder_doi is None and name is None:
            continue
        out.append(FunderAssertion(funder_doi, name, awards))
    return tuple(out)


def work_from_json(
    obj: dict,
    mode: NormalizationMode = NormalizationMode.AGGRESSIVE,
    *,
    allow_dotless: bool = False,
    log: IngestLog | None = None,
) -> CrossrefWork | None:
    """Build a :class:`CrossrefWork` from one work record.

    Without a log, problems raise; with one, no-DOI records are counted and
    skipped and malformed DOIs are rejected, both returning None.
    """
    doi_raw = obj.get("DOI")
    if not isinstance(doi_raw, str) or not doi_raw.strip():
        if log is None:
            raise DataError("work record without DOI")
        log.skipped_no_doi += 1
        return None
    try:
        doi = normalize(doi_raw, mode, allow_dotless)
    except MalformedDoiError:
        if log is None:
            raise
        log.reject(MALFORMED_DOI, doi_raw)
        return None
    return CrossrefWork(
        doi=doi,
        work_type=str(obj.get("type") or ""),
        issued_year=_issued_year(obj),
        funders=_parse_assertions(obj),
    )


def _iter_ndjson(head: str, stream, log: IngestLog):
    buf = head
    while True:
        *complete, buf = buf.split("\n")
        for line in complete:
            if not line.strip():
                continue
            log.rows_in += 1
            try:
                obj = json.loads(line)
            except ValueError:
                log.reject(PARSE_ERROR, line.rstrip("\r"))
                continue
            if not isinstance(obj, dict):
                log.reject(PARSE_ERROR, line.rstrip("\r"))
                continue
            yield obj
        chunk = stream.read(_CHUNK)
        if not chunk:
            tail = buf.strip()
            if tail:
                log.rows_in += 1
                try:
                    obj = json.loads(tail)
                except ValueError:
                    log.reject(PARSE_ERROR, tail)
                    return
                if isinstance(obj, dict):
                    yield obj
                else:
                    log.reject(PARSE_ERROR, tail)
            return
        buf += chunk


def _iter_items_array(buf: str, pos: int, stream, log: IngestLog):
    """Incrementally decode the elements of an ``items`` array.

    Keeps at most one record plus one read chunk in memory, so dump chunks
    of any size stream within a fixed budget.
    """
    decoder = json.JSONDecoder()
    while True:
        while True:
            while pos < len(buf) and buf[pos] in " \t\r\n,":
                pos += 1
            if pos < len(buf):
                break
            chunk = stream.read(_CHUNK)
            if not chunk:
                raise DataError("unterminated items array")
            buf, pos = chunk, 0
        if buf[pos] == "]":
            return
        try:
            element, end = decoder.raw_decode(buf, pos)
        except ValueError:
            chunk = stream.read(_CHUNK)
            if not chunk:
                raise DataError("truncated record in items array")
            buf = buf[pos:] + chunk
            pos = 0
            continue
        log.rows_in += 1
        if isinstance(element, dict):
            yield element
        else:
            log.reject(PARSE_ERROR, json.dumps(element, ensure_ascii=False))
        pos = end
        if pos > _CHUNK:
            buf = buf[pos:]
            pos = 0


def _iter_file_records(path: Path, log: IngestLog):
    with open(path, "rb") as raw:
        magic = raw.read(2)
        raw.seek(0)
        if magic == b"\x1f\x8b":
            binary = gzip.open(raw, "rb")
        else:
            binary = raw
        stream = io.TextIOWrapper(binary, encoding="utf-8")
        head = stream.read(_CHUNK)
        match = _ITEMS_PREFIX_RE.match(head)
        if match:
            yield from _iter_items_array(head, match.end(), stream, log)
        else:
            yield from _iter_ndjson(head, stream, log)


def read_crossref_works(source, mode: NormalizationMode, log: IngestLog, *, allow_dotless: bool = False):
    """Stream works from a metadata dump: one file or a directory of files.

    Each file is either a (possibly gzipped) document whose top-level object
    opens with an ``items`` array, or line-delimited work records; the format
    is detected per file. Records lacking a DOI are counted and skipped.
    A corrupt file in a directory is logged and the remaining files continue;
    a corrupt file named directly is fatal.
    """
    root = Path(source)
    if root.is_dir():
        paths = sorted(p for p in root.iterdir() if p.is_file())
        single = False
    else:
        paths = [root]
        single = True
    for path in paths:
        try:
            for obj in _iter_file_records(path, log):
                work = work_from_json(obj, mode, allow_dotless=allow_dotless, log=log)
                if work is not None:
                    log.emitted += 1
                    yield work
        except (DataError, OSError, EOFError, UnicodeDecodeError, zlib.error) as exc:
            if single:
                if isinstance(exc, DataError):
                    raise
                raise DataError(f"{path}: {exc}") from exc
            log.reject(CORRUPT_FILE, f"{path}: {exc}")


def read_project_registry(source, log: IngestLog) -> dict[str, ProjectRef]:
    """Load the project registry CSV, keyed by grant number.

    Duplicate grant numbers and unparseable dates are fatal (the registry is
    reference data); an end date before the start date rejects that row only.
    """
    stream = _open_text(source)
    table: dict[str, ProjectRef] = {}
    for row, raw in _csv_rows(stream, PROJECT_HEADER, "project registry"):
        log.rows_in += 1
        if len(row) != len(PROJECT_HEADER):
            log.reject(BAD_ROW, raw)
            continue
        grant, acronym, start_raw, end_raw = (v.strip() for v in row)
        if not is_project_id(grant):
            log.reject(BAD_PROJECT_ID, raw)
            continue
        try:
            start = _parse_date(start_raw)
            end = _parse_date(end_raw)
        except ValueError as exc:
            raise DataError(f"project registry: unparseable date in row {raw!r}") from exc
        if start is None:
            raise DataError(f"project registry: missing start date in row {raw!r}")
        if grant in table:
            raise DataError(f"project registry: duplicate grant number {grant}")
        try:
            project = ProjectRef(grant, start, end, acronym or None)
        except ValidationError:
            log.reject(BAD_DATE_RANGE, raw)
            continue
        table[grant] = project
        log.emitted += 1
    return table


def read_annotations(source, log: IngestLog) -> dict[str, Annotation]:
    """Load an annotation sheet, keyed by pair key.

    Re-stating the same label for a key is deduplicated silently; two
    different labels for one key are fatal, the annotator has to resolve.
    """
    stream = _open_text(source)
    table: dict[str, Annotation] = {}
    for row, raw in _csv_rows(stream, ANNOTATION_HEADER, "annotations"):
        log.rows_in += 1
        if len(row) != len(ANNOTATION_HEADER):
            log.reject(BAD_ROW, raw)
            continue
        key, label_raw, evidence_source, note = (v.strip() for v in row)
        try:
            project_id, doi_part = split_pair_key(key)
        except ValidationError:
            log.reject(BAD_PAIR_KEY, raw)
            continue
        if not is_project_id(project_id) or not doi_part:
            log.reject(BAD_PAIR_KEY, raw)
            continue
        try:
            label = AnnotationLabel(label_raw)
        except ValueError:
            log.reject(UNKNOWN_LABEL, raw)
            continue
        existing = table.get(key)
        if existing is not None and existing.label is not label:
            raise DataError(
                f"annotations: conflicting labels for {key}: "
                f"{existing.label.value} vs {label.value}"
            )
        table[key] = Annotation(key, label, evidence_source, note)
        log.emitted += 1
    return table


def build_snapshot(
    links,
    label: str,
    snapshot_date: dt.date,
    mode: str,
    log: IngestLog | None = None,
) -> DatasetSnapshot:
    """Accumulate links into a keyed snapshot, merging re-assertions of a pair.

    The merge rule is commutative (earliest dates, union of provenance), so
    the result is independent of input order. ``mode`` is the normalization
    tag the links were cleaned under.
    """
    merged: dict[str, FundingLink] = {}
    for link in links:
        key = link.pair_key
        merged[key] = merge_links(merged[key], link) if key in merged else link
    rejects = list(log.rejects) if log is not None else []
    return DatasetSnapshot(label, snapshot_date, mode, merged, rejects)


SNAPSHOT_FORMAT = "fundlink-snapshot/1"


def snapshot_to_json(snapshot: DatasetSnapshot) -> str:
    """Serialize a snapshot deterministically (sorted keys, compact)."""
    links = []
    for key in sorted(snapshot.links):
        link = snapshot.links[key]
        links.append(
            {
                "pair_key": key,
                "project_id": link.project_id,
                "doi": link.doi,
                "source": link.source.value,
                "provenance": link.provenance,
                "deduplicated": link.deduplicated,
                "publication_date": link.publication_date.isoformat() if link.publication_date else None,
                "report_date": link.report_date.isoformat() if link.report_date else None,
            }
        )
    doc = {
        "format": SNAPSHOT_FORMAT,
        "label": snapshot.label,
        "snapshot_date": snapshot.snapshot_date.isoformat(),
        "mode": snapshot.mode,
        "count": len(links),
        "links": links,
    }
    return json.dumps(doc, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"


def snapshot_from_json(text: str) -> DatasetSnapshot:
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise DataError(f"unreadable snapshot: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != SNAPSHOT_FORMAT:
        raise DataError("not a snapshot file (missing format marker)")
    links: dict[str, FundingLink] = {}
    for entry in doc.get("links", []):
        link = FundingLink(
            entry["project_id"],
            entry["doi"],
            Source(entry["source"]),
            provenance=entry.get("provenance", ""),
            deduplicated=bool(entry.get("deduplicated", False)),
            publication_date=_parse_date(entry.get("publication_date") or ""),
            report_date=_parse_date(entry.get("report_date") or ""),
        )
        links[entry["pair_key"]] = link
    return DatasetSnapshot(
        doc["label"],
        dt.date.fromisoformat(doc["snapshot_date"]),
        doc["mode"],
        links,
        [],
    )
