"""Command-line surface: composable pipeline stages over files.

Each subcommand reads and writes plain files so any stage can be re-run
against newer inputs without redoing the rest. Exit codes: 0 success,
1 usage error, 2 data error (fatal parse or conservation failure),
3 network failure after retries. All file writes are atomic.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import datetime as dt
import io
import json
import sys
from pathlib import Path

from . import __version__
from .client import CrossrefClient
from .config import AuditConfig, load_config
from .doi import DOI_PATTERN, DOI_PATTERN_DOTLESS, NormalizationMode, mode_tag
from .errors import DataError, FetchFailedError, ValidationError
from .files import atomic_write_text, atomic_writer, read_key_file, write_key_file
from .funder import extract_links
from .ingest import (
    IngestLog,
    build_snapshot,
    read_annotations,
    read_crossref_works,
    read_openaire_links,
    read_project_registry,
    read_sygma_links,
    snapshot_from_json,
    snapshot_to_json,
)
from .reconcile import (
    Partition,
    RightStatusCode,
    classify_left_only,
    diff,
    funnel_counts,
    funnel_stats,
    sample_unmatched,
    verify_right_only,
)
from .report import (
    ReportFormat,
    load_left_classification,
    load_right_classification,
    render_report,
    rule_constants,
    write_left_classification,
    write_right_classification,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NETWORK = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _date_arg(value: str) -> dt.date:
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a YYYY-MM-DD date: {value!r}")


def _print_json(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True, ensure_ascii=False))


# ---------------------------------------------------------------------------
# config plumbing

_MODE_ALIASES = {
    "strict": NormalizationMode.OPENAIRE_STRICT,
    "openaire-strict": NormalizationMode.OPENAIRE_STRICT,
    "aggressive": NormalizationMode.AGGRESSIVE,
}

# CLI flag attribute -> config field it overrides when present.
_FLAG_OVERRIDES = {
    "grace_years": "grace_years",
    "n": "sample_n",
    "seed": "sample_seed",
    "max_reject_rate": "max_reject_rate",
    "max_in_flight": "max_in_flight",
    "out_dir": "out_dir",
    "contact": "contact",
    "award_mode": "award_mode",
}


def _load_cfg(args) -> AuditConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else AuditConfig()
    for attr, field_name in _FLAG_OVERRIDES.items():
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, field_name, value)
    if getattr(args, "mode", None):
        cfg.normalization_mode = _MODE_ALIASES[args.mode].value
    if getattr(args, "dotless", None) is not None:
        cfg.allow_dotless = args.dotless
    if getattr(args, "rules", None):
        cfg.rule_level = args.rules
    if getattr(args, "keyword_case_insensitive", None):
        cfg.keyword_case_sensitive = False
    return cfg


def _out_path(args, cfg: AuditConfig, category: str, default_name: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(cfg.out_dir) / category / default_name


def _rejects_path(args, cfg: AuditConfig, default_name: str) -> Path:
    if getattr(args, "rejects", None):
        return Path(args.rejects)
    return Path(cfg.out_dir) / "rejects" / default_name


def _finish_ingest(log: IngestLog, cfg: AuditConfig, rejects_path: Path) -> None:
    atomic_write_text(rejects_path, log.to_ndjson())
    log.assert_conserved()
    if cfg.max_reject_rate is not None and log.reject_rate() > cfg.max_reject_rate:
        raise DataError(
            f"reject rate {log.reject_rate():.4f} exceeds --max-reject-rate "
            f"{cfg.max_reject_rate} ({log.rejected}/{log.rows_in} rows); "
            f"reject trail written to {rejects_path}"
        )


# ---------------------------------------------------------------------------
# ingest

def cmd_ingest_snapshot(args) -> int:
    cfg = _load_cfg(args)
    mode = cfg.normalization()
    log = IngestLog()
    reader = read_sygma_links if args.family == "sygma" else read_openaire_links
    links = reader(args.infile, mode, log, allow_dotless=cfg.allow_dotless)
    snapshot = build_snapshot(links, args.label, args.date, mode_tag(mode, cfg.allow_dotless), log)
    rejects_path = _rejects_path(args, cfg, f"{args.label}.rejects.ndjson")
    _finish_ingest(log, cfg, rejects_path)
    out = _out_path(args, cfg, "snapshots", f"{args.label}.snap")
    atomic_write_text(out, snapshot_to_json(snapshot))
    _print_json(
        {
            "label": args.label,
            "pairs": len(snapshot),
            "rejected": log.rejected,
            "rows_in": log.rows_in,
            "snapshot": str(out),
        }
    )
    return EXIT_OK


def _work_to_record(work) -> dict:
    record: dict = {"DOI": work.doi, "type": work.work_type}
    if work.issued_year is not None:
        record["issued"] = {"date-parts": [[work.issued_year]]}
    if work.funders:
        record["funder"] = [
            {
                **({"DOI": f.funder_doi} if f.funder_doi else {}),
                **({"name": f.name} if f.name else {}),
                "award": list(f.awards),
            }
            for f in work.funders
        ]
    return record


def cmd_ingest_crossref_dump(args) -> int:
    cfg = _load_cfg(args)
    mode = cfg.normalization()
    rules = cfg.rules()
    award_mode = cfg.award()
    log = IngestLog()
    links_path = _out_path(args, cfg, "snapshots", "crossref_links.ndjson")
    dois_path = Path(args.dois) if args.dois else None
    works_seen = links_out = 0

    with contextlib.ExitStack() as stack:
        links_file = stack.enter_context(atomic_writer(links_path))
        dois_file = stack.enter_context(atomic_writer(dois_path)) if dois_path else None
        for work in read_crossref_works(args.infile, mode, log, allow_dotless=cfg.allow_dotless):
            works_seen += 1
            if dois_file is not None:
                dois_file.write(work.doi + "\n")
            for link in extract_links(work, rules, award_mode):
                links_out += 1
                links_file.write(
                    json.dumps(
                        {
                            "doi": link.doi,
                            "pair_key": link.pair_key,
                            "project_id": link.project_id,
                            "provenance": link.provenance,
                        },
                        sort_keys=True,
                        ensure_ascii=False,
                    )
                    + "\n"
                )
    rejects_path = _rejects_path(args, cfg, "crossref_dump.rejects.ndjson")
    _finish_ingest(log, cfg, rejects_path)
    _print_json(
        {
            "links": links_out,
            "rejected": log.rejected,
            "rows_in": log.rows_in,
            "rule_level": rules.level.value,
            "skipped_no_doi": log.skipped_no_doi,
            "works": works_seen,
        }
    )
    return EXIT_OK


def cmd_ingest_projects(args) -> int:
    cfg = _load_cfg(args)
    log = IngestLog()
    table = read_project_registry(args.infile, log)
    atomic_write_text(_rejects_path(args, cfg, "projects.rejects.ndjson"), log.to_ndjson())
    log.assert_conserved()
    doc = {
        grant: {
            "acronym": ref.acronym,
            "start_date": ref.start_date.isoformat(),
            "end_date": ref.end_date.isoformat() if ref.end_date else None,
        }
        for grant, ref in sorted(table.items())
    }
    out = _out_path(args, cfg, "snapshots", "projects.json")
    atomic_write_text(out, json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    _print_json({"projects": len(table), "rejected": log.rejected})
    return EXIT_OK


def cmd_ingest_annotations(args) -> int:
    cfg = _load_cfg(args)
    log = IngestLog()
    table = read_annotations(args.infile, log)
    atomic_write_text(_rejects_path(args, cfg, "annotations.rejects.ndjson"), log.to_ndjson())
    log.assert_conserved()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["pair_key", "label", "evidence_source", "note"])
    for key in sorted(table):
        ann = table[key]
        writer.writerow([key, ann.label.value, ann.evidence_source, ann.note])
    out = _out_path(args, cfg, "snapshots", "annotations.csv")
    atomic_write_text(out, buf.getvalue())
    _print_json({"annotations": len(table), "rejected": log.rejected})
    return EXIT_OK


# ---------------------------------------------------------------------------
# reconciliation stages

def _load_snapshot(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read snapshot {path}: {exc}") from exc
    return snapshot_from_json(text)


def cmd_diff(args) -> int:
    cfg = _load_cfg(args)
    left = _load_snapshot(args.left)
    right = _load_snapshot(args.right)
    partition = diff(left, right)
    out_dir = Path(args.out) if args.out else Path(cfg.out_dir) / "partition"
    write_key_file(out_dir / "matched.keys", partition.matched)
    write_key_file(out_dir / "left_only.keys", partition.left_only)
    write_key_file(out_dir / "right_only.keys", partition.right_only)
    meta = {
        "left_label": partition.left_label,
        "left_only": len(partition.left_only),
        "matched": len(partition.matched),
        "mode": left.mode,
        "right_label": partition.right_label,
        "right_only": len(partition.right_only),
    }
    atomic_write_text(out_dir / "partition.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    _print_json(meta)
    return EXIT_OK


def _load_partition(dirpath) -> Partition:
    d = Path(dirpath)
    try:
        meta = json.loads((d / "partition.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"not a partition directory (no partition.json): {d}") from exc
    return Partition(
        matched=tuple(read_key_file(d / "matched.keys")),
        left_only=tuple(read_key_file(d / "left_only.keys")),
        right_only=tuple(read_key_file(d / "right_only.keys")),
        left_label=meta.get("left_label", "left"),
        right_label=meta.get("right_label", "right"),
    )


def _read_pair_keys(path) -> set[str]:
    """Key set from a plain key file or an NDJSON links file (pair_key field)."""
    keys = set()
    for line in read_key_file(path):
        if line.startswith("{"):
            try:
                record = json.loads(line)
            except ValueError as exc:
                raise DataError(f"{path}: unreadable links line {line!r}") from exc
            key = record.get("pair_key")
            if not isinstance(key, str):
                raise DataError(f"{path}: links line without pair_key")
            keys.add(key)
        else:
            keys.add(line)
    return keys


def cmd_classify_left(args) -> int:
    cfg = _load_cfg(args)
    partition = _load_partition(args.partition)
    left = _load_snapshot(args.left) if args.left else None
    newer = _load_snapshot(args.newer_right) if args.newer_right else None
    projects = None
    if args.projects:
        registry_log = IngestLog()
        projects = read_project_registry(args.projects, registry_log)
        if registry_log.rejected:
            print(f"warning: {registry_log.rejected} project rows rejected", file=sys.stderr)
    publications = frozenset(read_key_file(args.publications)) if args.publications else None
    strict = _read_pair_keys(args.crossref_strict) if args.crossref_strict else None
    relaxed = _read_pair_keys(args.crossref_relaxed) if args.crossref_relaxed else None
    causes, skips = classify_left_only(
        partition,
        newer_right=newer,
        projects=projects,
        publication_index=publications,
        crossref_links_strict=strict,
        crossref_links_relaxed=relaxed,
        grace_years=cfg.grace_years,
        left_links=left.links if left else None,
    )
    out = _out_path(args, cfg, "classifications", "left_only.csv")
    write_left_classification(out, causes)
    for rule, count in sorted(skips.items()):
        print(f"warning: rule {rule} skipped for {count} keys (missing input)", file=sys.stderr)
    _print_json({"classified": len(causes), "out": str(out), "skipped_rules": skips})
    return EXIT_OK


def cmd_verify_right(args) -> int:
    cfg = _load_cfg(args)
    partition = _load_partition(args.partition)
    right = _load_snapshot(args.right) if args.right else None
    crossref = _read_pair_keys(args.crossref) if args.crossref else None
    annotations = None
    if args.annotations:
        ann_log = IngestLog()
        annotations = read_annotations(args.annotations, ann_log)
        if ann_log.rejected:
            print(f"warning: {ann_log.rejected} annotation rows rejected", file=sys.stderr)
    statuses, warnings = verify_right_only(
        partition, crossref, annotations, right.links if right else None
    )
    out = _out_path(args, cfg, "classifications", "right_only.csv")
    write_right_classification(out, statuses)
    if args.unmatched_out:
        # Keys lacking structured Crossref evidence: the pool manual
        # verification samples from.
        unmatched = [
            key
            for key in partition.right_only
            if statuses[key].status is not RightStatusCode.CROSSREF_FUNDING_MATCH
        ]
        write_key_file(args.unmatched_out, unmatched)
    for name, count in sorted(warnings.items()):
        print(f"warning: {name}: {count}", file=sys.stderr)
    _print_json({"out": str(out), "verified": len(statuses), "warnings": warnings})
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = _load_cfg(args)
    keys = read_key_file(args.infile)
    sample = sample_unmatched(keys, cfg.sample_n, cfg.sample_seed)
    out = _out_path(args, cfg, "classifications", "sample.keys")
    write_key_file(out, sample)
    _print_json({"out": str(out), "sampled": len(sample), "seed": cfg.sample_seed})
    return EXIT_OK


def _build_counts(args) -> dict[str, int]:
    if args.counts:
        try:
            injected = json.loads(Path(args.counts).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read counts file: {exc}") from exc
        except ValueError as exc:
            raise DataError(f"counts file is not valid JSON: {exc}") from exc
        if not isinstance(injected, dict):
            raise DataError("counts file must hold a JSON object of stage -> integer")
        return injected
    partition = _load_partition(args.partition) if args.partition else None
    left = load_left_classification(args.left_classification) if args.left_classification else None
    right = (
        load_right_classification(args.right_classification) if args.right_classification else None
    )
    sample = read_key_file(args.sample) if args.sample else None
    if partition is None and left is None and right is None:
        raise UsageError("nothing to count: give --counts or classification inputs")
    return funnel_counts(partition, left, right, sample)


def cmd_stats(args) -> int:
    cfg = _load_cfg(args)
    stats = funnel_stats(_build_counts(args))
    shares = {
        name: (
            None
            if share is None
            else {
                "numerator": share.numerator,
                "denominator": share.denominator,
                "percent": stats.percent(name),
            }
        )
        for name, share in stats.shares.items()
    }
    doc = {"counts": dict(sorted(stats.counts.items())), "shares": shares}
    text = json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
        _print_json({"out": str(args.out), "stages": len(stats.counts)})
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _load_cfg(args)
    if args.stats:
        try:
            doc = json.loads(Path(args.stats).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read stats file: {exc}") from exc
        counts = doc.get("counts") if isinstance(doc, dict) else None
        if not isinstance(counts, dict):
            raise DataError("stats file lacks a counts object")
    else:
        counts = _build_counts(args)
    stats = funnel_stats(counts)
    partition = _load_partition(args.partition) if args.partition else None
    fmt = ReportFormat(args.format)
    text = render_report(stats, partition, cfg, fmt)
    if args.out:
        atomic_write_text(args.out, text)
        _print_json({"format": fmt.value, "out": str(args.out)})
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# crossref client commands

def _client(cfg: AuditConfig) -> CrossrefClient:
    return CrossrefClient(cfg.retry_policy(), contact=cfg.contact)


def cmd_crossref_get(args) -> int:
    cfg = _load_cfg(args)
    with _client(cfg) as client:
        outcome = client.get_work(args.doi)
    if outcome.ok:
        _print_json(_work_to_record(outcome.work))
        return EXIT_OK
    if outcome.kind.value == "not-found":
        _print_json({"doi": args.doi, "not_found": True})
        return EXIT_OK
    raise FetchFailedError(
        f"fetch failed after {outcome.attempts} attempts: {outcome.last_error}",
        attempts=outcome.attempts,
        last_error=outcome.last_error,
    )


def cmd_crossref_count(args) -> int:
    cfg = _load_cfg(args)
    has_funder = None if args.has_funder is None else args.has_funder == "true"
    with _client(cfg) as client:
        total = client.count_works(args.type, args.from_date, args.until_date, has_funder)
    print(total)
    return EXIT_OK


def cmd_crossref_enrich(args) -> int:
    cfg = _load_cfg(args)
    keys = read_key_file(args.keys)
    local = set(read_key_file(args.local_dois)) if args.local_dois else set()
    queue = Path(args.queue) if args.queue else Path(cfg.out_dir) / "queue" / "enrich.queue.ndjson"
    out = _out_path(args, cfg, "snapshots", "enriched_works.ndjson")
    with _client(cfg) as client:
        works, failures = client.enrich_missing(
            keys, local, max_in_flight=cfg.max_in_flight, queue_path=queue
        )
    with atomic_writer(out) as handle:
        for work in sorted(works, key=lambda w: w.doi):
            handle.write(json.dumps(_work_to_record(work), sort_keys=True, ensure_ascii=False) + "\n")
    _print_json(
        {"failed": len(failures), "fetched": len(works), "out": str(out), "queue": str(queue)}
    )
    return EXIT_OK


def cmd_rules_show(args) -> int:
    cfg = _load_cfg(args)
    rules = cfg.rules()
    constants = rule_constants()
    print(f"rule level: {rules.level.value}")
    print(f"keyword matching: {'case-sensitive' if rules.keyword_case_sensitive else 'case-insensitive'}")
    print(f"award mode: {cfg.award_mode}")
    print(f"normalization mode: {cfg.normalization_mode}"
          + (" (dotless pattern variant enabled)" if cfg.allow_dotless else ""))
    print("strict funder dois:")
    for funder_doi in constants["strict_funder_dois"]:
        print(f"  {funder_doi}")
    print("strict funder names:")
    for name in constants["strict_funder_names"]:
        print(f"  {name}")
    print("relaxed keywords:")
    for keyword in constants["relaxed_keywords"]:
        print(f"  {keyword}")
    print(f"doi validation pattern: {constants['doi_pattern']}")
    print(f"doi validation pattern (dotless variant): {constants['doi_pattern_dotless']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> _Parser:
    parser = _Parser(
        prog="fundlink-audit",
        description="Diff, classify, and verify <project, publication> funding-link datasets.",
        epilog=f"DOI validation pattern: {DOI_PATTERN}  (dotless variant: {DOI_PATTERN_DOTLESS})",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file with defaults for all flags")
    common.add_argument("--out-dir", dest="out_dir", help="base output directory")

    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="parse an input family into audit files")
    ingest_sub = p_ingest.add_subparsers(dest="family", required=True)

    def snapshot_ingest(name: str, help_text: str):
        p = ingest_sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--in", dest="infile", required=True)
        p.add_argument("--label", required=True)
        p.add_argument("--date", type=_date_arg, required=True, help="snapshot date (YYYY-MM-DD)")
        p.add_argument("--mode", choices=["strict", "aggressive"])
        p.add_argument("--dotless", action=argparse.BooleanOptionalAction, default=None,
                       help="accept the dotless DOI pattern variant")
        p.add_argument("--max-reject-rate", dest="max_reject_rate", type=float)
        p.add_argument("--out", help="snapshot file")
        p.add_argument("--rejects", help="reject trail file")
        p.set_defaults(func=cmd_ingest_snapshot)
        return p

    snapshot_ingest("sygma", "reported-publications CSV")
    snapshot_ingest("openaire", "graph relations NDJSON")

    p_dump = ingest_sub.add_parser("crossref-dump", parents=[common], help="metadata dump (file or dir)")
    p_dump.add_argument("--in", dest="infile", required=True)
    p_dump.add_argument("--rules", choices=["strict", "relaxed"])
    p_dump.add_argument("--keyword-case-insensitive", action="store_true", default=None)
    p_dump.add_argument("--award-mode", dest="award_mode", choices=["exact", "numeric-token"])
    p_dump.add_argument("--mode", choices=["strict", "aggressive"])
    p_dump.add_argument("--dotless", action=argparse.BooleanOptionalAction, default=None)
    p_dump.add_argument("--max-reject-rate", dest="max_reject_rate", type=float)
    p_dump.add_argument("--out", help="extracted links NDJSON")
    p_dump.add_argument("--dois", help="optional one-DOI-per-work index file")
    p_dump.add_argument("--rejects")
    p_dump.set_defaults(func=cmd_ingest_crossref_dump)

    p_projects = ingest_sub.add_parser("projects", parents=[common], help="project registry CSV")
    p_projects.add_argument("--in", dest="infile", required=True)
    p_projects.add_argument("--out")
    p_projects.add_argument("--rejects")
    p_projects.set_defaults(func=cmd_ingest_projects)

    p_ann = ingest_sub.add_parser("annotations", parents=[common], help="annotation sheet CSV")
    p_ann.add_argument("--in", dest="infile", required=True)
    p_ann.add_argument("--out")
    p_ann.add_argument("--rejects")
    p_ann.set_defaults(func=cmd_ingest_annotations)

    p_diff = sub.add_parser("diff", parents=[common], help="partition two snapshots by pair key")
    p_diff.add_argument("--left", required=True)
    p_diff.add_argument("--right", required=True)
    p_diff.add_argument("--out", help="partition directory")
    p_diff.set_defaults(func=cmd_diff)

    p_cl = sub.add_parser("classify-left", parents=[common],
                          help="attribute left-only links to causes")
    p_cl.add_argument("--partition", required=True)
    p_cl.add_argument("--left", help="left snapshot (for dates and links)")
    p_cl.add_argument("--newer-right", dest="newer_right", help="newer right-side snapshot")
    p_cl.add_argument("--projects", help="project registry CSV")
    p_cl.add_argument("--publications", help="publication DOI index, one per line")
    p_cl.add_argument("--crossref-strict", dest="crossref_strict", help="strict-rule links file")
    p_cl.add_argument("--crossref-relaxed", dest="crossref_relaxed", help="relaxed-rule links file")
    p_cl.add_argument("--grace-years", dest="grace_years", type=int)
    p_cl.add_argument("--out")
    p_cl.set_defaults(func=cmd_classify_left)

    p_vr = sub.add_parser("verify-right", parents=[common],
                          help="verify right-only links against evidence")
    p_vr.add_argument("--partition", required=True)
    p_vr.add_argument("--right", help="right snapshot (for the dedup flag)")
    p_vr.add_argument("--crossref", help="crossref funding links file")
    p_vr.add_argument("--annotations", help="annotation sheet CSV")
    p_vr.add_argument("--out")
    p_vr.add_argument("--unmatched-out", dest="unmatched_out",
                      help="also write the keys without crossref evidence (sampling pool)")
    p_vr.set_defaults(func=cmd_verify_right)

    p_sample = sub.add_parser("sample", parents=[common], help="draw a reproducible key sample")
    p_sample.add_argument("--in", dest="infile", required=True, help="key file to sample from")
    p_sample.add_argument("--n", type=int)
    p_sample.add_argument("--seed", type=int)
    p_sample.add_argument("--out")
    p_sample.set_defaults(func=cmd_sample)

    p_stats = sub.add_parser("stats", parents=[common], help="compute the statistics funnel")
    p_stats.add_argument("--partition")
    p_stats.add_argument("--left-classification", dest="left_classification")
    p_stats.add_argument("--right-classification", dest="right_classification")
    p_stats.add_argument("--sample")
    p_stats.add_argument("--counts", help="JSON count map to inject instead of computing")
    p_stats.add_argument("--out")
    p_stats.set_defaults(func=cmd_stats)

    p_report = sub.add_parser("report", parents=[common], help="render the audit report")
    p_report.add_argument("--stats", help="stats JSON produced by the stats command")
    p_report.add_argument("--partition")
    p_report.add_argument("--left-classification", dest="left_classification")
    p_report.add_argument("--right-classification", dest="right_classification")
    p_report.add_argument("--sample")
    p_report.add_argument("--counts")
    p_report.add_argument("--format", choices=["machine", "human"], default="machine")
    p_report.add_argument("--out")
    p_report.set_defaults(func=cmd_report)

    p_cr = sub.add_parser("crossref", help="works API client")
    cr_sub = p_cr.add_subparsers(dest="action", required=True)

    p_get = cr_sub.add_parser("get", parents=[common], help="fetch one work by DOI")
    p_get.add_argument("--doi", required=True)
    p_get.add_argument("--contact")
    p_get.set_defaults(func=cmd_crossref_get)

    p_count = cr_sub.add_parser("count", parents=[common], help="zero-row filtered count query")
    p_count.add_argument("--type", required=True)
    p_count.add_argument("--from", dest="from_date", required=True, help="YYYY-MM")
    p_count.add_argument("--until", dest="until_date", required=True, help="YYYY-MM")
    p_count.add_argument("--has-funder", dest="has_funder", choices=["true", "false"])
    p_count.add_argument("--contact")
    p_count.set_defaults(func=cmd_crossref_count)

    p_enrich = cr_sub.add_parser("enrich", parents=[common],
                                 help="fetch works missing from the local dump")
    p_enrich.add_argument("--keys", required=True, help="pair-key file")
    p_enrich.add_argument("--local-dois", dest="local_dois", help="DOIs already held locally")
    p_enrich.add_argument("--queue", help="resumable failure queue file")
    p_enrich.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    p_enrich.add_argument("--contact")
    p_enrich.add_argument("--out")
    p_enrich.set_defaults(func=cmd_crossref_enrich)

    p_rules = sub.add_parser("rules", help="inspect rule constants")
    rules_sub = p_rules.add_subparsers(dest="action", required=True)
    p_show = rules_sub.add_parser("show", parents=[common],
                                  help="print the effective rule constants")
    p_show.add_argument("--rules", choices=["strict", "relaxed"])
    p_show.add_argument("--keyword-case-insensitive", action="store_true", default=None)
    p_show.add_argument("--award-mode", dest="award_mode", choices=["exact", "numeric-token"])
    p_show.add_argument("--mode", choices=["strict", "aggressive"])
    p_show.add_argument("--dotless", action=argparse.BooleanOptionalAction, default=None)
    p_show.set_defaults(func=cmd_rules_show)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FetchFailedError as exc:
        print(f"network failure: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except (ValidationError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
