"""Drive the full CLI pipeline over the fixture corpus.

Shared by the CLI suite and the acceptance suite so both exercise the real
command surface, not internal APIs.
"""

from pathlib import Path

from fundlink_audit.cli import main

CORPUS = Path(__file__).parent / "data" / "corpus"


def run(argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"command failed with exit {code}: {argv}"


def run_corpus_pipeline(out: Path) -> dict[str, Path]:
    paths = {
        "sygma_snap": out / "snapshots" / "sygma.snap",
        "openaire_snap": out / "snapshots" / "openaire.snap",
        "newer_snap": out / "snapshots" / "openaire_april.snap",
        "strict_links": out / "snapshots" / "crossref_strict.ndjson",
        "relaxed_links": out / "snapshots" / "crossref_relaxed.ndjson",
        "dump_dois": out / "snapshots" / "crossref_dois.txt",
        "partition": out / "partition",
        "left_csv": out / "classifications" / "left_only.csv",
        "right_csv": out / "classifications" / "right_only.csv",
        "unmatched": out / "classifications" / "unmatched.keys",
        "sample": out / "classifications" / "sample.keys",
        "stats": out / "reports" / "stats.json",
        "report_machine": out / "reports" / "report.json",
        "report_human": out / "reports" / "report.txt",
    }
    snapshot_args = ["--mode", "aggressive", "--dotless"]
    run(["ingest", "sygma", "--in", CORPUS / "sygma.csv", "--label", "sygma",
         "--date", "2020-12-02", *snapshot_args, "--out", paths["sygma_snap"],
         "--rejects", out / "rejects" / "sygma.rejects.ndjson"])
    run(["ingest", "openaire", "--in", CORPUS / "openaire.ndjson", "--label", "openaire",
         "--date", "2020-11-30", *snapshot_args, "--out", paths["openaire_snap"],
         "--rejects", out / "rejects" / "openaire.rejects.ndjson"])
    run(["ingest", "openaire", "--in", CORPUS / "openaire_newer.ndjson", "--label", "openaire-april",
         "--date", "2021-04-15", *snapshot_args, "--out", paths["newer_snap"],
         "--rejects", out / "rejects" / "openaire_april.rejects.ndjson"])
    run(["ingest", "crossref-dump", "--in", CORPUS / "crossref_dump", "--rules", "strict",
         "--out", paths["strict_links"], "--dois", paths["dump_dois"],
         "--rejects", out / "rejects" / "dump_strict.rejects.ndjson"])
    run(["ingest", "crossref-dump", "--in", CORPUS / "crossref_dump", "--rules", "relaxed",
         "--out", paths["relaxed_links"],
         "--rejects", out / "rejects" / "dump_relaxed.rejects.ndjson"])
    run(["diff", "--left", paths["sygma_snap"], "--right", paths["openaire_snap"],
         "--out", paths["partition"]])
    run(["classify-left", "--partition", paths["partition"], "--left", paths["sygma_snap"],
         "--newer-right", paths["newer_snap"], "--projects", CORPUS / "projects.csv",
         "--publications", CORPUS / "publications.txt",
         "--crossref-strict", paths["strict_links"],
         "--crossref-relaxed", paths["relaxed_links"],
         "--grace-years", 2, "--out", paths["left_csv"]])
    run(["verify-right", "--partition", paths["partition"], "--right", paths["openaire_snap"],
         "--crossref", paths["strict_links"], "--annotations", CORPUS / "annotations.csv",
         "--out", paths["right_csv"], "--unmatched-out", paths["unmatched"]])
    run(["sample", "--in", paths["unmatched"], "--n", 22, "--seed", 42, "--out", paths["sample"]])
    run(["stats", "--partition", paths["partition"], "--left-classification", paths["left_csv"],
         "--right-classification", paths["right_csv"], "--sample", paths["sample"],
         "--out", paths["stats"]])
    run(["report", "--stats", paths["stats"], "--partition", paths["partition"],
         "--format", "machine", "--out", paths["report_machine"]])
    run(["report", "--stats", paths["stats"], "--partition", paths["partition"],
         "--format", "human", "--out", paths["report_human"]])
    return paths
