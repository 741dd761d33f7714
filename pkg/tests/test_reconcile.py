import datetime as dt
import random
import subprocess
import sys
from fractions import Fraction

import pytest

from fundlink_audit.errors import ConservationError, DataError, ValidationError
from fundlink_audit.ingest import Annotation, AnnotationLabel
from fundlink_audit.model import DatasetSnapshot, FundingLink, ProjectRef, Source
from fundlink_audit.reconcile import (
    LeftCause,
    LeftCauseCode,
    Partition,
    RightStatus,
    RightStatusCode,
    classify_left_only,
    diff,
    funnel_counts,
    funnel_stats,
    sample_unmatched,
    verify_right_only,
)


def _snap(label, keys, mode="aggressive", **link_kwargs):
    links = {}
    for key in keys:
        project_id, doi = key.split("::", 1)
        links[key] = FundingLink(project_id, doi, Source.SYGMA, **link_kwargs)
    return DatasetSnapshot(label, dt.date(2020, 12, 2), mode, links)


def brute_force_partition(left_keys, right_keys):
    """Independent oracle: linear scans over plain lists, no set algebra."""
    left_list, right_list = list(left_keys), list(right_keys)
    matched = [k for k in left_list if k in right_list]
    left_only = [k for k in left_list if k not in right_list]
    right_only = [k for k in right_list if k not in left_list]
    return sorted(matched), sorted(left_only), sorted(right_only)


def test_diff_identical_snapshots():
    keys = ["1::10.1000/a", "2::10.1000/b"]
    partition = diff(_snap("l", keys), _snap("r", keys))
    assert partition.matched == tuple(sorted(keys))
    assert partition.left_only == () and partition.right_only == ()


def test_diff_simple_sets():
    partition = diff(_snap("l", ["1::10.1000/a", "1::10.1000/b"]), _snap("r", ["1::10.1000/b", "1::10.1000/c"]))
    assert partition.matched == ("1::10.1000/b",)
    assert partition.left_only == ("1::10.1000/a",)
    assert partition.right_only == ("1::10.1000/c",)
    assert partition.left_label == "l" and partition.right_label == "r"


def test_diff_refuses_mode_mismatch():
    with pytest.raises(DataError):
        diff(_snap("l", [], mode="aggressive"), _snap("r", [], mode="openaire-strict"))


def test_diff_matches_brute_force_oracle_on_random_cases():
    rng = random.Random(7)
    pool = [f"{rng.randint(1, 40)}::10.5555/{rng.randint(1, 60)}" for _ in range(300)]
    for _ in range(25):
        left = set(rng.sample(pool, rng.randint(0, 80)))
        right = set(rng.sample(pool, rng.randint(0, 80)))
        partition = diff(_snap("l", left), _snap("r", right))
        matched, left_only, right_only = brute_force_partition(left, right)
        assert list(partition.matched) == matched
        assert list(partition.left_only) == left_only
        assert list(partition.right_only) == right_only
        # Partition invariants.
        m, lo, ro = set(partition.matched), set(partition.left_only), set(partition.right_only)
        assert m | lo == left and m | ro == right
        assert not (m & lo) and not (m & ro) and not (lo & ro)


# ---------------------------------------------------------------------------
# left-only classification

PROJECTS = {
    "100001": ProjectRef("100001", dt.date(2016, 1, 1)),
    "100002": ProjectRef("100002", dt.date(2018, 6, 1)),
}


def _partition(left_keys):
    return Partition(matched=(), left_only=tuple(sorted(left_keys)), right_only=())


def test_left_rule_order_and_causes():
    keys = {
        "100001::10.5555/late": LeftCauseCode.LATE_ARRIVAL,
        "999999::10.5555/noproj": LeftCauseCode.PROJECT_NOT_IN_GRAPH,
        "100001::10.5555/nopub": LeftCauseCode.PUBLICATION_NOT_IN_GRAPH,
        "100001::105555/bad": LeftCauseCode.MALFORMED_DOI,
        "100001::10.5555/strict": LeftCauseCode.EXPECTED_FROM_CROSSREF_STRICT,
        "100001::10.5555/relax": LeftCauseCode.RETRIEVABLE_VIA_RELAXED,
        "100001::10.5555/none": LeftCauseCode.NOT_IN_CROSSREF_FUNDING,
    }
    newer = _snap("april", ["100001::10.5555/late"])
    publications = {"10.5555/late", "105555/bad", "10.5555/strict", "10.5555/relax", "10.5555/none"}
    strict = {"100001::10.5555/strict"}
    relaxed = {"100001::10.5555/strict", "100001::10.5555/relax"}
    left_links = {
        key: FundingLink(key.split("::", 1)[0], key.split("::", 1)[1], Source.SYGMA,
                         publication_date=dt.date(2019, 1, 1))
        for key in keys
    }
    causes, skips = classify_left_only(
        _partition(keys),
        newer_right=newer,
        projects=PROJECTS,
        publication_index=publications,
        crossref_links_strict=strict,
        crossref_links_relaxed=relaxed,
        left_links=left_links,
    )
    assert {k: v.cause for k, v in causes.items()} == keys
    assert skips == {}
    assert all(not v.date_implausible for v in causes.values())


def test_left_classification_is_total_and_single_valued():
    causes, _ = classify_left_only(_partition(["1::10.5555/x", "2::10.5555/y"]))
    assert set(causes) == {"1::10.5555/x", "2::10.5555/y"}
    assert all(isinstance(v, LeftCause) for v in causes.values())


def test_left_missing_inputs_skip_rules_with_warnings():
    causes, skips = classify_left_only(_partition(["1::10.5555/x"]))
    assert causes["1::10.5555/x"].cause is LeftCauseCode.NOT_IN_CROSSREF_FUNDING
    assert skips == {
        "date_flag": 1,
        "late_arrival": 1,
        "project_registry": 1,
        "publication_index": 1,
        "crossref_strict": 1,
        "crossref_relaxed": 1,
    }


def test_left_date_flag_is_orthogonal():
    key = "100002::10.5555/early"
    links = {key: FundingLink("100002", "10.5555/early", Source.SYGMA,
                              publication_date=dt.date(2014, 1, 1))}
    causes, _ = classify_left_only(
        _partition([key]),
        projects=PROJECTS,
        left_links=links,
        grace_years=2,
    )
    cause = causes[key]
    assert cause.date_implausible is True  # 2014 < 2018 - 2
    assert cause.cause is LeftCauseCode.NOT_IN_CROSSREF_FUNDING
    relaxed_grace, _ = classify_left_only(
        _partition([key]), projects=PROJECTS, left_links=links, grace_years=4
    )
    assert relaxed_grace[key].date_implausible is False


# ---------------------------------------------------------------------------
# right-only verification

def _right_partition(keys):
    return Partition(matched=(), left_only=(), right_only=tuple(sorted(keys)))


def _ann(key, label, source="wos"):
    return Annotation(key, label, source)


def test_right_precedence():
    keys = [
        "1::10.5555/cr",
        "1::10.5555/ext",
        "1::10.5555/conf",
        "1::10.5555/mist",
        "1::10.5555/dedup",
        "1::10.5555/unv",
    ]
    links = {
        key: FundingLink("1", key.split("::", 1)[1], Source.OPENAIRE,
                         deduplicated=key.endswith(("cr", "dedup")))
        for key in keys
    }
    annotations = {
        "1::10.5555/ext": _ann("1::10.5555/ext", AnnotationLabel.EXTERNAL_MATCH),
        "1::10.5555/conf": _ann("1::10.5555/conf", AnnotationLabel.CONFIRMED, "repository"),
        "1::10.5555/mist": _ann("1::10.5555/mist", AnnotationLabel.DATA_MISTAKE),
    }
    statuses, warnings = verify_right_only(
        _right_partition(keys), {"1::10.5555/cr"}, annotations, links
    )
    expected = {
        "1::10.5555/cr": RightStatusCode.CROSSREF_FUNDING_MATCH,  # beats its dedup flag
        "1::10.5555/ext": RightStatusCode.EXTERNAL_FUNDING_MATCH,
        "1::10.5555/conf": RightStatusCode.MANUALLY_CONFIRMED,
        "1::10.5555/mist": RightStatusCode.DATA_MISTAKE,
        "1::10.5555/dedup": RightStatusCode.DEDUP_SUSPECT,
        "1::10.5555/unv": RightStatusCode.UNVERIFIED,
    }
    assert {k: v.status for k, v in statuses.items()} == expected
    assert warnings == {}


def test_right_dedup_annotation_and_explicit_unverified():
    keys = ["1::10.5555/a", "1::10.5555/b"]
    annotations = {
        "1::10.5555/a": _ann("1::10.5555/a", AnnotationLabel.DEDUP_SUSPECT),
        "1::10.5555/b": _ann("1::10.5555/b", AnnotationLabel.UNVERIFIED),
    }
    statuses, _ = verify_right_only(_right_partition(keys), set(), annotations, {})
    assert statuses["1::10.5555/a"].status is RightStatusCode.DEDUP_SUSPECT
    assert statuses["1::10.5555/b"].status is RightStatusCode.UNVERIFIED


def test_right_stale_annotation_warns_and_is_ignored():
    annotations = {"9::10.5555/gone": _ann("9::10.5555/gone", AnnotationLabel.CONFIRMED)}
    statuses, warnings = verify_right_only(_right_partition(["1::10.5555/a"]), set(), annotations, {})
    assert warnings == {"stale_annotations": 1}
    assert statuses["1::10.5555/a"].status is RightStatusCode.UNVERIFIED


# ---------------------------------------------------------------------------
# sampling

KEYS = [f"{i}::10.5555/{i}" for i in range(1, 51)]


def test_sample_n_zero():
    assert sample_unmatched(KEYS, 0, 1) == []


def test_sample_covers_all_when_n_exceeds():
    sample = sample_unmatched(KEYS, 999, 1)
    assert sorted(sample) == sorted(KEYS)
    assert len(set(sample)) == len(sample)


def test_sample_is_subset_without_duplicates():
    sample = sample_unmatched(KEYS, 10, 42)
    assert len(sample) == 10
    assert set(sample) <= set(KEYS)
    assert len(set(sample)) == 10


def test_sample_deterministic_same_process():
    assert sample_unmatched(KEYS, 10, 42) == sample_unmatched(KEYS, 10, 42)
    assert sample_unmatched(KEYS, 10, 42) != sample_unmatched(KEYS, 10, 43)


def test_sample_deterministic_across_processes():
    code = (
        "from fundlink_audit.reconcile import sample_unmatched;"
        f"print(sample_unmatched({KEYS!r}, 10, 42))"
    )
    runs = {
        subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
        for _ in range(2)
    }
    assert len(runs) == 1
    assert next(iter(runs)).strip() == str(sample_unmatched(KEYS, 10, 42))


def test_sample_rejects_negative_n():
    with pytest.raises(ValidationError):
        sample_unmatched(KEYS, -1, 0)


# ---------------------------------------------------------------------------
# funnel

PAPER_COUNTS = {
    "left_only": 13580,
    "late_arrival": 6411,
    "left_remaining": 7169,
    "retrievable_via_relaxed": 457,
    "crossref_funding_match": 23402,
    "sampled": 1000,
    "external_funding_match": 658,
    "manual_review": 342,
    "dedup_suspect": 263,
    "manual_remaining": 79,
    "manually_confirmed": 46,
    "data_mistake": 3,
    "unverified": 30,
}


def test_funnel_published_counts_conserve_and_share_values():
    stats = funnel_stats(PAPER_COUNTS)
    assert stats.shares["late_share"] == Fraction(6411, 13580)
    assert stats.shares["not_in_crossref_share"] == Fraction(7169 - 457, 7169)
    assert stats.shares["external_match_share"] == Fraction(658, 1000)
    assert stats.percent("late_share") == "47.2%"
    assert stats.percent("not_in_crossref_share") == "93.6%"
    assert stats.percent("external_match_share") == "65.8%"
    # No right-only total published: the dependent share stays undefined.
    assert stats.shares["crossref_match_share"] is None
    assert stats.percent("crossref_match_share") == "n/a"


def test_funnel_conservation_violation_names_stage():
    bad = dict(PAPER_COUNTS, unverified=31)
    with pytest.raises(ConservationError) as excinfo:
        funnel_stats(bad)
    assert "manual_remaining" in str(excinfo.value)


def test_funnel_partial_children_must_not_exceed_parent():
    funnel_stats({"left_remaining": 100, "retrievable_via_relaxed": 57})
    with pytest.raises(ConservationError):
        funnel_stats({"left_remaining": 100, "retrievable_via_relaxed": 101})


def test_funnel_sample_cannot_exceed_unmatched():
    with pytest.raises(ConservationError):
        funnel_stats({"right_unmatched": 10, "sampled": 11})


def test_funnel_rejects_bad_counts():
    with pytest.raises(ValidationError):
        funnel_stats({"left_only": -1})
    with pytest.raises(ValidationError):
        funnel_stats({"no_such_stage": 3})
    with pytest.raises(ValidationError):
        funnel_stats({"left_only": 1.5})


def test_funnel_zero_denominators_are_not_errors():
    stats = funnel_stats({"left_only": 0, "late_arrival": 0, "left_remaining": 0})
    assert stats.shares["late_share"] is None
    assert stats.percent("late_share") == "n/a"


def test_funnel_counts_from_classifications():
    partition = Partition(
        matched=("1::10.5555/m",),
        left_only=("1::10.5555/a", "1::10.5555/b", "1::10.5555/c"),
        right_only=("1::10.5555/x", "1::10.5555/y"),
    )
    left = {
        "1::10.5555/a": LeftCause(LeftCauseCode.LATE_ARRIVAL),
        "1::10.5555/b": LeftCause(LeftCauseCode.RETRIEVABLE_VIA_RELAXED, date_implausible=True),
        "1::10.5555/c": LeftCause(LeftCauseCode.NOT_IN_CROSSREF_FUNDING),
    }
    right = {
        "1::10.5555/x": RightStatus(RightStatusCode.CROSSREF_FUNDING_MATCH),
        "1::10.5555/y": RightStatus(RightStatusCode.UNVERIFIED),
    }
    counts = funnel_counts(partition, left, right, sample=["1::10.5555/y"])
    stats = funnel_stats(counts)
    assert stats.counts["left_only"] == 3
    assert stats.counts["late_arrival"] == 1
    assert stats.counts["left_remaining"] == 2
    assert stats.counts["retrievable_via_relaxed"] == 1
    assert stats.counts["date_implausible_flagged"] == 1
    assert stats.counts["crossref_funding_match"] == 1
    assert stats.counts["right_unmatched"] == 1
    assert stats.counts["sampled"] == 1
    assert stats.counts["unverified"] == 1
    assert stats.shares["crossref_match_share"] == Fraction(1, 2)
