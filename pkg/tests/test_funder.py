import pytest
from hypothesis import given
from hypothesis import strategies as st

from fundlink_audit.errors import ValidationError
from fundlink_audit.funder import (
    RELAXED_KEYWORDS,
    STRICT_FUNDER_DOIS,
    STRICT_FUNDER_NAMES,
    AwardMode,
    RuleLevel,
    RuleSet,
    award_to_grant_numbers,
    date_plausible,
    extract_links,
    matches_h2020_funder,
)
from fundlink_audit.ingest import CrossrefWork, FunderAssertion
from fundlink_audit.model import ProjectRef

import datetime as dt

STRICT = RuleSet(RuleLevel.STRICT)
RELAXED = RuleSet(RuleLevel.RELAXED)


def test_strict_funder_doi_list_is_pinned():
    assert STRICT_FUNDER_DOIS == (
        "10.13039/100010663",
        "10.13039/100010661",
        "10.13039/501100007601",
        "10.13039/100010665",
        "10.13039/501100000780",
        "10.13039/501100000781",
    )


def test_relaxed_keyword_list_is_pinned():
    assert RELAXED_KEYWORDS == (
        "ERC",
        "ERA",
        "ICT",
        "CSIC",
        "Curie",
        "FET",
        "European",
        "EU",
        "EC",
        "H2020",
        "Horizon 2020",
        "Horizon2020",
    )
    assert len(RELAXED_KEYWORDS) == 12


@pytest.mark.parametrize("funder_doi", STRICT_FUNDER_DOIS)
def test_every_strict_funder_doi_matches(funder_doi):
    assert matches_h2020_funder(FunderAssertion(funder_doi=funder_doi), STRICT)


@pytest.mark.parametrize("keyword", RELAXED_KEYWORDS)
def test_every_relaxed_keyword_fires(keyword):
    assertion = FunderAssertion(name=f"Funded by the {keyword} action")
    assert matches_h2020_funder(assertion, RELAXED)


@pytest.mark.parametrize(
    "name",
    [
        "European Union's Horizon 2020 research and innovation program",
        "European Union's Horizon 2020 research and innovation programme",
        "european union's horizon 2020 research and innovation programme under grant 1",
        "European Union’s Horizon 2020 research and innovation programme",  # curly apostrophe
        "European Union's",
        "the European Union’s framework",
    ],
)
def test_strict_name_phrases_match_with_folding(name):
    assert matches_h2020_funder(FunderAssertion(name=name), STRICT)


def test_strict_rejects_unrelated_funders():
    assert not matches_h2020_funder(FunderAssertion(name="Schweizerischer Nationalfonds"), STRICT)
    assert not matches_h2020_funder(FunderAssertion(funder_doi="10.13039/501100001711"), STRICT)


def test_relaxed_keyword_case_sensitivity_documents_overmatch():
    name = FunderAssertion(name="Deutsche Forschungsgemeinschaft")
    assert not matches_h2020_funder(name, RELAXED)
    permissive = RuleSet(RuleLevel.RELAXED, keyword_case_sensitive=False)
    # "eu" hides inside "Deutsche": the over-match hazard of short tokens.
    assert matches_h2020_funder(name, permissive)


def test_relaxed_accepts_curie_actions():
    assertion = FunderAssertion(name="H2020 Marie Skłodowska-Curie Actions")
    assert matches_h2020_funder(assertion, RELAXED)
    assert not matches_h2020_funder(assertion, STRICT)


assertions = st.builds(
    FunderAssertion,
    funder_doi=st.one_of(st.none(), st.text(min_size=1, max_size=30)),
    name=st.one_of(st.none(), st.text(max_size=60)),
    awards=st.tuples(),
).filter(lambda a: a.funder_doi is not None or a.name is not None)


@given(assertions)
def test_strict_implies_relaxed(assertion):
    if matches_h2020_funder(assertion, STRICT):
        assert matches_h2020_funder(assertion, RELAXED)


def test_award_exact_mode():
    assert award_to_grant_numbers("101017452", AwardMode.EXACT) == ["101017452"]
    assert award_to_grant_numbers(" 696656 ", AwardMode.EXACT) == ["696656"]
    assert award_to_grant_numbers("grant agreement No 101017452", AwardMode.EXACT) == []
    assert award_to_grant_numbers("", AwardMode.EXACT) == []
    assert award_to_grant_numbers("ERC-2015-StG", AwardMode.EXACT) == []


def test_award_numeric_token_mode():
    assert award_to_grant_numbers("grant agreement No 101017452", AwardMode.NUMERIC_TOKEN) == ["101017452"]
    # Maximal runs of 5-9 digits; years and short codes stay out.
    assert award_to_grant_numbers("ERC-2015-StG 696656 / 12345", AwardMode.NUMERIC_TOKEN) == [
        "696656",
        "12345",
    ]
    assert award_to_grant_numbers("award 1234567890", AwardMode.NUMERIC_TOKEN) == []
    assert award_to_grant_numbers("", AwardMode.NUMERIC_TOKEN) == []


def _work(*assertions_):
    return CrossrefWork(doi="10.5555/w1", work_type="journal-article", funders=tuple(assertions_))


def test_extract_links_basic():
    work = _work(FunderAssertion(funder_doi="10.13039/100010661", awards=("696656",)))
    links = extract_links(work, STRICT)
    assert [(l.project_id, l.doi) for l in links] == [("696656", "10.5555/w1")]
    assert links[0].provenance == "crossref-funding:strict:10.13039/100010661"


def test_extract_links_no_awards_yields_nothing():
    work = _work(FunderAssertion(funder_doi="10.13039/100010661", awards=()))
    assert extract_links(work, STRICT) == []


def test_extract_links_collapses_duplicates():
    work = _work(
        FunderAssertion(funder_doi="10.13039/100010661", awards=("696656",)),
        FunderAssertion(funder_doi="10.13039/100010663", awards=("696656",)),
    )
    links = extract_links(work, STRICT)
    assert len(links) == 1
    assert "10.13039/100010661" in links[0].provenance
    assert "10.13039/100010663" in links[0].provenance


@given(
    st.lists(
        st.builds(
            FunderAssertion,
            funder_doi=st.one_of(st.none(), st.sampled_from(STRICT_FUNDER_DOIS), st.just("10.1/x")),
            name=st.one_of(st.none(), st.text(max_size=20)),
            awards=st.lists(st.text(alphabet="0123456789 ab", max_size=12), max_size=3).map(tuple),
        ).filter(lambda a: a.funder_doi is not None or a.name is not None),
        max_size=4,
    )
)
def test_extract_links_only_from_matching_assertions(funders):
    work = CrossrefWork(doi="10.5555/p", funders=tuple(funders))
    links = extract_links(work, STRICT)
    allowed = set()
    for assertion in funders:
        if matches_h2020_funder(assertion, STRICT):
            for award in assertion.awards:
                allowed.update(award_to_grant_numbers(award, AwardMode.EXACT))
    assert {l.project_id for l in links} <= allowed


PROJECT = ProjectRef("696656", dt.date(2016, 4, 1), dt.date(2018, 3, 31))


def test_date_plausible():
    assert date_plausible(2017, PROJECT, 2)
    assert not date_plausible(2010, PROJECT, 2)
    assert not date_plausible(2013, PROJECT, 2)
    assert date_plausible(2014, PROJECT, 2)
    assert date_plausible(None, PROJECT, 0)
    with pytest.raises(ValidationError):
        date_plausible(2017, PROJECT, -1)
