"""H2020 funder matching rules and grant-number extraction.

Decides whether a publisher-deposited funder assertion denotes EC/H2020
funding, and turns award strings into ``<grant number, doi>`` links. Two rule
levels exist: STRICT matches the funder registry identifiers and the official
programme phrases; RELAXED additionally fires on a fixed keyword list. The
constant lists below are part of the audit contract and are printed verbatim
by ``fundlink-audit rules show``; golden tests pin them against drift.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .errors import ValidationError
from .ingest import CrossrefWork, FunderAssertion
from .model import FundingLink, ProjectRef, Source, merge_links

#: Funder registry identifiers accepted as H2020/EC funding under STRICT
#: rules. The last two may also capture FP7 links.
STRICT_FUNDER_DOIS = (
    "10.13039/100010663",   # H2020 ERC
    "10.13039/100010661",   # H2020 Programme
    "10.13039/501100007601",  # H2020
    "10.13039/100010665",   # H2020 Marie Curie Actions
    "10.13039/501100000780",  # EC
    "10.13039/501100000781",  # ERC
)

#: Funder-name phrases accepted under STRICT rules. Matching is containment
#: after case folding and apostrophe folding; "program" also catches the
#: "programme" spelling because it is a prefix of it.
STRICT_FUNDER_NAMES = (
    "European Union's Horizon 2020 research and innovation program",
    "European Union's",
)

#: Keywords accepted under RELAXED rules (substring match, case-sensitive by
#: default: the short tokens "EU" and "EC" otherwise fire inside ordinary
#: words, e.g. "eu" in "Deutsche").
RELAXED_KEYWORDS = (
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

_CURLY_APOSTROPHES = "’‘`´"
_DIGIT_RUN_RE = re.compile(r"[0-9]+")


class RuleLevel(str, Enum):
    STRICT = "strict"
    RELAXED = "relaxed"


class AwardMode(str, Enum):
    EXACT = "exact"
    NUMERIC_TOKEN = "numeric-token"


@dataclass(frozen=True)
class RuleSet:
    """Effective matching rules; embedded in reports for traceability."""

    level: RuleLevel
    strict_funder_dois: tuple[str, ...] = STRICT_FUNDER_DOIS
    strict_names: tuple[str, ...] = STRICT_FUNDER_NAMES
    relaxed_keywords: tuple[str, ...] = RELAXED_KEYWORDS
    keyword_case_sensitive: bool = True


def _fold_name(name: str) -> str:
    for ch in _CURLY_APOSTROPHES:
        name = name.replace(ch, "'")
    return name.casefold()


def matches_h2020_funder(assertion: FunderAssertion, rules: RuleSet) -> bool:
    """True iff the assertion denotes H2020/EC funding under ``rules``.

    STRICT accepts a funder DOI from the registry list or a name containing
    one of the official phrases. RELAXED accepts everything STRICT does, plus
    any name containing a relaxed keyword.
    """
    if assertion.funder_doi and assertion.funder_doi.strip().lower() in rules.strict_funder_dois:
        return True
    name = assertion.name or ""
    if not name:
        return False
    folded = _fold_name(name)
    if any(_fold_name(phrase) in folded for phrase in rules.strict_names):
        return True
    if rules.level is RuleLevel.RELAXED:
        if rules.keyword_case_sensitive:
            return any(kw in name for kw in rules.relaxed_keywords)
        return any(kw.casefold() in folded for kw in rules.relaxed_keywords)
    return False


def award_to_grant_numbers(award: str, mode: AwardMode) -> list[str]:
    """Extract candidate grant numbers from one award string.

    EXACT keeps the trimmed award only when it is already a pure digit
    string. NUMERIC_TOKEN returns every maximal digit run of 5 to 9 digits,
    long enough for FP7/H2020 grant numbers, short enough to skip years.
    """
    if mode is AwardMode.EXACT:
        candidate = award.strip()
        return [candidate] if candidate and _DIGIT_RUN_RE.fullmatch(candidate) else []
    return [run for run in _DIGIT_RUN_RE.findall(award) if 5 <= len(run) <= 9]


def extract_links(
    work: CrossrefWork,
    rules: RuleSet,
    mode: AwardMode = AwardMode.EXACT,
) -> list[FundingLink]:
    """Produce one funding link per grant number asserted by a matching funder.

    Links from non-matching assertions are never produced; duplicates across
    assertions collapse into one link with merged provenance.
    """
    merged: dict[str, FundingLink] = {}
    for assertion in work.funders:
        if not matches_h2020_funder(assertion, rules):
            continue
        funder_label = assertion.funder_doi or assertion.name or "unknown"
        provenance = f"crossref-funding:{rules.level.value}:{funder_label}"
        for award in assertion.awards:
            for grant in award_to_grant_numbers(award, mode):
                link = FundingLink(grant, work.doi, Source.CROSSREF, provenance=provenance)
                key = link.pair_key
                merged[key] = merge_links(merged[key], link) if key in merged else link
    return list(merged.values())


def date_plausible(publication_year: int | None, project: ProjectRef, grace_years: int = 2) -> bool:
    """True iff the publication year is compatible with the funding period.

    A publication more than ``grace_years`` before the project start is
    implausible. Unknown years are always plausible: missing data must never
    penalize a link.
    """
    if grace_years < 0:
        raise ValidationError("grace_years must be >= 0")
    if publication_year is None:
        return True
    return publication_year >= project.start_date.year - grace_years
