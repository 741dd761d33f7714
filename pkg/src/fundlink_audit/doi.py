"""DOI cleaning and validation.

Two cleaning modes are supported. ``OPENAIRE_STRICT`` mirrors the graph's
historical behavior: trim surrounding whitespace and validate. ``AGGRESSIVE``
additionally strips resolver prefixes, one layer of wrapping quotes or angle
brackets, and all internal whitespace, so that links lost to reporting-time
typos can be recovered. Neither mode ever repairs the identifier itself: a
digit typo stays a reject.

Both modes lowercase the result. DOIs are case-insensitive identifiers and
pair-key equality needs one canonical case; this is a documented deviation
from the historical trim-only rule and is echoed in report headers.
"""

from __future__ import annotations

import re
from enum import Enum

from .errors import MalformedDoiError

#: Validation pattern: "10.", at least four digits, then a tail free of
#: whitespace, double quotes, and angle brackets (slashes allowed past the
#: first tail character). Printed in --help and report headers so audits are
#: reproducible bit for bit.
DOI_PATTERN = r'10\.[0-9]{4,}[^\s"/<>]*[^\s"<>]+'

#: Permissive variant that makes the dot after "10" optional, accepting
#: prefixes like "101234/...". Off by default; enable with ``allow_dotless``.
DOI_PATTERN_DOTLESS = r'10[.]?[0-9]{4,}[^\s"/<>]*[^\s"<>]+'

_DOI_RE = re.compile(DOI_PATTERN)
_DOI_DOTLESS_RE = re.compile(DOI_PATTERN_DOTLESS)

#: Resolver prefixes removed by aggressive cleaning (case-insensitive,
#: at most one per call).
RESOLVER_PREFIXES = (
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi:",
)

_WRAPPER_PAIRS = (('"', '"'), ("'", "'"), ("<", ">"))


class NormalizationMode(str, Enum):
    OPENAIRE_STRICT = "openaire-strict"
    AGGRESSIVE = "aggressive"


def mode_tag(mode: NormalizationMode, allow_dotless: bool = False) -> str:
    """Short tag recorded in snapshots; snapshots only diff when tags match."""
    return mode.value + ("+dotless" if allow_dotless else "")


def is_valid(candidate: str, allow_dotless: bool = False) -> bool:
    """True iff the entire candidate matches the validation pattern."""
    pattern = _DOI_DOTLESS_RE if allow_dotless else _DOI_RE
    return bool(pattern.fullmatch(candidate))


def _strip_wrapping(value: str) -> str:
    if len(value) >= 2:
        for left, right in _WRAPPER_PAIRS:
            if value[0] == left and value[-1] == right:
                return value[1:-1]
    return value


def normalize(raw: str, mode: NormalizationMode, allow_dotless: bool = False) -> str:
    """Clean ``raw`` under ``mode`` and return the canonical DOI.

    Raises :class:`MalformedDoiError` (carrying the raw input) when the
    cleaned value fails validation. Idempotent: normalizing an already
    normalized value returns it unchanged.
    """
    work = raw.strip()
    if mode is NormalizationMode.AGGRESSIVE:
        work = _strip_wrapping(work).strip()
        lowered = work.lower()
        for prefix in RESOLVER_PREFIXES:
            if lowered.startswith(prefix):
                work = work[len(prefix):]
                break
        work = "".join(work.split())
    work = work.lower()
    if not is_valid(work, allow_dotless):
        raise MalformedDoiError(raw)
    return work
