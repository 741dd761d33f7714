"""Polite, retrying client for the Crossref works API.

Used to backfill metadata for DOIs absent from the local dump and to run
coverage count queries. Definitive answers (a work, a 404) come back
immediately; transient trouble (timeouts, 5xx, 429, unparseable bodies) is
retried on an exponential schedule with optional jitter, honoring the
server's Retry-After hint. Every attempt is logged with a timestamp and
status so failures are auditable.

All timing goes through injectable ``sleep``/``clock`` callables and the
HTTP layer accepts an injectable transport, so retry schedules are testable
without real waits or a real network.
"""

from __future__ import annotations

import json
import os
import random
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from urllib.parse import quote

import httpx

from . import __version__
from .errors import DataError, FetchFailedError, MalformedDoiError, ValidationError
from .ingest import CrossrefWork, work_from_json
from .model import split_pair_key

DEFAULT_API_BASE = "https://api.crossref.org"

#: Environment variable supplying the contact address for the polite pool.
CONTACT_ENV_VAR = "FUNDLINK_CONTACT"

_RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class RetryPolicy:
    """Schedule for re-trying transient API failures."""

    max_attempts: int = 5
    base_delay: float = 1.0
    factor: float = 2.0
    jitter_fraction: float = 0.2
    honor_server_retry_hint: bool = True
    max_delay: float = 60.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValidationError("max_attempts must be >= 1")
        if self.base_delay <= 0 or self.factor < 1 or self.max_delay < self.base_delay:
            raise ValidationError("delays must be positive and non-shrinking")
        if not 0 <= self.jitter_fraction <= 1:
            raise ValidationError("jitter_fraction must be in [0, 1]")

    def delay(self, retry_index: int, rng: random.Random | None = None, hint: float | None = None) -> float:
        """Delay before retry number ``retry_index`` (0-based)."""
        value = min(self.base_delay * self.factor**retry_index, self.max_delay)
        if self.jitter_fraction and rng is not None:
            value *= 1 + self.jitter_fraction * rng.random()
        if hint is not None and self.honor_server_retry_hint:
            value = max(value, hint)
        return value


@dataclass(frozen=True)
class Attempt:
    status: str
    at: float


class OutcomeKind(str, Enum):
    WORK = "work"
    NOT_FOUND = "not-found"
    FAILED = "failed"


@dataclass
class FetchOutcome:
    """Result of one DOI lookup, with the full attempt log."""

    kind: OutcomeKind
    attempts: int
    log: list[Attempt] = field(default_factory=list)
    work: CrossrefWork | None = None
    last_error: str | None = None

    @property
    def ok(self) -> bool:
        return self.kind is OutcomeKind.WORK


@dataclass(frozen=True)
class QueueEntry:
    """One failed DOI in the resumable retry queue."""

    doi: str
    attempts: int
    last_error: str
    last_status: str


def load_queue(path) -> list[QueueEntry]:
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except ValueError as exc:
            raise DataError(f"unreadable queue line: {line!r}") from exc
        entries.append(
            QueueEntry(
                doi=record["doi"],
                attempts=int(record.get("attempts", 0)),
                last_error=str(record.get("last_error", "")),
                last_status=str(record.get("last_status", "")),
            )
        )
    return entries


def queue_to_ndjson(entries) -> str:
    return "".join(
        json.dumps(
            {
                "attempts": e.attempts,
                "doi": e.doi,
                "last_error": e.last_error,
                "last_status": e.last_status,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        + "\n"
        for e in sorted(entries, key=lambda e: e.doi)
    )


def _retry_hint(response: httpx.Response) -> float | None:
    value = response.headers.get("Retry-After")
    if value is None:
        return None
    try:
        return max(float(value), 0.0)
    except ValueError:
        return None


class CrossrefClient:
    """Works-API client with retry, polite identification, and bounded concurrency.

    The contact address for the polite request pool comes from the
    ``FUNDLINK_CONTACT`` environment variable (or the ``contact`` argument).
    Requests still go out without one, with a warning: being identifiable is
    a courtesy, not a hard dependency.
    """

    def __init__(
        self,
        policy: RetryPolicy | None = None,
        *,
        base_url: str = DEFAULT_API_BASE,
        contact: str | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
        clock=time.monotonic,
        rng: random.Random | None = None,
        timeout: float = 30.0,
    ):
        self.policy = policy or RetryPolicy()
        self.contact = contact if contact is not None else os.environ.get(CONTACT_ENV_VAR)
        if not self.contact:
            print(
                f"warning: no contact set ({CONTACT_ENV_VAR} unset); "
                "requests will not join the polite pool",
                file=sys.stderr,
            )
        agent = f"fundlink-audit/{__version__}"
        if self.contact:
            agent += f" (mailto:{self.contact})"
        self._sleep = sleep
        self._clock = clock
        self._rng = rng if rng is not None else random.Random()
        self._http = httpx.Client(
            base_url=base_url,
            headers={"User-Agent": agent},
            timeout=timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def _request_json(self, url: str, log: list[Attempt]) -> tuple[dict | None, str | None]:
        """One GET with retries. Returns (payload, None) or (None, terminal status).

        The terminal status is "404" for a definitive not-found or the last
        failure label once the retry budget is exhausted.
        """
        previous_delay = 0.0
        status = "unknown"
        for attempt in range(self.policy.max_attempts):
            try:
                response = self._http.get(url)
            except httpx.TimeoutException:
                status, hint = "timeout", None
            except httpx.TransportError as exc:
                status, hint = f"transport-error:{type(exc).__name__}", None
            else:
                if response.status_code == 200:
                    try:
                        payload = response.json()
                    except ValueError:
                        payload = None
                    if isinstance(payload, dict) and isinstance(payload.get("message"), dict):
                        log.append(Attempt("200", self._clock()))
                        return payload, None
                    status, hint = "malformed-body", None
                elif response.status_code == 404:
                    log.append(Attempt("404", self._clock()))
                    return None, "404"
                elif response.status_code in _RETRYABLE_STATUSES:
                    status, hint = str(response.status_code), _retry_hint(response)
                else:
                    # Unexpected definitive status; retrying will not change it.
                    log.append(Attempt(str(response.status_code), self._clock()))
                    return None, str(response.status_code)
            log.append(Attempt(status, self._clock()))
            if attempt + 1 < self.policy.max_attempts:
                delay = max(self.policy.delay(attempt, self._rng, hint), previous_delay)
                previous_delay = delay
                self._sleep(delay)
        return None, status

    def get_work(self, doi: str) -> FetchOutcome:
        """Fetch one work by DOI.

        404 is a definitive answer and is never retried; transient failures
        follow the retry policy and exhaust into FAILED with the attempt log.
        """
        log: list[Attempt] = []
        payload, terminal = self._request_json(f"/works/{quote(doi, safe='')}", log)
        if payload is not None:
            try:
                work = work_from_json(payload["message"])
            except (DataError, MalformedDoiError):
                # Definitive content problem: the body parsed but carries no
                # usable work record. Retrying cannot change it.
                return FetchOutcome(OutcomeKind.FAILED, len(log), log, last_error="malformed-body")
            return FetchOutcome(OutcomeKind.WORK, len(log), log, work=work)
        if terminal == "404":
            return FetchOutcome(OutcomeKind.NOT_FOUND, len(log), log)
        return FetchOutcome(OutcomeKind.FAILED, len(log), log, last_error=terminal)

    def count_works(
        self,
        work_type: str,
        from_date: str,
        until_date: str,
        has_funder: bool | None = None,
    ) -> int:
        """Total-results count of a zero-row filtered works query.

        ``from_date``/``until_date`` are year-month strings; the filter
        syntax mirrors the public API exactly (``from-pub-date``,
        ``until-pub-date``, ``has-funder``).
        """
        filters = [f"from-pub-date:{from_date}", f"until-pub-date:{until_date}"]
        if has_funder is not None:
            filters.append(f"has-funder:{'true' if has_funder else 'false'}")
        url = f"/types/{quote(work_type)}/works?rows=0&filter={','.join(filters)}"
        log: list[Attempt] = []
        payload, terminal = self._request_json(url, log)
        if payload is None:
            raise FetchFailedError(
                f"count query failed after {len(log)} attempts: {terminal}",
                attempts=len(log),
                last_error=terminal,
            )
        total = payload["message"].get("total-results")
        if not isinstance(total, int):
            raise FetchFailedError("count query returned no total-results", attempts=len(log))
        return total

    def enrich_missing(
        self,
        keys,
        local_index: set[str],
        *,
        max_in_flight: int = 2,
        queue_path=None,
    ) -> tuple[list[CrossrefWork], list[QueueEntry]]:
        """Fetch works for every distinct DOI in ``keys`` missing locally.

        With a queue file from a previous run present, only the queued
        failures are retried; otherwise candidates come from the keys minus
        the local index. Each DOI is fetched at most once per run, with at
        most ``max_in_flight`` requests outstanding. The queue file is
        rewritten at the end with whatever still fails, so repeated runs
        converge without re-fetching successes.
        """
        if max_in_flight < 1:
            raise ValidationError("max_in_flight must be >= 1")
        queue_file = Path(queue_path) if queue_path else None
        if queue_file is not None and queue_file.exists() and queue_file.stat().st_size:
            candidates = sorted({e.doi for e in load_queue(queue_file)} - set(local_index))
        else:
            dois = {split_pair_key(key)[1] for key in keys}
            candidates = sorted(dois - set(local_index))

        results: dict[str, FetchOutcome] = {}
        lock = threading.Lock()

        def fetch(doi: str) -> None:
            outcome = self.get_work(doi)
            with lock:
                results[doi] = outcome

        if candidates:
            with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
                list(pool.map(fetch, candidates))

        works = [results[d].work for d in candidates if results[d].ok]
        failures = [
            QueueEntry(
                doi=d,
                attempts=results[d].attempts,
                last_error=results[d].last_error or "",
                last_status=results[d].log[-1].status if results[d].log else "",
            )
            for d in candidates
            if results[d].kind is OutcomeKind.FAILED
        ]
        if queue_file is not None:
            from .files import atomic_write_text

            atomic_write_text(queue_file, queue_to_ndjson(failures))
        return works, failures
