"""Audit run configuration.

One serializable object carries every knob that affects results. The
effective config is embedded verbatim in each report, so any number in a
report can be traced back to the settings that produced it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .client import RetryPolicy
from .doi import NormalizationMode
from .errors import DataError, ValidationError
from .funder import AwardMode, RuleLevel, RuleSet


@dataclass
class AuditConfig:
    normalization_mode: str = "aggressive"
    allow_dotless: bool = False
    rule_level: str = "strict"
    keyword_case_sensitive: bool = True
    award_mode: str = "exact"
    grace_years: int = 2
    sample_n: int = 1000
    sample_seed: int = 0
    max_reject_rate: float | None = None
    contact: str | None = None
    retry_max_attempts: int = 5
    retry_base_delay: float = 1.0
    retry_factor: float = 2.0
    retry_jitter_fraction: float = 0.2
    retry_honor_server_hint: bool = True
    max_in_flight: int = 2
    inputs: dict[str, str] = field(default_factory=dict)
    out_dir: str = "audit-out"

    def normalization(self) -> NormalizationMode:
        try:
            return NormalizationMode(self.normalization_mode)
        except ValueError:
            # Accept the CLI's shorthand too.
            if self.normalization_mode == "strict":
                return NormalizationMode.OPENAIRE_STRICT
            raise ValidationError(f"unknown normalization mode {self.normalization_mode!r}")

    def rules(self) -> RuleSet:
        return RuleSet(
            level=RuleLevel(self.rule_level),
            keyword_case_sensitive=self.keyword_case_sensitive,
        )

    def award(self) -> AwardMode:
        return AwardMode(self.award_mode)

    def retry_policy(self) -> RetryPolicy:
        return RetryPolicy(
            max_attempts=self.retry_max_attempts,
            base_delay=self.retry_base_delay,
            factor=self.retry_factor,
            jitter_fraction=self.retry_jitter_fraction,
            honor_server_retry_hint=self.retry_honor_server_hint,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AuditConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


def load_config(path) -> AuditConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise DataError(f"config {path} must hold a JSON object")
    return AuditConfig.from_dict(data)
