"""Reconciliation and audit toolkit for <project, publication> funding links."""

__version__ = "0.1.0"

from .doi import NormalizationMode, is_valid, normalize
from .model import (
    DatasetSnapshot,
    FundingLink,
    ProjectRef,
    Source,
    make_pair_key,
    split_pair_key,
)

__all__ = [
    "__version__",
    "NormalizationMode",
    "is_valid",
    "normalize",
    "DatasetSnapshot",
    "FundingLink",
    "ProjectRef",
    "Source",
    "make_pair_key",
    "split_pair_key",
]
