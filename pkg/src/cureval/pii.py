"""Regex-based detection of personal information in record text.

Pattern set (toggled per name in the pipeline config):

=================  =======  =============================================
name               default  matches
=================  =======  =============================================
email              on       RFC-5322-lite address, e.g. ``a@b.com``
cn_mobile          on       11-digit mainland mobile, ``1[3-9]`` prefix
cn_landline        on       area-code landline, e.g. ``010-66001234``
cn_resident_id     off      18-digit resident id, checksum-validated
contact_handle     off      微信号/QQ号 followed by an identifier
=================  =======  =============================================

Digit patterns carry boundary guards so they never fire inside longer
digit runs; the resident-id pattern additionally validates the GB 11643
check digit to cut false positives on arbitrary 18-digit numbers.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

_ID_WEIGHTS = (7, 9, 10, 5, 8, 4, 2, 1, 6, 3, 7, 9, 10, 5, 8, 4, 2)
_ID_CHECK = "10X98765432"


def _valid_resident_id(candidate: str) -> bool:
    total = sum(int(d) * w for d, w in zip(candidate[:17], _ID_WEIGHTS))
    return _ID_CHECK[total % 11] == candidate[17].upper()


@dataclass(frozen=True)
class PiiPattern:
    name: str
    regex: re.Pattern
    default_on: bool
    validate: Callable[[str], bool] | None = None

    def search(self, text: str) -> bool:
        for match in self.regex.finditer(text):
            if self.validate is None or self.validate(match.group(0)):
                return True
        return False


ALL_PATTERNS = (
    PiiPattern(
        "email",
        re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}"),
        default_on=True,
    ),
    PiiPattern(
        "cn_mobile",
        re.compile(r"(?<!\d)1[3-9]\d{9}(?!\d)"),
        default_on=True,
    ),
    PiiPattern(
        "cn_landline",
        re.compile(r"(?<!\d)0\d{2,3}[- ]?\d{7,8}(?!\d)"),
        default_on=True,
    ),
    PiiPattern(
        "cn_resident_id",
        re.compile(r"(?<![0-9Xx])\d{17}[0-9Xx](?![0-9Xx])"),
        default_on=False,
        validate=_valid_resident_id,
    ),
    PiiPattern(
        "contact_handle",
        re.compile(r"(?:微信号|QQ号)\s*[:：]?\s*[A-Za-z0-9_-]{4,}"),
        default_on=False,
    ),
)

PATTERN_NAMES = tuple(p.name for p in ALL_PATTERNS)


def select_patterns(toggles: Mapping[str, bool] | None = None) -> tuple[PiiPattern, ...]:
    """Resolve the enabled pattern set from per-name toggles.

    Names absent from ``toggles`` keep their defaults; unknown names raise.
    """
    toggles = dict(toggles or {})
    unknown = set(toggles) - set(PATTERN_NAMES)
    if unknown:
        raise ValueError(f"unknown PII pattern names: {sorted(unknown)}")
    return tuple(p for p in ALL_PATTERNS if toggles.get(p.name, p.default_on))


DEFAULT_PATTERNS = select_patterns()


def contains_pii(text: str, patterns: Iterable[PiiPattern] = DEFAULT_PATTERNS) -> bool:
    return any(p.search(text) for p in patterns)
