"""Selector grammar for queries and series listing.

Forms:
    *                          every series
    name                       exact metric name ('*' wildcards allowed)
    name{k=v,k2=v2}            metric name plus exact label matchers
    {k=v}                      label matchers over any metric
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..model import SeriesKey
from .errors import InvalidSelector

_PATTERN_RE = re.compile(r"[a-z0-9_*]+\Z")
_LABEL_RE = re.compile(r"[a-z_][a-z0-9_]*\Z")


def _glob_to_re(pattern: str) -> re.Pattern:
    return re.compile(
        "".join(".*" if c == "*" else re.escape(c) for c in pattern) + r"\Z"
    )


@dataclass(frozen=True)
class Selector:
    metric_pattern: str | None  # None matches any metric
    matchers: tuple[tuple[str, str], ...]

    def matches(self, key: SeriesKey) -> bool:
        if self.metric_pattern is not None and "*" in self.metric_pattern:
            if not _glob_to_re(self.metric_pattern).match(key.metric_name):
                return False
        elif self.metric_pattern is not None:
            if key.metric_name != self.metric_pattern:
                return False
        for name, value in self.matchers:
            if key.labels.get(name) != value:
                return False
        return True


def parse_selector(text: str) -> Selector:
    text = text.strip()
    if not text:
        raise InvalidSelector("empty selector")
    if text == "*":
        return Selector(None, ())

    name_part, brace, rest = text.partition("{")
    if brace and not rest.endswith("}"):
        raise InvalidSelector(f"unbalanced braces in {text!r}")
    matchers: list[tuple[str, str]] = []
    if brace:
        inner = rest[:-1].strip()
        if inner:
            for part in inner.split(","):
                k, sep, v = part.partition("=")
                k, v = k.strip(), v.strip().strip('"')
                if not sep or not v:
                    raise InvalidSelector(f"bad matcher {part!r} in {text!r}")
                if not _LABEL_RE.match(k):
                    raise InvalidSelector(f"bad label name {k!r} in {text!r}")
                matchers.append((k, v))

    name_part = name_part.strip()
    metric_pattern: str | None
    if not name_part:
        if not matchers:
            raise InvalidSelector(f"selector {text!r} matches nothing specific")
        metric_pattern = None
    else:
        if not _PATTERN_RE.match(name_part):
            raise InvalidSelector(f"bad metric pattern {name_part!r}")
        metric_pattern = name_part
    return Selector(metric_pattern, tuple(matchers))
