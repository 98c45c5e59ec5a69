"""Parse the model's sectioned rationale into a :class:`Verdict`.

Responses are expected to carry ``POSITIVE SIGNS``, ``NEGATIVE SIGNS``,
``RISKS``, ``CROSSWALK`` and ``REASON`` sections, but models format them
loosely: markdown or LaTeX bold, colon inside or outside the bold, sections on
one line (``**CROSSWALK:** Yes **REASON:** ...``), a free-text preamble, or a
parenthetical after the label. Anything unrecognisable becomes a value with
label ``Unparseable`` rather than an exception.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass

YES, NO, UNPARSEABLE = "Yes", "No", "Unparseable"
STRICT, LENIENT = "strict", "lenient"
EXCLUDED = "excluded"

SECTIONS = {
    "POSITIVE SIGNS": "positive_signs",
    "NEGATIVE SIGNS": "negative_signs",
    "RISKS": "risks",
    "CROSSWALK": "crosswalk",
    "REASON": "reason",
}

_BOLD_OPEN = r"(?:\*\*|__|\\textbf\{)"
_BOLD_CLOSE = r"(?:\*\*|__|\})"
_NAME = r"(?<![A-Za-z])(?P<name>positive\s+signs?|negative\s+signs?|risks?|crosswalk|reason)"
_HEADER = re.compile(
    rf"(?P<open>{_BOLD_OPEN})?[ \t]*{_NAME}[ \t]*"
    rf"(?:(?P<c1>[:：])[ \t]*(?P<close1>{_BOLD_CLOSE})?|(?P<close2>{_BOLD_CLOSE})[ \t]*(?P<c2>[:：])?)",
    re.IGNORECASE,
)
# what may precede a header on its own line: indentation, bullets, numbering, headings
_LINE_LEAD = re.compile(r"(?:^|\n)[ \t]*(?:[-*+>#]+[ \t]*|\d+[.)][ \t]*)*$")
_LABEL = re.compile(r"^[\s*_\"'`]*(yes|no)\b", re.IGNORECASE)


@dataclass(frozen=True)
class Verdict:
    label: str
    positive_signs: str
    negative_signs: str
    risks: str
    reason: str
    raw: str
    diagnostic: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        return cls(**d)

    def to_text(self) -> str:
        """Canonical sectioned rendering (not the raw model text)."""
        crosswalk = self.label if self.label in (YES, NO) else ""
        return (
            f"POSITIVE SIGNS: {self.positive_signs}\n\n"
            f"NEGATIVE SIGNS: {self.negative_signs}\n\n"
            f"RISKS: {self.risks}\n\n"
            f"CROSSWALK: {crosswalk}\n"
            f"REASON: {self.reason}\n"
        )


def _canonical(name: str) -> str:
    name = re.sub(r"\s+", " ", name.upper())
    if name.startswith("POSITIVE"):
        return "POSITIVE SIGNS"
    if name.startswith("NEGATIVE"):
        return "NEGATIVE SIGNS"
    if name.startswith("RISK"):
        return "RISKS"
    return name


def _headers(text: str):
    for m in _HEADER.finditer(text):
        has_colon = bool(m.group("c1") or m.group("c2"))
        bold = bool(m.group("open")) and bool(m.group("close1") or m.group("close2"))
        if not (has_colon or bold):
            continue
        if m.group("close2") and not m.group("open"):
            continue
        at_line_start = _LINE_LEAD.search(text, 0, m.start()) is not None
        shouted = m.group("name").isupper()
        if bold or at_line_start or shouted:
            yield m, _canonical(m.group("name"))


def _clean(s: str) -> str:
    s = s.strip()
    # a bold marker left dangling from an inline layout
    s = re.sub(r"^(\*\*|__)\s*", "", s)
    s = re.sub(r"\s*(\*\*|__)$", "", s)
    return s.strip()


def parse_response(text: str | bytes) -> Verdict:
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    elif not isinstance(text, str):
        text = str(text)

    found = list(_headers(text))
    sections: dict[str, str] = {}
    for k, (m, name) in enumerate(found):
        end = found[k + 1][0].start() if k + 1 < len(found) else len(text)
        sections.setdefault(name, _clean(text[m.end() : end]))

    fields = {attr: sections.get(name, "") for name, attr in SECTIONS.items() if attr != "crosswalk"}
    if "CROSSWALK" not in sections:
        return Verdict(UNPARSEABLE, raw=text, diagnostic="no CROSSWALK line", **fields)
    value = sections["CROSSWALK"]
    m = _LABEL.match(value)
    if m is None:
        snippet = value.splitlines()[0][:60] if value else ""
        return Verdict(
            UNPARSEABLE, raw=text, diagnostic=f"CROSSWALK value is not yes/no: {snippet!r}", **fields
        )
    label = YES if m.group(1).lower() == "yes" else NO
    return Verdict(label, raw=text, **fields)


def to_prediction(v: Verdict, policy: str = LENIENT) -> str:
    if policy not in (STRICT, LENIENT):
        raise ValueError(f"unknown policy {policy!r}")
    if v.label == YES:
        return "crosswalk"
    if v.label == NO:
        return "not-crosswalk"
    return EXCLUDED if policy == STRICT else "not-crosswalk"
