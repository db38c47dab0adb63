"""Number extraction and placeholder masking over question text.

The invariant everything here leans on: rendering a masked question with its
original bound values reproduces the original text byte for byte. That makes
masking reversible and lets the crosscheck compare a model's rewrite against
ground truth without fuzzy matching.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .errors import MaskingError
from .numform import decimal_str, float_literal, parse_number_text


class NumberKind(Enum):
    INT = "int"
    FLOAT = "float"
    PERCENT = "percent"
    FRACTION = "fraction"


@dataclass(frozen=True)
class NumberSpan:
    """One numeral occurrence: text[start:end] == surface, value exact."""

    start: int
    end: int
    surface: str
    value: Fraction
    kind: NumberKind

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad span bounds [{self.start}, {self.end})")
        if self.kind is NumberKind.INT and self.value.denominator != 1:
            raise ValueError(f"INT span with fractional value {self.value}")


@dataclass(frozen=True)
class MaskedQuestion:
    """Template with {name} placeholders plus the ordered original spans."""

    template: str
    bindings: tuple[tuple[str, NumberSpan], ...]

    @property
    def k(self) -> int:
        return len(self.bindings)

    @property
    def synthesizable(self) -> bool:
        """Zero extracted numbers means there is nothing to templatize."""
        return self.k >= 1

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.bindings)

    def original_assignment(self) -> dict[str, Fraction]:
        return {name: span.value for name, span in self.bindings}

    def kinds(self) -> dict[str, NumberKind]:
        return {name: span.kind for name, span in self.bindings}


class _Keep:
    """Sentinel: render the bare placeholder name instead of a value."""

    def __repr__(self):
        return "KEEP"


KEEP = _Keep()

_IDENT_RE = re.compile(r"[A-Za-z_]\w*")
_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_]\w*)\}")

_INT_PART = r"\d{1,3}(?:,\d{3})+|\d+"
_NUMBER_SCAN_RE = re.compile(
    rf"(?P<percent>(?:{_INT_PART})(?:\.\d+)?%)"
    rf"|(?P<fraction>\d+/\d+)"
    rf"|(?P<float>(?:{_INT_PART})\.\d+)"
    rf"|(?P<int>{_INT_PART})"
)

# Regions whose digits are structural, not problem quantities.
DEFAULT_SKIP_REGIONS = (
    re.compile(r"\$\$.*?\$\$", re.DOTALL),
    re.compile(r"\\\(.*?\\\)", re.DOTALL),
    re.compile(r"\\\[.*?\\\]", re.DOTALL),
    re.compile(r"```.*?```", re.DOTALL),
    re.compile(r"\$[^$\n]*[\\^_{}][^$\n]*\$"),  # inline math with markup, not "$5"
)

# Numeral shapes that are not quantities (ordinals, clock times).
DEFAULT_SKIP_PATTERNS = (
    re.compile(r"\d+(?:st|nd|rd|th)\b"),
    re.compile(r"\d{1,2}:\d{2}(?::\d{2})?\b"),
)


def _skip_spans(text: str, regions, patterns) -> list[tuple[int, int]]:
    spans = []
    for rx in tuple(regions) + tuple(patterns):
        for m in rx.finditer(text):
            spans.append(m.span())
    return spans


def classify_literal(literal: str) -> tuple[Fraction, NumberKind]:
    """Parse a surface literal to (exact value, kind). Raises ValueError."""
    s = literal.strip()
    if s.endswith("%"):
        return parse_number_text(s[:-1]), NumberKind.PERCENT
    if "/" in s:
        return parse_number_text(s), NumberKind.FRACTION
    if "." in s or "e" in s.lower():
        return parse_number_text(s), NumberKind.FLOAT
    return parse_number_text(s), NumberKind.INT


def format_value(value: Fraction, kind: NumberKind) -> str:
    """Canonical question-text form of a value for the given kind.

    Raises MaskingError(FORMAT_MISMATCH) when the value does not fit the kind
    (e.g. a non-integer bound to an INT slot).
    """
    value = Fraction(value)
    if kind is NumberKind.INT:
        if value.denominator != 1:
            raise MaskingError("FORMAT_MISMATCH", f"non-integer {value} for INT slot")
        return str(value.numerator)
    if kind is NumberKind.FLOAT:
        return float_literal(value)
    if kind is NumberKind.PERCENT:
        s = decimal_str(value)
        if "/" in s:
            raise MaskingError("FORMAT_MISMATCH", f"non-decimal {value} for PERCENT slot")
        return s + "%"
    return f"{value.numerator}/{value.denominator}"


def extract_numbers(
    text: str,
    skip_regions: Sequence = DEFAULT_SKIP_REGIONS,
    skip_patterns: Sequence = DEFAULT_SKIP_PATTERNS,
) -> list[NumberSpan]:
    """Find quantity numerals: ints, decimals, percents, bare fractions.

    Digits glued to letters ("2nd", "16kg"), numerals inside math markup, and
    shapes on the skip list are left alone. Spans are returned in text order
    and never overlap.
    """
    skips = _skip_spans(text, skip_regions, skip_patterns)
    spans = []
    for m in _NUMBER_SCAN_RE.finditer(text):
        start, end = m.span()
        if any(start < se and ss < end for ss, se in skips):
            continue
        prev = text[start - 1] if start > 0 else ""
        nxt = text[end] if end < len(text) else ""
        if prev.isalnum() or prev in "_./":
            continue
        if nxt.isalpha() or nxt in "_/":
            continue
        surface = m.group()
        if m.lastgroup == "percent":
            value, kind = parse_number_text(surface[:-1]), NumberKind.PERCENT
        elif m.lastgroup == "fraction":
            value, kind = parse_number_text(surface), NumberKind.FRACTION
        elif m.lastgroup == "float":
            value, kind = parse_number_text(surface), NumberKind.FLOAT
        else:
            value, kind = parse_number_text(surface), NumberKind.INT
        spans.append(NumberSpan(start=start, end=end, surface=surface, value=value, kind=kind))
    return spans


def mask_question(
    text: str, spans: Sequence[NumberSpan], names: Optional[Sequence[str]] = None
) -> MaskedQuestion:
    """Replace each span with a {name} placeholder.

    Names default to positional n1, n2, ...; callers may pass semantic names.
    Raises MaskingError(OVERLAPPING_SPANS) for geometric violations and
    MaskingError(NAME_COLLISION) for duplicate/invalid names or placeholders
    that end up ambiguous in the template (e.g. the text already contained
    the literal "{n1}").
    """
    ordered = sorted(spans, key=lambda s: s.start)
    last_end = 0
    for span in ordered:
        if span.start < last_end or span.end > len(text):
            raise MaskingError("OVERLAPPING_SPANS", f"span [{span.start}, {span.end})")
        if text[span.start : span.end] != span.surface:
            raise MaskingError(
                "OVERLAPPING_SPANS",
                f"surface mismatch at {span.start}: "
                f"{text[span.start:span.end]!r} != {span.surface!r}",
            )
        last_end = span.end

    if names is None:
        names = [f"n{i + 1}" for i in range(len(ordered))]
    names = list(names)
    if len(names) != len(ordered):
        raise MaskingError("NAME_COLLISION", "name count does not match span count")
    seen = set()
    for name in names:
        if not _IDENT_RE.fullmatch(name) or name in seen:
            raise MaskingError("NAME_COLLISION", f"bad or duplicate name {name!r}")
        seen.add(name)

    parts = []
    pos = 0
    for name, span in zip(names, ordered):
        parts.append(text[pos : span.start])
        parts.append("{" + name + "}")
        pos = span.end
    parts.append(text[pos:])
    template = "".join(parts)

    for name in names:
        if template.count("{" + name + "}") != 1:
            raise MaskingError("NAME_COLLISION", f"placeholder {{{name}}} is ambiguous")

    return MaskedQuestion(template=template, bindings=tuple(zip(names, ordered)))


def render_question(masked: MaskedQuestion, assignment: Mapping) -> str:
    """Substitute values back into the template.

    A value equal to the original renders as the original surface (exact
    round-trip); new values render canonically per kind; KEEP renders the
    bare placeholder name. Raises MaskingError(MISSING_ASSIGNMENT) or
    MaskingError(FORMAT_MISMATCH).
    """
    by_name = dict(masked.bindings)
    replacements = {}
    for name, span in masked.bindings:
        if name not in assignment:
            raise MaskingError("MISSING_ASSIGNMENT", f"no value for {name}")
        value = assignment[name]
        if value is KEEP:
            replacements[name] = name
            continue
        value = Fraction(value) if not isinstance(value, Fraction) else value
        if value == span.value:
            replacements[name] = span.surface
        else:
            replacements[name] = format_value(value, span.kind)

    def _sub(m: re.Match) -> str:
        name = m.group(1)
        return replacements[name] if name in by_name else m.group(0)

    return _PLACEHOLDER_RE.sub(_sub, masked.template)


def masked_from_literals(template: str, literals: Mapping[str, str]) -> MaskedQuestion:
    """Build a MaskedQuestion from a rewritten question and its literal map.

    This is how model-authored (General Question, Extracted Numbers) pairs
    enter the pipeline: spans are positioned where the literals land when the
    template is rendered, so the round-trip invariant holds by construction.
    """
    occurrences = [m for m in _PLACEHOLDER_RE.finditer(template) if m.group(1) in literals]
    found = [m.group(1) for m in occurrences]
    if set(found) != set(literals):
        missing = sorted(set(literals) - set(found))
        raise MaskingError("NAME_COLLISION", f"placeholders never used: {missing}")
    if len(found) != len(set(found)):
        raise MaskingError("NAME_COLLISION", "placeholder used more than once")

    out = []
    pos = 0
    bindings = []
    rendered_len = 0
    for m in occurrences:
        name = m.group(1)
        literal = str(literals[name]).strip()
        value, kind = classify_literal(literal)
        out.append(template[pos : m.start()])
        rendered_len += m.start() - pos
        bindings.append(
            (
                name,
                NumberSpan(
                    start=rendered_len,
                    end=rendered_len + len(literal),
                    surface=literal,
                    value=value,
                    kind=kind,
                ),
            )
        )
        out.append(literal)
        rendered_len += len(literal)
        pos = m.end()
    out.append(template[pos:])
    return MaskedQuestion(template=template, bindings=tuple(bindings))


@dataclass
class CrosscheckReport:
    passed: bool
    reason: Optional[str] = None
    warnings: list = field(default_factory=list)
    masked: Optional[MaskedQuestion] = None


def crosscheck_masking(
    local: MaskedQuestion, general_question: str, numbers: Mapping[str, str]
) -> CrosscheckReport:
    """Check a model's rewrite against the locally derived masking.

    PASS iff rendering the model's general question with its own extracted
    numbers reproduces the original text up to whitespace. Value-set
    differences are warnings (MISSED_CONSTANT / EXTRA_CONSTANT), not failures:
    the model's masking is authoritative when the round-trip holds.
    """
    original = render_question(local, local.original_assignment())
    try:
        llm_masked = masked_from_literals(general_question, numbers)
    except (MaskingError, ValueError) as exc:
        return CrosscheckReport(passed=False, reason=f"ROUNDTRIP_MISMATCH: {exc}")
    rendered = render_question(llm_masked, llm_masked.original_assignment())
    if " ".join(rendered.split()) != " ".join(original.split()):
        return CrosscheckReport(
            passed=False, reason="ROUNDTRIP_MISMATCH", masked=llm_masked
        )

    warnings = []
    local_values = sorted(span.value for _, span in local.bindings)
    llm_values = sorted(span.value for _, span in llm_masked.bindings)
    for value in local_values:
        if value not in llm_values:
            warnings.append(f"MISSED_CONSTANT: {decimal_str(value)}")
    for value in llm_values:
        if value not in local_values:
            warnings.append(f"EXTRA_CONSTANT: {decimal_str(value)}")
    return CrosscheckReport(passed=True, warnings=warnings, masked=llm_masked)


# --- serialization -----------------------------------------------------------


def masked_to_json(masked: MaskedQuestion) -> dict:
    return {
        "template": masked.template,
        "bindings": [
            {
                "name": name,
                "start": span.start,
                "end": span.end,
                "surface": span.surface,
                "value": str(span.value),
                "kind": span.kind.value,
            }
            for name, span in masked.bindings
        ],
    }


def masked_from_json(data: dict) -> MaskedQuestion:
    bindings = tuple(
        (
            b["name"],
            NumberSpan(
                start=b["start"],
                end=b["end"],
                surface=b["surface"],
                value=Fraction(b["value"]),
                kind=NumberKind(b["kind"]),
            ),
        )
        for b in data["bindings"]
    )
    return MaskedQuestion(template=data["template"], bindings=bindings)
