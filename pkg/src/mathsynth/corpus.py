"""Loading, normalizing, and persisting source problem corpora.

Seven public dataset layouts are supported; each reader adapts one layout to
the common SourceProblem shape and rejects records it cannot adapt, with a
reason, so that loaded + rejected always equals the input record count.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Optional

from .errors import LoadError
from .numform import decimal_str, parse_number_text

log = logging.getLogger(__name__)


class Source(Enum):
    AQUA_RAT = "aqua_rat"
    GSM8K = "gsm8k"
    MATH = "math"
    NUMGLUE = "numglue"
    MATHQA = "mathqa"
    THEOREMQA = "theoremqa"
    DEEPMIND_MATH = "deepmind_math"


# Row order used by every stats table.
TABLE_ORDER = (
    Source.AQUA_RAT,
    Source.GSM8K,
    Source.MATH,
    Source.NUMGLUE,
    Source.MATHQA,
    Source.THEOREMQA,
    Source.DEEPMIND_MATH,
)

# Sources whose answers are picks from a labeled option list.
CHOICE_SOURCES = frozenset({Source.AQUA_RAT, Source.MATHQA})


class AnswerKind(Enum):
    NUMERIC = "numeric"
    CHOICE = "choice"
    TEXT = "text"


@dataclass(frozen=True)
class GroundTruthAnswer:
    """A normalized answer: exactly one of the three value fields is set."""

    kind: AnswerKind
    raw: str
    numeric_value: Optional[Fraction] = None
    choice_label: Optional[str] = None
    text_value: Optional[str] = None

    def __post_init__(self):
        populated = [
            v for v in (self.numeric_value, self.choice_label, self.text_value) if v is not None
        ]
        if len(populated) != 1:
            raise ValueError("exactly one answer value must be populated")
        expected = {
            AnswerKind.NUMERIC: self.numeric_value,
            AnswerKind.CHOICE: self.choice_label,
            AnswerKind.TEXT: self.text_value,
        }[self.kind]
        if expected is None:
            raise ValueError(f"populated value does not match kind {self.kind}")

    @property
    def canonical_raw(self) -> str:
        """Canonical text form; normalizing it again yields the same values."""
        if self.kind is AnswerKind.NUMERIC:
            return decimal_str(self.numeric_value)
        if self.kind is AnswerKind.CHOICE:
            return self.choice_label
        return self.text_value


@dataclass(frozen=True)
class SourceProblem:
    id: str
    source: Source
    question: str
    answer: GroundTruthAnswer
    choices: Optional[tuple[str, ...]] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.question.strip():
            raise ValueError(f"{self.id}: empty question")
        if self.answer.kind is AnswerKind.CHOICE and not self.choices:
            raise ValueError(f"{self.id}: choice answer without an option list")


_CHOICE_LABEL_RE = re.compile(r"\(?\s*([A-Ea-e])\s*\)?\.?")
_CURRENCY = "$€£"


def normalize_answer(raw: str, source: Optional[Source] = None) -> GroundTruthAnswer:
    """Classify an answer string as NUMERIC, CHOICE, or TEXT.

    "$1,200" becomes NUMERIC 1200; a bare letter from a multiple-choice source
    becomes CHOICE; anything non-numeric ("\\frac{1}{2}") stays TEXT verbatim.
    Raises ValueError for empty input (callers reject the record).
    """
    collapsed = " ".join(raw.split())
    if not collapsed:
        raise ValueError("empty answer")

    if source in CHOICE_SOURCES:
        m = _CHOICE_LABEL_RE.fullmatch(collapsed)
        if m:
            return GroundTruthAnswer(
                kind=AnswerKind.CHOICE, raw=raw, choice_label=m.group(1).upper()
            )

    stripped = collapsed
    while stripped and stripped[0] in _CURRENCY:
        stripped = stripped[1:].strip()
    stripped = stripped.rstrip(".").strip()
    percent = stripped.endswith("%")
    if percent:
        stripped = stripped[:-1].strip()
    try:
        value = parse_number_text(stripped)
        return GroundTruthAnswer(kind=AnswerKind.NUMERIC, raw=raw, numeric_value=value)
    except ValueError:
        pass

    return GroundTruthAnswer(kind=AnswerKind.TEXT, raw=raw, text_value=collapsed)


class RejectsLog:
    """Append-safe reject sink shared by concurrent loaders.

    Each entry is one JSON line {index, reason, snippet}; entries are also
    kept in memory for totality accounting.
    """

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path else None
        self.entries: list[dict] = []
        self._lock = threading.Lock()
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def add(self, index: int, reason: str, snippet: str = ""):
        entry = {"index": index, "reason": reason, "snippet": snippet[:200]}
        with self._lock:
            self.entries.append(entry)
            if self.path:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
                    fh.flush()

    def __len__(self):
        return len(self.entries)


# --- per-source record adapters -------------------------------------------
#
# Each adapter takes one raw record (dict, or str for line-oriented formats)
# and returns (question, answer, choices, meta). ValueError/KeyError mean
# "reject this record".


def _require(record: dict, *keys: str):
    for key in keys:
        if key in record:
            return record[key]
    raise KeyError(f"missing key (any of {keys})")


def _adapt_aqua(record: dict):
    question = _require(record, "question")
    options = tuple(_require(record, "options"))
    label = str(_require(record, "correct")).strip()
    answer = normalize_answer(label, Source.AQUA_RAT)
    return question, answer, options, {}


_GSM8K_FINAL_RE = re.compile(r"####\s*(.+?)\s*$", re.DOTALL)


def _adapt_gsm8k(record: dict):
    question = _require(record, "question")
    solution = str(_require(record, "answer"))
    m = _GSM8K_FINAL_RE.search(solution)
    if not m:
        raise ValueError("MISSING_ANSWER_MARKER")
    answer = normalize_answer(m.group(1), Source.GSM8K)
    return question, answer, None, {}


def _boxed_content(solution: str) -> str:
    """Extract the last \\boxed{...} argument, matching nested braces."""
    start = solution.rfind("\\boxed{")
    if start < 0:
        raise ValueError("MISSING_BOXED_ANSWER")
    i = start + len("\\boxed{")
    depth = 1
    out = []
    while i < len(solution):
        ch = solution[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return "".join(out)
        out.append(ch)
        i += 1
    raise ValueError("UNTERMINATED_BOXED_ANSWER")


def _adapt_math(record: dict):
    question = _require(record, "problem", "question")
    solution = str(_require(record, "solution"))
    answer = normalize_answer(_boxed_content(solution), Source.MATH)
    meta = {k: record[k] for k in ("level", "type") if k in record}
    return question, answer, None, meta


def _adapt_numglue(record: dict):
    question = _require(record, "question", "statement")
    answer_text = _require(record, "answer", "output")
    answer = normalize_answer(str(answer_text), Source.NUMGLUE)
    meta = {k: record[k] for k in ("type",) if k in record}
    return question, answer, None, meta


_MATHQA_OPTION_SPLIT = re.compile(r"\s*,\s*(?=[a-eA-E]\s*\))")


def _adapt_mathqa(record: dict):
    question = _require(record, "Problem", "problem")
    options_raw = _require(record, "options")
    if isinstance(options_raw, str):
        options = tuple(part.strip() for part in _MATHQA_OPTION_SPLIT.split(options_raw.strip()))
    else:
        options = tuple(options_raw)
    if not options:
        raise ValueError("EMPTY_OPTIONS")
    label = str(_require(record, "correct")).strip()
    answer = normalize_answer(label, Source.MATHQA)
    return question, answer, options, {}


def _adapt_theoremqa(record: dict):
    question = _require(record, "Question", "question")
    answer_field = _require(record, "Answer", "answer")
    if isinstance(answer_field, bool):
        answer_text = str(answer_field)
    elif isinstance(answer_field, (list, tuple)):
        answer_text = ", ".join(str(v) for v in answer_field)
    else:
        answer_text = str(answer_field)
    answer = normalize_answer(answer_text, Source.THEOREMQA)
    meta = {k: record[k] for k in ("Answer_type", "answer_type") if k in record}
    return question, answer, None, meta


def _adapt_deepmind(record: dict):
    # Line-pair format is turned into {"question", "answer"} by the reader.
    question = _require(record, "question")
    answer = normalize_answer(str(_require(record, "answer")), Source.DEEPMIND_MATH)
    return question, answer, None, {}


_ADAPTERS: dict[Source, Callable] = {
    Source.AQUA_RAT: _adapt_aqua,
    Source.GSM8K: _adapt_gsm8k,
    Source.MATH: _adapt_math,
    Source.NUMGLUE: _adapt_numglue,
    Source.MATHQA: _adapt_mathqa,
    Source.THEOREMQA: _adapt_theoremqa,
    Source.DEEPMIND_MATH: _adapt_deepmind,
}


def _iter_records(path: Path, source: Source) -> list:
    """Read the file into raw record dicts without interpreting fields."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise LoadError("UNREADABLE_FILE", str(exc), path=str(path)) from exc
    except UnicodeDecodeError as exc:
        raise LoadError("UNREADABLE_FILE", f"not UTF-8: {exc}", path=str(path)) from exc

    if source is Source.DEEPMIND_MATH and path.suffix == ".txt":
        lines = [ln for ln in text.splitlines()]
        while lines and not lines[-1].strip():
            lines.pop()
        if len(lines) % 2 != 0:
            raise LoadError(
                "SCHEMA_MISMATCH", "question/answer line pairs expected", path=str(path)
            )
        return [
            {"question": lines[i], "answer": lines[i + 1]} for i in range(0, len(lines), 2)
        ]

    stripped = text.strip()
    if not stripped:
        return []
    if stripped.startswith("["):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise LoadError("SCHEMA_MISMATCH", f"bad JSON: {exc}", path=str(path)) from exc
        if not isinstance(data, list):
            raise LoadError("SCHEMA_MISMATCH", "top-level JSON array expected", path=str(path))
        return data
    records = []
    for lineno, line in enumerate(stripped.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise LoadError(
                "SCHEMA_MISMATCH", f"bad JSON on line {lineno}: {exc}", path=str(path)
            ) from exc
    return records


def load_dataset(
    path,
    source: Source,
    rejects: Optional[RejectsLog] = None,
    id_prefix: Optional[str] = None,
) -> list[SourceProblem]:
    """Load one source file; every input record is returned or rejected.

    Raises LoadError(UNREADABLE_FILE | SCHEMA_MISMATCH | EMPTY_DATASET) for
    file-level failures; per-record failures go to the rejects log.
    """
    path = Path(path)
    records = _iter_records(path, source)
    if not records:
        raise LoadError("EMPTY_DATASET", "no records found", path=str(path))

    adapter = _ADAPTERS[source]
    prefix = id_prefix if id_prefix is not None else source.value
    rejects = rejects if rejects is not None else RejectsLog()
    problems = []
    for index, record in enumerate(records):
        if not isinstance(record, dict):
            rejects.add(index, "NOT_AN_OBJECT", repr(record))
            continue
        try:
            question, answer, choices, meta = adapter(record)
            if not isinstance(question, str):
                raise ValueError("QUESTION_NOT_TEXT")
            problems.append(
                SourceProblem(
                    id=f"{prefix}:{index}",
                    source=source,
                    question=question,
                    answer=answer,
                    choices=choices,
                    meta=meta,
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            rejects.add(index, str(exc) or type(exc).__name__, json.dumps(record)[:200])

    if not problems:
        raise LoadError(
            "SCHEMA_MISMATCH",
            f"no record matched the {source.value} layout",
            path=str(path),
            rejected=len(rejects),
        )
    log.info("loaded %d problems, rejected %d from %s", len(problems), len(rejects), path)
    return problems


def corpus_stats(problems: Iterable[SourceProblem]) -> dict:
    """Per-source counts in fixed table order, plus the total."""
    counts = {src: 0 for src in TABLE_ORDER}
    total = 0
    for problem in problems:
        counts[problem.source] += 1
        total += 1
    return {"per_source": {src.value: counts[src] for src in TABLE_ORDER}, "total": total}


# --- normalized on-disk form ------------------------------------------------


def answer_to_json(answer: GroundTruthAnswer) -> dict:
    if answer.kind is AnswerKind.NUMERIC:
        value = decimal_str(answer.numeric_value)
    elif answer.kind is AnswerKind.CHOICE:
        value = answer.choice_label
    else:
        value = answer.text_value
    return {"kind": answer.kind.value, "raw": answer.raw, "value": value}


def answer_from_json(data: dict) -> GroundTruthAnswer:
    kind = AnswerKind(data["kind"])
    raw = data["raw"]
    value = data["value"]
    if kind is AnswerKind.NUMERIC:
        return GroundTruthAnswer(kind=kind, raw=raw, numeric_value=parse_number_text(value))
    if kind is AnswerKind.CHOICE:
        return GroundTruthAnswer(kind=kind, raw=raw, choice_label=value)
    return GroundTruthAnswer(kind=kind, raw=raw, text_value=value)


def problem_to_json(problem: SourceProblem) -> dict:
    answer = answer_to_json(problem.answer)
    return {
        "id": problem.id,
        "source": problem.source.value,
        "question": problem.question,
        "answer_kind": answer["kind"],
        "answer_raw": answer["raw"],
        "answer_value": answer["value"],
        "choices": list(problem.choices) if problem.choices else None,
        "meta": problem.meta,
    }


def problem_from_json(data: dict) -> SourceProblem:
    answer = answer_from_json(
        {"kind": data["answer_kind"], "raw": data["answer_raw"], "value": data["answer_value"]}
    )
    return SourceProblem(
        id=data["id"],
        source=Source(data["source"]),
        question=data["question"],
        answer=answer,
        choices=tuple(data["choices"]) if data.get("choices") else None,
        meta=data.get("meta") or {},
    )


def sample_answer(value_text: str) -> GroundTruthAnswer:
    """Ground truth derived from a program's printed output line."""
    return GroundTruthAnswer(
        kind=AnswerKind.NUMERIC, raw=value_text, numeric_value=parse_number_text(value_text)
    )


def write_corpus(problems: Iterable[SourceProblem], path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for problem in problems:
            fh.write(json.dumps(problem_to_json(problem), ensure_ascii=False) + "\n")


def read_corpus(path) -> list[SourceProblem]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise LoadError("UNREADABLE_FILE", str(exc), path=str(path)) from exc
    problems = []
    for line in text.splitlines():
        if line.strip():
            problems.append(problem_from_json(json.loads(line)))
    if not problems:
        raise LoadError("EMPTY_DATASET", "no records found", path=str(path))
    return problems
