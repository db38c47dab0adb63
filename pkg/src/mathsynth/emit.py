"""Final training-data emission and per-source yield statistics."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .corpus import TABLE_ORDER, GroundTruthAnswer, Source, answer_from_json, answer_to_json
from .errors import LoadError
from .numform import percent_display
from .synthesis import SynthesisRecord, SynthesisStatus
from .template import InstantiatedSample, full_selector, instantiate, strip_docstring

PREAMBLE = (
    "Solve the following math problem by writing a Python program that prints "
    "only the final answer."
)


@dataclass(frozen=True)
class SftRecord:
    instruction: str
    output: str
    expected: Optional[GroundTruthAnswer]
    provenance: dict


def _sample_to_sft(sample: InstantiatedSample, source: Source, variant: int) -> SftRecord:
    provenance = dict(sample.provenance)
    provenance.update(
        {
            "source": source.value,
            "variant": variant,
            "retained": list(sample.retained),
        }
    )
    return SftRecord(
        instruction=PREAMBLE + "\n\n" + sample.question,
        output=sample.program,
        expected=sample.expected_answer,
        provenance=provenance,
    )


def emit_sft(
    records: Sequence[SynthesisRecord],
    augmented: Sequence[InstantiatedSample] = (),
    include_symbolic: bool = False,
    strip_docstrings: bool = False,
) -> list[SftRecord]:
    """Assemble the final instruction/output pairs.

    Each verified record contributes its original-values sample as variant 0,
    followed by its augmented samples in their generated order. Symbolic
    (partial) variants are dropped unless requested. Output order follows
    the input record order, so reruns are byte-stable.
    """
    by_problem: dict[str, list[InstantiatedSample]] = {}
    known = {record.problem_id for record in records}
    for sample in augmented:
        problem_id = sample.provenance.get("problem_id", "")
        if problem_id not in known:
            raise LoadError(
                "UNKNOWN_PROBLEM_ID", f"augmented sample for unknown problem {problem_id!r}"
            )
        by_problem.setdefault(problem_id, []).append(sample)

    out: list[SftRecord] = []
    for record in records:
        if record.status is not SynthesisStatus.VERIFIED:
            continue
        original = instantiate(
            record.template,
            record.masked,
            record.masked.original_assignment(),
            full_selector(record.template.parameters),
            record.problem_id,
        )
        original = dataclasses.replace(original, expected_answer=record.answer)
        variants = [original] + by_problem.get(record.problem_id, [])
        ordinal = 0
        for sample in variants:
            if not sample.is_full and not include_symbolic:
                continue
            if strip_docstrings:
                sample = strip_docstring(sample)
            out.append(_sample_to_sft(sample, record.source, ordinal))
            ordinal += 1
    if not out:
        raise LoadError("EMPTY_INPUT", "no verified records to emit")
    return out


def sft_to_json(record: SftRecord) -> dict:
    return {
        "instruction": record.instruction,
        "output": record.output,
        "expected": answer_to_json(record.expected) if record.expected else None,
        "provenance": record.provenance,
    }


def sft_from_json(data: dict) -> SftRecord:
    return SftRecord(
        instruction=data["instruction"],
        output=data["output"],
        expected=answer_from_json(data["expected"]) if data.get("expected") else None,
        provenance=data.get("provenance", {}),
    )


def sft_to_sample(record: SftRecord) -> InstantiatedSample:
    """Rebuild an executable sample from an emitted record for re-checking."""
    provenance = record.provenance
    question = record.instruction
    prefix = PREAMBLE + "\n\n"
    if question.startswith(prefix):
        question = question[len(prefix) :]
    return InstantiatedSample(
        question=question,
        program=record.output,
        selector=tuple(provenance.get("selector", ())),
        retained=tuple(provenance.get("retained", ())),
        expected_answer=record.expected,
        provenance={
            "problem_id": provenance.get("problem_id", ""),
            "template_digest": provenance.get("template_digest", ""),
            "selector": list(provenance.get("selector", ())),
        },
    )


def write_sft(records: Sequence[SftRecord], path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(sft_to_json(record), ensure_ascii=False) + "\n")


def read_sft(path) -> list[SftRecord]:
    text = Path(path).read_text(encoding="utf-8")
    return [sft_from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


# --- yield statistics ---------------------------------------------------------


def compute_rate(samples: int, questions: int) -> str:
    """Verified-template yield as a percentage, half-up at two decimals."""
    if questions <= 0:
        raise LoadError("ZERO_QUESTIONS", "cannot rate a source with no questions")
    return percent_display(samples, questions, 2)


@dataclass(frozen=True)
class StatsRow:
    source: Source
    questions: int
    samples: int
    rate: str


@dataclass(frozen=True)
class StatsTable:
    rows: tuple[StatsRow, ...]
    total_questions: int
    total_samples: int
    total_rate: str

    def to_json(self) -> dict:
        return {
            "per_source": [
                {
                    "source": row.source.value,
                    "questions": row.questions,
                    "samples": row.samples,
                    "rate": row.rate,
                }
                for row in self.rows
            ],
            "total": {
                "questions": self.total_questions,
                "samples": self.total_samples,
                "rate": self.total_rate,
            },
        }


def compute_stats(
    question_counts: Mapping[str, int], records: Sequence[SynthesisRecord]
) -> StatsTable:
    """Per-source verified counts against ingested question counts.

    The denominator is the ingested corpus, so parse failures lower the rate
    rather than silently shrinking the population.
    """
    verified: dict[str, int] = {}
    for record in records:
        if record.status is SynthesisStatus.VERIFIED:
            verified[record.source.value] = verified.get(record.source.value, 0) + 1

    rows = []
    for source in TABLE_ORDER:
        questions = int(question_counts.get(source.value, 0))
        samples = verified.get(source.value, 0)
        if questions == 0 and samples == 0:
            continue
        rows.append(StatsRow(source, questions, samples, compute_rate(samples, questions)))
    total_questions = sum(row.questions for row in rows)
    total_samples = sum(row.samples for row in rows)
    if total_questions == 0:
        raise LoadError("ZERO_QUESTIONS", "no questions in any source")
    return StatsTable(
        rows=tuple(rows),
        total_questions=total_questions,
        total_samples=total_samples,
        total_rate=compute_rate(total_samples, total_questions),
    )


def render_stats(table: StatsTable) -> str:
    headers = ("source", "questions", "samples", "rate%")
    body = [
        (row.source.value, str(row.questions), str(row.samples), row.rate)
        for row in table.rows
    ]
    body.append(
        ("total", str(table.total_questions), str(table.total_samples), table.total_rate)
    )
    widths = [
        max(len(headers[i]), *(len(line[i]) for line in body)) for i in range(len(headers))
    ]
    lines = [
        "  ".join(headers[i].ljust(widths[i]) for i in range(len(headers))).rstrip()
    ]
    for line in body:
        lines.append(
            "  ".join(
                line[i].ljust(widths[i]) if i == 0 else line[i].rjust(widths[i])
                for i in range(len(headers))
            ).rstrip()
        )
    return "\n".join(lines)
