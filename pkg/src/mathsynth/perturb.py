"""Number-perturbed evaluation sets and logical-consistency scoring.

Each verified template yields a group: the original question plus variants
that differ only in their numbers, with expected answers computed by the
verified program. A model is logically consistent on a group when it answers
every variant correctly, not just one.
"""

from __future__ import annotations

import dataclasses
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .corpus import GroundTruthAnswer, answer_from_json, answer_to_json, sample_answer
from .errors import ConstraintError, LoadError
from .numform import percent_display
from .scale import derive_seed, return_contract, sample_assignment, value_meets_contract
from .synthesis import SynthesisRecord, SynthesisStatus, record_constraints
from .template import full_selector, instantiate
from .verify import ComparisonPolicy, ExecStatus, ExecutionLimits, compare_answers, execute

REVIEW_DECISIONS = ("approve", "reject")


class ReviewStatus(Enum):
    AUTO = "auto"
    HUMAN_APPROVED = "human_approved"
    HUMAN_REJECTED = "human_rejected"


@dataclass(frozen=True)
class Variant:
    question: str
    expected: GroundTruthAnswer


@dataclass(frozen=True)
class PerturbedGroup:
    group_id: str
    variants: tuple[Variant, ...]
    review_status: ReviewStatus = ReviewStatus.AUTO
    note: str = ""


@dataclass
class PlusSetReport:
    groups_built: int = 0
    groups_incomplete: int = 0
    records_skipped: int = 0

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def build_plus_set(
    records: Sequence[SynthesisRecord],
    n_new: int,
    seed: int,
    runner: Optional[str] = None,
    limits: ExecutionLimits = ExecutionLimits(),
    max_attempts: int = 200,
) -> tuple[list[PerturbedGroup], PlusSetReport]:
    """Build perturbed groups of exactly 1 + n_new variants per record.

    Variant 0 is the original question verbatim with its ground-truth answer.
    New variants use distinct constraint-valid assignments whose programs run
    clean and meet the return contract; a record that cannot fill its group
    within max_attempts is dropped entirely, never emitted short.
    """
    if n_new < 1:
        raise ValueError("n_new must be at least 1")
    groups: list[PerturbedGroup] = []
    report = PlusSetReport()
    for record in records:
        if record.status is not SynthesisStatus.VERIFIED:
            report.records_skipped += 1
            continue
        rng = random.Random(derive_seed(seed, record.problem_id))
        template = record.template
        masked = record.masked
        constraints = record_constraints(record)
        contract = return_contract(template)
        selector = full_selector(template.parameters)
        params = template.parameters

        variants = [Variant(record.question, record.answer)]
        original = masked.original_assignment()
        seen = {tuple(original[p] for p in params)}
        attempts = 0
        while len(variants) < n_new + 1 and attempts < max_attempts:
            attempts += 1
            try:
                assignment = sample_assignment(constraints, rng)
            except ConstraintError:
                break
            key = tuple(assignment[p] for p in params)
            if key in seen:
                continue
            seen.add(key)
            sample = instantiate(template, masked, assignment, selector, record.problem_id)
            result = execute(sample.program, limits, runner)
            if result.status is not ExecStatus.OK:
                continue
            try:
                expected = sample_answer(result.value_line)
            except ValueError:
                continue
            if not value_meets_contract(expected.numeric_value, contract):
                continue
            variants.append(Variant(sample.question, expected))
        if len(variants) == n_new + 1:
            groups.append(PerturbedGroup(record.problem_id, tuple(variants)))
            report.groups_built += 1
        else:
            report.groups_incomplete += 1
    return groups, report


def active_groups(groups: Sequence[PerturbedGroup]) -> list[PerturbedGroup]:
    return [g for g in groups if g.review_status is not ReviewStatus.HUMAN_REJECTED]


def apply_review(
    groups: Sequence[PerturbedGroup], decisions: Sequence[dict]
) -> list[PerturbedGroup]:
    """Apply human review decisions; every decision must name a known group."""
    by_id = {g.group_id: g for g in groups}
    updated = dict(by_id)
    for row in decisions:
        group_id = row.get("group_id")
        if group_id not in by_id:
            raise LoadError("UNKNOWN_GROUP_ID", f"review names unknown group {group_id!r}")
        decision = row.get("decision")
        if decision not in REVIEW_DECISIONS:
            raise LoadError(
                "SCHEMA_MISMATCH", f"bad decision {decision!r} for group {group_id!r}"
            )
        status = (
            ReviewStatus.HUMAN_APPROVED if decision == "approve" else ReviewStatus.HUMAN_REJECTED
        )
        updated[group_id] = dataclasses.replace(
            updated[group_id], review_status=status, note=str(row.get("note", ""))
        )
    return [updated[g.group_id] for g in groups]


@dataclass
class ConsistencyReport:
    """x-of-n / y-of-n correctness over perturbed groups.

    any_correct counts groups with at least one variant answered correctly;
    all_correct counts groups with every variant correct. The consistency
    ratio is all_correct over any_correct, shown half-up at one decimal.
    """

    groups_scored: int = 0
    any_correct: int = 0
    all_correct: int = 0
    per_group: dict[str, list[bool]] = field(default_factory=dict)

    @property
    def consistency_ratio(self) -> Optional[Fraction]:
        if self.any_correct == 0:
            return None
        return Fraction(self.all_correct, self.any_correct)

    @property
    def consistency_display(self) -> Optional[str]:
        if self.any_correct == 0:
            return None
        return percent_display(self.all_correct, self.any_correct, 1)

    def to_json(self) -> dict:
        return {
            "groups_scored": self.groups_scored,
            "any_correct": self.any_correct,
            "all_correct": self.all_correct,
            "consistency": self.consistency_display,
        }


def score_consistency(
    groups: Sequence[PerturbedGroup],
    answers: dict[tuple[str, int], str],
    policy: ComparisonPolicy = ComparisonPolicy(),
) -> ConsistencyReport:
    """Score model answers keyed (group_id, variant_index) against a plus set.

    Missing answers count as incorrect; human-rejected groups are excluded.
    """
    report = ConsistencyReport()
    for group in active_groups(groups):
        flags = []
        for index, variant in enumerate(group.variants):
            text = answers.get((group.group_id, index))
            if text is None:
                flags.append(False)
                continue
            ok, _ = compare_answers(text, variant.expected, policy)
            flags.append(ok)
        report.per_group[group.group_id] = flags
        report.groups_scored += 1
        if any(flags):
            report.any_correct += 1
        if all(flags):
            report.all_correct += 1
    return report


# --- file formats ------------------------------------------------------------


def write_groups(groups: Sequence[PerturbedGroup], path):
    """One row per variant; group fields repeat on every row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for group in groups:
            for index, variant in enumerate(group.variants):
                row = {
                    "group_id": group.group_id,
                    "variant_index": index,
                    "question": variant.question,
                    "answer": answer_to_json(variant.expected),
                    "review_status": group.review_status.value,
                    "note": group.note,
                }
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_groups(path) -> list[PerturbedGroup]:
    rows_by_group: dict[str, list[dict]] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line in text.splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        rows_by_group.setdefault(row["group_id"], []).append(row)
    groups = []
    for group_id, rows in rows_by_group.items():
        indices = [row["variant_index"] for row in rows]
        if indices != list(range(len(rows))):
            raise LoadError(
                "SCHEMA_MISMATCH", f"group {group_id!r} variant indices {indices} not 0..n"
            )
        statuses = {row["review_status"] for row in rows}
        notes = {row.get("note", "") for row in rows}
        if len(statuses) != 1 or len(notes) != 1:
            raise LoadError("SCHEMA_MISMATCH", f"group {group_id!r} rows disagree")
        variants = tuple(
            Variant(row["question"], answer_from_json(row["answer"])) for row in rows
        )
        groups.append(
            PerturbedGroup(
                group_id,
                variants,
                ReviewStatus(rows[0]["review_status"]),
                rows[0].get("note", ""),
            )
        )
    return groups


def write_answers(answers: dict[tuple[str, int], str], path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for (group_id, index), text in answers.items():
            row = {"group_id": group_id, "variant_index": index, "answer_text": text}
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_answers(path) -> dict[tuple[str, int], str]:
    answers: dict[tuple[str, int], str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line in text.splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        answers[(row["group_id"], int(row["variant_index"]))] = str(row["answer_text"])
    return answers


def read_review(path) -> list[dict]:
    text = Path(path).read_text(encoding="utf-8")
    return [json.loads(line) for line in text.splitlines() if line.strip()]
