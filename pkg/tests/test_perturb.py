"""Perturbed evaluation groups, review flow, and consistency scoring."""

from fractions import Fraction

import pytest

from mathsynth.corpus import Source, normalize_answer, sample_answer
from mathsynth.errors import LoadError
from mathsynth.masking import extract_numbers, mask_question
from mathsynth.perturb import (
    PerturbedGroup,
    ReviewStatus,
    Variant,
    active_groups,
    apply_review,
    build_plus_set,
    read_answers,
    read_groups,
    read_review,
    score_consistency,
    write_answers,
    write_groups,
)
from mathsynth.synthesis import SynthesisRecord, SynthesisStatus
from mathsynth.template import validate_template

PROGRAM_SRC = '''def solution(n1, n2):
    """Count all the apples.

    :param n1: number of bags
    :param n2: apples in each bag
    :return: total number of apples, an integer
    """
    # Each bag holds n2 apples.
    total = n1 * n2
    return total
'''


def make_record(problem_id="p1", a=3, b=4, bounds="[1, 60]", status=SynthesisStatus.VERIFIED,
                body=None):
    question = f"Tom has {a} bags with {b} apples in each bag. How many apples in total?"
    masked = mask_question(question, extract_numbers(question))
    source = PROGRAM_SRC if body is None else PROGRAM_SRC.replace(
        "total = n1 * n2", body
    )
    return SynthesisRecord(
        problem_id=problem_id,
        source=Source.GSM8K,
        question=question,
        answer=normalize_answer(str(a * b)),
        choices=None,
        status=status,
        masked=masked,
        template=validate_template(source),
        numbers={"n1": str(a), "n2": str(b)},
        constraints_text=f"n1: int in {bounds}\nn2: int in {bounds}",
    )


class TestBuildPlusSet:
    def test_group_shape(self, stub_runner, fast_limits):
        records = [make_record(f"p{i}", a=2 + i, b=5 + i) for i in range(3)]
        groups, report = build_plus_set(
            records, n_new=2, seed=7, runner=stub_runner, limits=fast_limits
        )
        assert report.groups_built == 3
        assert report.groups_incomplete == 0
        assert [g.group_id for g in groups] == ["p0", "p1", "p2"]
        assert all(len(g.variants) == 3 for g in groups)
        assert all(g.review_status is ReviewStatus.AUTO for g in groups)

    def test_variant_zero_is_original_verbatim(self, stub_runner, fast_limits):
        record = make_record()
        groups, _ = build_plus_set(
            [record], n_new=2, seed=7, runner=stub_runner, limits=fast_limits
        )
        first = groups[0].variants[0]
        assert first.question == record.question
        assert first.expected == record.answer

    def test_new_variants_recompute_expected(self, stub_runner, fast_limits):
        record = make_record()
        groups, _ = build_plus_set(
            [record], n_new=3, seed=7, runner=stub_runner, limits=fast_limits
        )
        for variant in groups[0].variants[1:]:
            n1, n2 = [n.value for n in extract_numbers(variant.question)]
            assert variant.expected.numeric_value == n1 * n2

    def test_variants_use_distinct_assignments(self, stub_runner, fast_limits):
        record = make_record()
        groups, _ = build_plus_set(
            [record], n_new=4, seed=7, runner=stub_runner, limits=fast_limits
        )
        values = [tuple(n.value for n in extract_numbers(v.question)) for v in groups[0].variants]
        assert len(set(values)) == len(values)

    def test_deterministic(self, stub_runner, fast_limits):
        records = [make_record(f"p{i}", a=2 + i) for i in range(2)]
        runs = [
            build_plus_set(records, n_new=2, seed=11, runner=stub_runner, limits=fast_limits)[0]
            for _ in range(2)
        ]
        flat = lambda gs: [(g.group_id, v.question) for g in gs for v in g.variants]
        assert flat(runs[0]) == flat(runs[1])

    def test_requires_at_least_one_new(self, stub_runner, fast_limits):
        with pytest.raises(ValueError):
            build_plus_set([make_record()], n_new=0, seed=1)

    def test_unverified_records_skipped(self, stub_runner, fast_limits):
        records = [
            make_record("good"),
            make_record("bad", status=SynthesisStatus.WRONG_ANSWER),
        ]
        groups, report = build_plus_set(
            records, n_new=1, seed=1, runner=stub_runner, limits=fast_limits
        )
        assert [g.group_id for g in groups] == ["good"]
        assert report.records_skipped == 1

    def test_unfillable_group_dropped_entirely(self, stub_runner, fast_limits):
        # Single-point constraints pin the only assignment to the original,
        # so no new variant can ever appear.
        record = make_record(bounds="[3, 4]", a=3, b=4)
        pinned = make_record("pinned", a=3, b=3, bounds="[3, 3]")
        groups, report = build_plus_set(
            [pinned], n_new=1, seed=1, runner=stub_runner, limits=fast_limits,
            max_attempts=20,
        )
        assert groups == []
        assert report.groups_incomplete == 1

    def test_crashing_variants_never_emitted(self, stub_runner, fast_limits):
        # Any assignment with n1 == n2 crashes; the builder must keep only
        # clean executions.
        record = make_record(
            "crashy", a=2, b=9, bounds="[2, 9]",
            body="total = (n1 * n2 * (n1 - n2)) // (n1 - n2)",
        )
        groups, report = build_plus_set(
            [record], n_new=3, seed=5, runner=stub_runner, limits=fast_limits
        )
        if groups:
            for variant in groups[0].variants[1:]:
                n1, n2 = [n.value for n in extract_numbers(variant.question)]
                assert n1 != n2


def scored_group(gid, n=3, offset=0, status=ReviewStatus.AUTO):
    variants = tuple(
        Variant(f"question {gid} {i}", sample_answer(str(offset + i + 1)))
        for i in range(n)
    )
    return PerturbedGroup(gid, variants, review_status=status)


def correct_answers(group):
    return {
        (group.group_id, i): str(v.expected.numeric_value)
        for i, v in enumerate(group.variants)
    }


class TestReview:
    def test_apply_and_filter(self):
        groups = [scored_group("a"), scored_group("b"), scored_group("c")]
        updated = apply_review(
            groups,
            [
                {"group_id": "a", "decision": "approve", "note": "looks right"},
                {"group_id": "c", "decision": "reject", "note": "nonsense range"},
            ],
        )
        assert [g.group_id for g in updated] == ["a", "b", "c"]
        assert updated[0].review_status is ReviewStatus.HUMAN_APPROVED
        assert updated[0].note == "looks right"
        assert updated[1].review_status is ReviewStatus.AUTO
        assert updated[2].review_status is ReviewStatus.HUMAN_REJECTED
        assert [g.group_id for g in active_groups(updated)] == ["a", "b"]
        # Inputs are untouched; review returns new group objects.
        assert groups[0].review_status is ReviewStatus.AUTO

    def test_unknown_group(self):
        with pytest.raises(LoadError) as excinfo:
            apply_review([scored_group("a")], [{"group_id": "zz", "decision": "approve"}])
        assert excinfo.value.code == "UNKNOWN_GROUP_ID"

    def test_bad_decision(self):
        with pytest.raises(LoadError) as excinfo:
            apply_review([scored_group("a")], [{"group_id": "a", "decision": "maybe"}])
        assert excinfo.value.code == "SCHEMA_MISMATCH"

    def test_last_decision_wins(self):
        updated = apply_review(
            [scored_group("a")],
            [
                {"group_id": "a", "decision": "approve"},
                {"group_id": "a", "decision": "reject"},
            ],
        )
        assert updated[0].review_status is ReviewStatus.HUMAN_REJECTED


class TestScoreConsistency:
    def test_any_versus_all(self):
        full = scored_group("full")
        partial = scored_group("partial")
        zero = scored_group("zero")
        answers = correct_answers(full)
        answers[(partial.group_id, 0)] = str(partial.variants[0].expected.numeric_value)
        report = score_consistency([full, partial, zero], answers)
        assert report.groups_scored == 3
        assert report.any_correct == 2
        assert report.all_correct == 1
        assert report.consistency_ratio == Fraction(1, 2)
        assert report.consistency_display == "50.0"
        assert report.per_group["full"] == [True, True, True]
        assert report.per_group["partial"] == [True, False, False]
        assert report.per_group["zero"] == [False, False, False]

    def test_missing_answers_are_wrong(self):
        group = scored_group("g")
        answers = correct_answers(group)
        del answers[("g", 1)]
        report = score_consistency([group], answers)
        assert report.per_group["g"] == [True, False, True]
        assert report.all_correct == 0

    def test_rejected_groups_excluded(self):
        kept = scored_group("kept")
        rejected = scored_group("gone", status=ReviewStatus.HUMAN_REJECTED)
        answers = {**correct_answers(kept), **correct_answers(rejected)}
        report = score_consistency([kept, rejected], answers)
        assert report.groups_scored == 1
        assert "gone" not in report.per_group

    def test_numeric_tolerance_applies(self):
        group = scored_group("g", n=1)
        report = score_consistency([group], {("g", 0): "1.0000000001"})
        assert report.all_correct == 1

    def test_zero_any_correct_has_no_ratio(self):
        group = scored_group("g")
        report = score_consistency([group], {})
        assert report.consistency_ratio is None
        assert report.consistency_display is None
        assert report.to_json()["consistency"] is None

    def test_empty_input(self):
        report = score_consistency([], {})
        assert report.groups_scored == 0
        assert report.consistency_display is None


class TestFiles:
    def test_groups_round_trip(self, tmp_path):
        groups = [
            scored_group("a"),
            scored_group("b", status=ReviewStatus.HUMAN_APPROVED),
        ]
        path = tmp_path / "groups.jsonl"
        write_groups(groups, path)
        assert read_groups(path) == groups

    def test_groups_preserve_notes(self, tmp_path):
        group = PerturbedGroup(
            "a", scored_group("a").variants, ReviewStatus.HUMAN_REJECTED, "bad range"
        )
        path = tmp_path / "groups.jsonl"
        write_groups([group], path)
        back = read_groups(path)
        assert back[0].note == "bad range"
        assert back[0].review_status is ReviewStatus.HUMAN_REJECTED

    def test_gap_in_indices_rejected(self, tmp_path):
        path = tmp_path / "groups.jsonl"
        write_groups([scored_group("a")], path)
        lines = path.read_text(encoding="utf-8").splitlines()
        path.write_text("\n".join([lines[0], lines[2]]) + "\n", encoding="utf-8")
        with pytest.raises(LoadError) as excinfo:
            read_groups(path)
        assert excinfo.value.code == "SCHEMA_MISMATCH"

    def test_disagreeing_rows_rejected(self, tmp_path):
        path = tmp_path / "groups.jsonl"
        write_groups([scored_group("a")], path)
        lines = path.read_text(encoding="utf-8").splitlines()
        lines[1] = lines[1].replace('"auto"', '"human_approved"')
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(LoadError) as excinfo:
            read_groups(path)
        assert excinfo.value.code == "SCHEMA_MISMATCH"

    def test_answers_round_trip(self, tmp_path):
        answers = {("a", 0): "12", ("a", 1): "13", ("b", 0): "B"}
        path = tmp_path / "answers.jsonl"
        write_answers(answers, path)
        assert read_answers(path) == answers

    def test_read_review(self, tmp_path):
        path = tmp_path / "review.jsonl"
        path.write_text(
            '{"group_id": "a", "decision": "approve"}\n'
            "\n"
            '{"group_id": "b", "decision": "reject", "note": "off"}\n',
            encoding="utf-8",
        )
        rows = read_review(path)
        assert len(rows) == 2
        assert rows[1]["note"] == "off"
