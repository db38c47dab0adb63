"""Constraint grammar, assignment sampling, and combinatorial augmentation."""

import random
from fractions import Fraction

import pytest

from mathsynth.errors import ConstraintError
from mathsynth.masking import extract_numbers, mask_question
from mathsynth.scale import (
    FLOAT_STEP,
    AugmentationPlan,
    ValueType,
    assignment_satisfies,
    augment,
    dedup_key,
    derive_seed,
    parse_constraints,
    return_contract,
    sample_assignment,
    value_meets_contract,
)
from mathsynth.template import full_selector, instantiate, validate_template

PARAMS = ["n1", "n2"]


def parse_one(line, params=("x",)):
    return parse_constraints([line], list(params))[0]


class TestParseConstraints:
    def test_int_line(self):
        c = parse_one("x: int in [2, 500]")
        assert c.vtype is ValueType.INT
        assert (c.lo, c.hi, c.step) == (Fraction(2), Fraction(500), Fraction(1))
        assert c.criteria == ""

    def test_float_line_grid(self):
        c = parse_one("x: float in [0.5, 2.5]")
        assert c.vtype is ValueType.FLOAT
        assert c.lo == Fraction(1, 2) and c.hi == Fraction(5, 2)
        assert c.step == FLOAT_STEP

    def test_integer_criteria_tightens_float_grid(self):
        c = parse_one("x: float in [1, 9]; must be an integer")
        assert c.step == Fraction(1)
        assert c.integral

    def test_criteria_preserved(self):
        c = parse_one("x: int in [1, 9]; positive, divisible by 3")
        assert c.criteria == "positive, divisible by 3"
        assert ("positive",) in c.predicates
        assert ("divisible", 3) in c.predicates

    def test_multiple_of_wording(self):
        c = parse_one("x: int in [5, 100]; a multiple of 5")
        assert ("divisible", 5) in c.predicates

    def test_nonnegative_not_also_positive(self):
        c = parse_one("x: int in [0, 9]; non-negative value")
        assert ("nonnegative",) in c.predicates
        assert ("positive",) not in c.predicates

    def test_ordering_words_and_ops(self):
        lines = [
            "n1: int in [1, 9]; less than n2",
            "n2: int in [1, 9]",
        ]
        c = parse_constraints(lines, PARAMS)[0]
        assert ("cmp", "<", "n2") in c.predicates

        lines = [
            "n1: int in [1, 9]; n1 <= n2",
            "n2: int in [1, 9]",
        ]
        c = parse_constraints(lines, PARAMS)[0]
        assert ("cmp", "<=", "n2") in c.predicates

    def test_ordering_ignores_unknown_names(self):
        c = parse_one("x: int in [1, 9]; less than budget")
        assert not any(p[0] == "cmp" for p in c.predicates)

    def test_blank_lines_skipped(self):
        out = parse_constraints("\nn1: int in [1, 2]\n\nn2: int in [1, 2]\n", PARAMS)
        assert [c.name for c in out] == PARAMS

    def test_order_follows_parameters(self):
        text = "n2: int in [1, 2]\nn1: int in [3, 4]"
        out = parse_constraints(text, PARAMS)
        assert [c.name for c in out] == PARAMS

    @pytest.mark.parametrize(
        "line",
        [
            "gibberish",
            "x = int in [1, 2]",
            "x: bool in [1, 2]",
            "x: int in [1]",
            "x: int in [low, high]",
            "x: int in [9, 1]",
            "x: int in [1.5, 3]",
            "y: int in [1, 2]",
        ],
    )
    def test_malformed_lines(self, line):
        with pytest.raises(ConstraintError) as excinfo:
            parse_one(line)
        assert excinfo.value.code == "MALFORMED_LINE"

    def test_duplicate_rejected(self):
        with pytest.raises(ConstraintError) as excinfo:
            parse_constraints(["x: int in [1, 2]", "x: int in [3, 4]"], ["x"])
        assert excinfo.value.code == "MALFORMED_LINE"

    def test_missing_constraint(self):
        with pytest.raises(ConstraintError) as excinfo:
            parse_constraints(["n1: int in [1, 2]"], PARAMS)
        assert excinfo.value.code == "MISSING_CONSTRAINT"

    def test_original_out_of_bounds(self):
        with pytest.raises(ConstraintError) as excinfo:
            parse_constraints(
                ["x: int in [10, 20]"], ["x"], originals={"x": Fraction(3)}
            )
        assert excinfo.value.code == "ORIGINAL_VALUE_VIOLATES"

    def test_original_breaks_ordering(self):
        lines = ["n1: int in [1, 9]; less than n2", "n2: int in [1, 9]"]
        with pytest.raises(ConstraintError) as excinfo:
            parse_constraints(
                lines, PARAMS, originals={"n1": Fraction(8), "n2": Fraction(2)}
            )
        assert excinfo.value.code == "ORIGINAL_VALUE_VIOLATES"

    def test_original_values_accepted(self):
        lines = ["n1: int in [1, 9]; less than n2", "n2: int in [1, 9]"]
        out = parse_constraints(
            lines, PARAMS, originals={"n1": Fraction(2), "n2": Fraction(8)}
        )
        assert len(out) == 2


class TestAllows:
    def test_bounds_inclusive(self):
        c = parse_one("x: int in [2, 5]")
        assert c.allows(Fraction(2)) and c.allows(Fraction(5))
        assert not c.allows(Fraction(1)) and not c.allows(Fraction(6))

    def test_integer_predicate(self):
        c = parse_one("x: float in [0, 9]; integer")
        assert c.allows(Fraction(3))
        assert not c.allows(Fraction(7, 2))

    def test_divisible(self):
        c = parse_one("x: int in [0, 100]; divisible by 7")
        assert c.allows(Fraction(49))
        assert not c.allows(Fraction(50))

    def test_sign_predicates(self):
        pos = parse_one("x: float in [-5, 5]; positive")
        assert not pos.allows(Fraction(0)) and pos.allows(Fraction(1, 2))
        nn = parse_one("x: float in [-5, 5]; non-negative")
        assert nn.allows(Fraction(0)) and not nn.allows(Fraction(-1))

    def test_assignment_ordering(self):
        cs = parse_constraints(
            ["n1: int in [1, 9]; less than n2", "n2: int in [1, 9]"], PARAMS
        )
        assert assignment_satisfies(cs, {"n1": Fraction(2), "n2": Fraction(8)})
        assert not assignment_satisfies(cs, {"n1": Fraction(8), "n2": Fraction(2)})


class TestSampleAssignment:
    def test_deterministic(self):
        cs = parse_constraints(["n1: int in [1, 99]", "n2: float in [0, 1]"], PARAMS)
        a = sample_assignment(cs, random.Random(42))
        b = sample_assignment(cs, random.Random(42))
        assert a == b

    def test_values_on_grid(self):
        cs = parse_constraints(["n1: int in [3, 9]", "n2: float in [0.5, 1.5]"], PARAMS)
        for seed in range(20):
            assignment = sample_assignment(cs, random.Random(seed))
            for c in cs:
                v = assignment[c.name]
                assert c.lo <= v <= c.hi
                assert ((v - c.lo) / c.step).denominator == 1

    def test_predicates_respected(self):
        cs = parse_constraints(
            ["n1: int in [1, 100]; divisible by 5", "n2: int in [1, 100]; more than n1"],
            PARAMS,
        )
        for seed in range(20):
            assignment = sample_assignment(cs, random.Random(seed))
            assert assignment["n1"] % 5 == 0
            assert assignment["n2"] > assignment["n1"]

    def test_single_point_range(self):
        cs = parse_constraints(["x: int in [5, 5]"], ["x"])
        assert sample_assignment(cs, random.Random(0)) == {"x": Fraction(5)}

    def test_exhaustion(self):
        cs = parse_constraints(
            ["n1: int in [1, 9]; less than n2", "n2: int in [1, 9]; less than n1"],
            PARAMS,
        )
        with pytest.raises(ConstraintError) as excinfo:
            sample_assignment(cs, random.Random(0), max_attempts=50)
        assert excinfo.value.code == "SAMPLING_EXHAUSTED"


class TestDeriveSeed:
    def test_pinned_value(self):
        # Reproducibility pin: augmented corpora must regenerate identically.
        assert derive_seed(7, "alpha") == 1424979553700035827

    def test_distinct_streams(self):
        assert derive_seed(7, "alpha") != derive_seed(7, "beta")
        assert derive_seed(7, "alpha") != derive_seed(8, "alpha")

    def test_fits_in_64_bits(self):
        for key in ("a", "b", "c"):
            assert 0 <= derive_seed(123, key) < 2**64


RETURN_CASES = [
    ("the total, an integer", {"integer"}),
    ("a whole number of items", {"integer"}),
    ("the count of boxes", {"integer"}),
    ("a non-negative integer", {"integer", "nonnegative"}),
    ("a positive number", {"positive"}),
    ("a non-negative value, never positive infinity", {"nonnegative"}),
    ("the answer", set()),
]


def template_with_return(return_text, body="total = n1 + n2"):
    source = (
        "def solution(n1, n2):\n"
        '    """Compute a value.\n'
        "\n"
        "    :param n1: first\n"
        "    :param n2: second\n"
        f"    :return: {return_text}\n"
        '    """\n'
        f"    {body}\n"
        "    return total\n"
    )
    return validate_template(source)


class TestReturnContract:
    @pytest.mark.parametrize("text,expected", RETURN_CASES)
    def test_keywords(self, text, expected):
        assert return_contract(template_with_return(text)) == frozenset(expected)

    def test_no_return_line(self):
        # A docstring can omit :return: only if validation allowed it; guard
        # the lookup against empty docstrings directly.
        program = template_with_return("anything")
        object.__setattr__(program, "docstring", "Compute a value.")
        assert return_contract(program) == frozenset()


class TestValueMeetsContract:
    @pytest.mark.parametrize(
        "value,contract,ok",
        [
            (Fraction(3), {"integer"}, True),
            (Fraction(7, 2), {"integer"}, False),
            (Fraction(0), {"nonnegative"}, True),
            (Fraction(-1), {"nonnegative"}, False),
            (Fraction(0), {"positive"}, False),
            (Fraction(1, 4), {"positive"}, True),
            (Fraction(-3), set(), True),
            (Fraction(-7, 2), {"integer", "positive"}, False),
        ],
    )
    def test_table(self, value, contract, ok):
        assert value_meets_contract(value, frozenset(contract)) is ok


def build_case(body="total = n1 * n2", return_text="the total, an integer"):
    question = "A shop packs 3 boxes with 7 toys in each box."
    masked = mask_question(question, extract_numbers(question))
    template = template_with_return(return_text, body)
    return template, masked


class TestDedupKey:
    def test_whitespace_normalized_question(self):
        template, masked = build_case()
        values = {"n1": Fraction(4), "n2": Fraction(6)}
        a = instantiate(template, masked, values, full_selector(template.parameters))
        b = a.__class__(**{**a.__dict__, "question": "  " + a.question.replace(" ", "  ")})
        assert dedup_key(a) == dedup_key(b)

    def test_program_is_exact(self):
        template, masked = build_case()
        values = {"n1": Fraction(4), "n2": Fraction(6)}
        a = instantiate(template, masked, values, full_selector(template.parameters))
        b = a.__class__(**{**a.__dict__, "program": a.program + "\n"})
        assert dedup_key(a) != dedup_key(b)

    def test_different_values_differ(self):
        template, masked = build_case()
        sel = full_selector(template.parameters)
        a = instantiate(template, masked, {"n1": Fraction(4), "n2": Fraction(6)}, sel)
        b = instantiate(template, masked, {"n1": Fraction(4), "n2": Fraction(8)}, sel)
        assert dedup_key(a) != dedup_key(b)


class TestPlan:
    def test_budget_must_be_positive(self):
        with pytest.raises(ValueError):
            AugmentationPlan(budget=0)


CONSTRAINT_TEXT = "n1: int in [2, 500]\nn2: int in [2, 500]"


class TestAugment:
    def test_full_variants_only_by_default(self, stub_runner, fast_limits):
        template, masked = build_case()
        constraints = parse_constraints(CONSTRAINT_TEXT, template.parameters)
        plan = AugmentationPlan(budget=3, seed=11)
        samples, report = augment(
            template, masked, constraints, plan,
            problem_id="p1", runner=stub_runner, limits=fast_limits,
        )
        assert report.assignments == 3
        assert all(s.is_full for s in samples)
        assert all(s.expected_answer is not None for s in samples)
        assert report.kept == len(samples)

    def test_expected_answer_matches_arithmetic(self, stub_runner, fast_limits):
        template, masked = build_case()
        constraints = parse_constraints(CONSTRAINT_TEXT, template.parameters)
        plan = AugmentationPlan(budget=2, seed=5)
        samples, _ = augment(
            template, masked, constraints, plan,
            problem_id="p1", runner=stub_runner, limits=fast_limits,
        )
        for sample in samples:
            # The substituted values are recoverable from the rendered text.
            n1, n2 = [n.value for n in extract_numbers(sample.question)]
            assert sample.expected_answer.numeric_value == n1 * n2

    def test_deterministic_output(self, stub_runner, fast_limits):
        template, masked = build_case()
        constraints = parse_constraints(CONSTRAINT_TEXT, template.parameters)
        plan = AugmentationPlan(budget=2, seed=9, all_selectors=True, include_symbolic=True)
        runs = [
            augment(
                template, masked, constraints, plan,
                problem_id="p1", runner=stub_runner, limits=fast_limits,
            )[0]
            for _ in range(2)
        ]
        first = [(s.question, s.program, s.selector) for s in runs[0]]
        second = [(s.question, s.program, s.selector) for s in runs[1]]
        assert first == second

    def test_count_law(self, stub_runner, fast_limits):
        template, masked = build_case()
        constraints = parse_constraints(CONSTRAINT_TEXT, template.parameters)
        plan = AugmentationPlan(budget=4, seed=3, all_selectors=True, include_symbolic=True)
        samples, report = augment(
            template, masked, constraints, plan,
            problem_id="p1", runner=stub_runner, limits=fast_limits,
        )
        selectors_per_assignment = 2 ** len(template.parameters) - 1
        assert report.attempted == report.assignments * selectors_per_assignment
        assert report.kept == len(samples)

    def test_symbolic_variants_in_binary_order(self, stub_runner, fast_limits):
        template, masked = build_case()
        constraints = parse_constraints(CONSTRAINT_TEXT, template.parameters)
        plan = AugmentationPlan(budget=1, seed=2, all_selectors=True, include_symbolic=True)
        samples, report = augment(
            template, masked, constraints, plan,
            problem_id="p1", runner=stub_runner, limits=fast_limits,
        )
        assert report.assignments == 1
        assert [list(s.selector) for s in samples] == [["n1"], ["n2"], ["n1", "n2"]]
        assert [s.is_full for s in samples] == [False, False, True]
        assert samples[0].expected_answer is None
        assert samples[1].expected_answer is None
        assert samples[2].expected_answer is not None

    def test_all_selectors_without_symbolic_stays_full(self, stub_runner, fast_limits):
        template, masked = build_case()
        constraints = parse_constraints(CONSTRAINT_TEXT, template.parameters)
        plan = AugmentationPlan(budget=2, seed=2, all_selectors=True, include_symbolic=False)
        samples, _ = augment(
            template, masked, constraints, plan,
            problem_id="p1", runner=stub_runner, limits=fast_limits,
        )
        assert samples and all(s.is_full for s in samples)

    def test_original_assignment_never_reemitted(self, stub_runner, fast_limits):
        template, masked = build_case()
        # Single-point ranges pinned to the original numbers: every sampled
        # assignment reproduces the seed sample and must dedup away.
        constraints = parse_constraints(
            "n1: int in [3, 3]\nn2: int in [7, 7]", template.parameters
        )
        plan = AugmentationPlan(budget=3, seed=1)
        samples, report = augment(
            template, masked, constraints, plan,
            problem_id="p1", runner=stub_runner, limits=fast_limits,
        )
        assert samples == []
        assert report.duplicates == 3
        assert report.kept == 0

    def test_runtime_errors_counted(self, stub_runner, fast_limits):
        template, masked = build_case(body="total = (n1 + n2) // (n1 - n2)")
        constraints = parse_constraints(
            "n1: int in [5, 5]\nn2: int in [5, 5]", template.parameters
        )
        plan = AugmentationPlan(budget=2, seed=1)
        samples, report = augment(
            template, masked, constraints, plan,
            problem_id="p1", runner=stub_runner, limits=fast_limits,
        )
        assert samples == []
        assert report.exec_failed == 2

    def test_contract_filter_drops_invalid_values(self, stub_runner, fast_limits):
        template, masked = build_case(
            body="total = n1 - n2", return_text="a positive difference"
        )
        constraints = parse_constraints(
            "n1: int in [2, 2]\nn2: int in [9, 9]", template.parameters
        )
        plan = AugmentationPlan(budget=2, seed=1)
        samples, report = augment(
            template, masked, constraints, plan,
            problem_id="p1", runner=stub_runner, limits=fast_limits,
        )
        assert samples == []
        assert report.filtered == 2

    def test_sampling_exhaustion_reported(self, stub_runner, fast_limits):
        template, masked = build_case()
        constraints = parse_constraints(
            "n1: int in [1, 9]; less than n2\nn2: int in [1, 9]; less than n1",
            template.parameters,
        )
        plan = AugmentationPlan(budget=5, seed=1, max_sample_attempts=30)
        samples, report = augment(
            template, masked, constraints, plan,
            problem_id="p1", runner=stub_runner, limits=fast_limits,
        )
        assert samples == []
        assert report.sampling_exhausted == 1
        assert report.assignments == 0

    def test_selector_sampling_above_enumeration_cap(self, stub_runner, fast_limits):
        k = 17
        params = [f"n{i}" for i in range(1, k + 1)]
        numbers = ", ".join(str(i + 1) for i in range(k))
        question = f"Use the values {numbers} in order."
        masked = mask_question(question, extract_numbers(question))
        param_lines = "\n".join(f"    :param {p}: value" for p in params)
        source = (
            f"def solution({', '.join(params)}):\n"
            '    """Add every value.\n'
            "\n"
            f"{param_lines}\n"
            "    :return: the total, an integer\n"
            '    """\n'
            f"    total = {' + '.join(params)}\n"
            "    return total\n"
        )
        template = validate_template(source)
        constraints = parse_constraints(
            [f"{p}: int in [1, 99]" for p in params], params
        )
        plan = AugmentationPlan(
            budget=1, seed=4, all_selectors=True, include_symbolic=True,
            selector_sample=8,
        )
        samples, report = augment(
            template, masked, constraints, plan,
            problem_id="wide", runner=stub_runner, limits=fast_limits,
        )
        assert report.assignments == 1
        assert report.attempted == 8
        assert len(samples) == report.kept
