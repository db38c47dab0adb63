"""Constraint parsing and combinatorial corpus scaling.

Constraint lines follow `name: type in [lo, hi]; criteria`. The criteria text
is free-form, but a few structured predicates are recognized and enforced
during sampling: integrality, positivity, non-negativity, divisibility, and
ordering between variables. Everything else stays advisory.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .corpus import sample_answer
from .errors import ConstraintError, TemplateError
from .masking import MaskedQuestion
from .numform import parse_number_text
from .template import (
    SELECTOR_CAP,
    InstantiatedSample,
    UnifiedProgram,
    VariantSelector,
    enumerate_selectors,
    full_selector,
    instantiate,
)
from .verify import ExecStatus, ExecutionLimits, execute, syntax_check

log = logging.getLogger(__name__)


class ValueType(Enum):
    INT = "int"
    FLOAT = "float"


_LINE_RE = re.compile(
    r"^\s*(?P<name>\w+)\s*:\s*(?P<type>int|float)\s+in\s+"
    r"\[\s*(?P<lo>[^,\]]+?)\s*,\s*(?P<hi>[^\]]+?)\s*\]\s*(?:;\s*(?P<criteria>.*?)\s*)?$"
)
_DIVISIBLE_RE = re.compile(r"(?:divisible by|multiple of)\s+(\d+)", re.IGNORECASE)
_ORDERING_RE = re.compile(
    r"(?:(?P<op><=|>=|<|>)\s*|(?P<word>less than|smaller than|at most|greater than|more than|at least)\s+)"
    r"(?P<other>[A-Za-z_]\w*)"
)
_WORD_OPS = {
    "less than": "<",
    "smaller than": "<",
    "at most": "<=",
    "greater than": ">",
    "more than": ">",
    "at least": ">=",
}
# Default sampling granularity when the criteria do not force integers.
FLOAT_STEP = Fraction(1, 100)


@dataclass(frozen=True)
class VariableConstraint:
    name: str
    vtype: ValueType
    lo: Fraction
    hi: Fraction
    step: Fraction
    criteria: str = ""
    predicates: tuple[tuple, ...] = ()

    @property
    def integral(self) -> bool:
        return self.vtype is ValueType.INT or ("integer",) in self.predicates

    def allows(self, value: Fraction) -> bool:
        """Bounds plus unary predicates; ordering needs the full assignment."""
        if not (self.lo <= value <= self.hi):
            return False
        for pred in self.predicates:
            if pred[0] == "integer" and value.denominator != 1:
                return False
            if pred[0] == "positive" and value <= 0:
                return False
            if pred[0] == "nonnegative" and value < 0:
                return False
            if pred[0] == "divisible" and (
                value.denominator != 1 or value.numerator % pred[1] != 0
            ):
                return False
        return True


def _extract_predicates(criteria: str, known_names: Sequence[str], own_name: str) -> tuple:
    predicates = []
    lowered = criteria.lower()
    if re.search(r"\binteger\b|\bwhole number\b", lowered):
        predicates.append(("integer",))
    if re.search(r"\bnon-?negative\b", lowered):
        predicates.append(("nonnegative",))
    elif re.search(r"\bpositive\b", lowered):
        predicates.append(("positive",))
    for m in _DIVISIBLE_RE.finditer(criteria):
        predicates.append(("divisible", int(m.group(1))))
    for m in _ORDERING_RE.finditer(criteria):
        other = m.group("other")
        if other in known_names and other != own_name:
            op = m.group("op") or _WORD_OPS[m.group("word")]
            predicates.append(("cmp", op, other))
    return tuple(predicates)


_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def assignment_satisfies(
    constraints: Sequence[VariableConstraint], assignment: Mapping[str, Fraction]
) -> bool:
    by_name = {c.name: c for c in constraints}
    for constraint in constraints:
        value = assignment[constraint.name]
        if not constraint.allows(value):
            return False
        for pred in constraint.predicates:
            if pred[0] == "cmp":
                other = pred[2]
                if other in assignment and not _CMP[pred[1]](value, assignment[other]):
                    return False
    return True


def parse_constraints(
    text: str | Sequence[str],
    parameters: Sequence[str],
    originals: Optional[Mapping[str, Fraction]] = None,
) -> list[VariableConstraint]:
    """Parse one constraint line per parameter.

    Raises ConstraintError with MALFORMED_LINE, MISSING_CONSTRAINT(name), or
    ORIGINAL_VALUE_VIOLATES(name) when the original numbers are supplied and
    fall outside their own constraints.
    """
    lines = text.splitlines() if isinstance(text, str) else list(text)
    parsed: dict[str, VariableConstraint] = {}
    for line in lines:
        if not line.strip():
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise ConstraintError("MALFORMED_LINE", f"cannot parse {line.strip()!r}")
        name = m.group("name")
        if name not in parameters:
            raise ConstraintError("MALFORMED_LINE", f"unknown variable {name!r}", name=name)
        if name in parsed:
            raise ConstraintError("MALFORMED_LINE", f"duplicate constraint for {name!r}", name=name)
        vtype = ValueType(m.group("type"))
        try:
            lo = parse_number_text(m.group("lo"))
            hi = parse_number_text(m.group("hi"))
        except ValueError as exc:
            raise ConstraintError("MALFORMED_LINE", f"bad bound in {line.strip()!r}: {exc}")
        if lo > hi:
            raise ConstraintError("MALFORMED_LINE", f"empty range in {line.strip()!r}")
        criteria = (m.group("criteria") or "").strip()
        predicates = _extract_predicates(criteria, parameters, name)
        if vtype is ValueType.INT and (lo.denominator != 1 or hi.denominator != 1):
            raise ConstraintError("MALFORMED_LINE", f"non-integer bound for int {name!r}")
        integral = vtype is ValueType.INT or ("integer",) in predicates
        step = Fraction(1) if integral else FLOAT_STEP
        parsed[name] = VariableConstraint(
            name=name,
            vtype=vtype,
            lo=lo,
            hi=hi,
            step=step,
            criteria=criteria,
            predicates=predicates,
        )

    for name in parameters:
        if name not in parsed:
            raise ConstraintError("MISSING_CONSTRAINT", f"no constraint for {name}", name=name)
    ordered = [parsed[name] for name in parameters]

    if originals is not None:
        for constraint in ordered:
            value = Fraction(originals[constraint.name])
            if not constraint.allows(value):
                raise ConstraintError(
                    "ORIGINAL_VALUE_VIOLATES",
                    f"original {constraint.name}={value} breaks its constraint",
                    name=constraint.name,
                )
        if not assignment_satisfies(ordered, {k: Fraction(v) for k, v in originals.items()}):
            raise ConstraintError(
                "ORIGINAL_VALUE_VIOLATES", "original values break an ordering criterion"
            )
    return ordered


def sample_assignment(
    constraints: Sequence[VariableConstraint],
    rng: random.Random,
    max_attempts: int = 1000,
) -> dict[str, Fraction]:
    """Rejection-sample one full assignment on each variable's value grid.

    Deterministic for a given rng state. Raises
    ConstraintError(SAMPLING_EXHAUSTED) when the attempt budget runs out.
    """
    for _ in range(max_attempts):
        assignment = {}
        for constraint in constraints:
            count = int((constraint.hi - constraint.lo) / constraint.step) + 1
            assignment[constraint.name] = constraint.lo + constraint.step * rng.randrange(count)
        if assignment_satisfies(constraints, assignment):
            return assignment
    raise ConstraintError(
        "SAMPLING_EXHAUSTED", f"no valid assignment in {max_attempts} attempts"
    )


def derive_seed(global_seed: int, key: str) -> int:
    """Independent, reproducible RNG stream per (seed, job key)."""
    material = f"{global_seed}:{key}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


@dataclass(frozen=True)
class AugmentationPlan:
    budget: int = 1
    all_selectors: bool = False
    include_symbolic: bool = False
    seed: int = 0
    selector_sample: Optional[int] = None
    max_sample_attempts: int = 1000

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")


# Keywords in the :return: docstring line that declare output contracts.
_RETURN_INT_RE = re.compile(r"\binteger\b|\bwhole number\b|\bcount\b", re.IGNORECASE)
_RETURN_NONNEG_RE = re.compile(r"\bnon-?negative\b", re.IGNORECASE)
_RETURN_POSITIVE_RE = re.compile(r"\bpositive\b", re.IGNORECASE)


def return_contract(program: UnifiedProgram) -> frozenset[str]:
    """Output validity contract declared by the :return: docstring line."""
    for line in program.docstring.split("\n"):
        if re.match(r"^\s*:return\s*:", line):
            contracts = set()
            if _RETURN_INT_RE.search(line):
                contracts.add("integer")
            if _RETURN_NONNEG_RE.search(line):
                contracts.add("nonnegative")
            elif _RETURN_POSITIVE_RE.search(line):
                contracts.add("positive")
            return frozenset(contracts)
    return frozenset()


def value_meets_contract(value: Fraction, contract: frozenset[str]) -> bool:
    if "integer" in contract and value.denominator != 1:
        return False
    if "nonnegative" in contract and value < 0:
        return False
    if "positive" in contract and value <= 0:
        return False
    return True


def dedup_key(sample: InstantiatedSample) -> str:
    """Near-duplicate key: whitespace-normalized question + exact program."""
    material = " ".join(sample.question.split()) + "\x00" + sample.program
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


@dataclass
class AugmentReport:
    assignments: int = 0
    kept: int = 0
    duplicates: int = 0
    exec_failed: int = 0
    syntax_failed: int = 0
    filtered: int = 0
    sampling_exhausted: int = 0

    @property
    def attempted(self) -> int:
        return self.kept + self.duplicates + self.exec_failed + self.syntax_failed + self.filtered

    def merge(self, other: "AugmentReport"):
        for field_name in (
            "assignments",
            "kept",
            "duplicates",
            "exec_failed",
            "syntax_failed",
            "filtered",
            "sampling_exhausted",
        ):
            setattr(self, field_name, getattr(self, field_name) + getattr(other, field_name))

    def to_json(self) -> dict:
        return {
            "assignments": self.assignments,
            "attempted": self.attempted,
            "kept": self.kept,
            "duplicates": self.duplicates,
            "exec_failed": self.exec_failed,
            "syntax_failed": self.syntax_failed,
            "filtered": self.filtered,
            "sampling_exhausted": self.sampling_exhausted,
        }


def _plan_selectors(
    plan: AugmentationPlan, parameters: Sequence[str], rng: random.Random
) -> list[VariantSelector]:
    if not (plan.all_selectors and plan.include_symbolic):
        return [full_selector(parameters)]
    k = len(parameters)
    if k <= SELECTOR_CAP:
        return enumerate_selectors(k, parameters)
    want = plan.selector_sample or 256
    masks = set()
    cap = min(want, 1 << 20)
    while len(masks) < cap:
        mask = rng.getrandbits(k)
        if mask:
            masks.add(mask)
    selectors = []
    for mask in sorted(masks):
        names = frozenset(parameters[i] for i in range(k) if mask >> i & 1)
        selectors.append(VariantSelector(names=names))
    return selectors


def augment(
    template: UnifiedProgram,
    masked: MaskedQuestion,
    constraints: Sequence[VariableConstraint],
    plan: AugmentationPlan,
    problem_id: str = "",
    runner: Optional[str] = None,
    limits: ExecutionLimits = ExecutionLimits(),
    original_assignment: Optional[Mapping[str, Fraction]] = None,
) -> tuple[list[InstantiatedSample], AugmentReport]:
    """Generate perturbed samples for one verified template.

    Full variants are re-executed and the printed value becomes the expected
    answer after validity filters (numeric and finite; integer / sign when
    the return contract declares them). Symbolic variants only syntax-check.
    Output order is deterministic: assignments outer, selectors in binary
    order inner, duplicates removed against the original sample.
    """
    report = AugmentReport()
    rng = random.Random(derive_seed(plan.seed, template.digest))
    selectors = _plan_selectors(plan, template.parameters, rng)
    contract = return_contract(template)
    if original_assignment is None:
        original_assignment = masked.original_assignment()

    seen = set()
    seed_sample = instantiate(
        template, masked, original_assignment, full_selector(template.parameters), problem_id
    )
    seen.add(dedup_key(seed_sample))

    samples: list[InstantiatedSample] = []
    for _ in range(plan.budget):
        try:
            assignment = sample_assignment(constraints, rng, plan.max_sample_attempts)
        except ConstraintError as exc:
            if exc.code != "SAMPLING_EXHAUSTED":
                raise
            report.sampling_exhausted += 1
            break
        report.assignments += 1
        for selector in selectors:
            try:
                sample = instantiate(template, masked, assignment, selector, problem_id)
            except TemplateError:
                report.syntax_failed += 1
                continue
            if sample.is_full:
                result = execute(sample.program, limits, runner)
                if result.status is not ExecStatus.OK:
                    report.exec_failed += 1
                    continue
                try:
                    expected = sample_answer(result.value_line)
                except ValueError:
                    report.filtered += 1
                    continue
                if not value_meets_contract(expected.numeric_value, contract):
                    report.filtered += 1
                    continue
                sample = replace(sample, expected_answer=expected)
            else:
                result = syntax_check(sample.program, limits, runner)
                if result.status is not ExecStatus.OK:
                    report.syntax_failed += 1
                    continue
            key = dedup_key(sample)
            if key in seen:
                report.duplicates += 1
                continue
            seen.add(key)
            samples.append(sample)
            report.kept += 1
    return samples, report
