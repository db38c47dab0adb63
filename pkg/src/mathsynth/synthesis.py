"""Template synthesis: prompt building, strict response parsing, verification.

One round asks the model for four sections (general question, extracted
numbers, unified program, constraints); the response is parsed under a strict
contract, cross-checked against local masking, instantiated with the original
numbers, and executed against ground truth. Failed rounds get bounded
bug-fix rounds that repair only the program.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .corpus import (
    GroundTruthAnswer,
    Source,
    SourceProblem,
    answer_from_json,
    answer_to_json,
)
from .errors import ClientError, ConstraintError, MaskingError, ResponseParseError, TemplateError
from .llmclient import Completer
from .masking import (
    MaskedQuestion,
    classify_literal,
    crosscheck_masking,
    extract_numbers,
    mask_question,
    masked_from_json,
    masked_to_json,
)
from .numform import decimal_str
from .scale import VariableConstraint, parse_constraints
from .template import UnifiedProgram, full_selector, instantiate, validate_template
from .verify import ComparisonPolicy, ExecutionLimits, verify_sample

log = logging.getLogger(__name__)

SECTION_NAMES = ("General Question", "Extracted Numbers", "Unified Program", "Constraints")
_HEADER_RE = re.compile(
    r"^###[ \t]+(General Question|Extracted Numbers|Unified Program|Constraints)[ \t]*$",
    re.MULTILINE,
)
_CODE_BLOCK_RE = re.compile(r"```(?:python)?[ \t]*\n(.*?)\n?[ \t]*```", re.DOTALL)
_NUMBER_LINE_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*=\s*(.+?)\s*$")
_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_]\w*)\}")


class SynthesisStatus(Enum):
    VERIFIED = "verified"
    PARSE_FAILED = "parse_failed"
    EXEC_FAILED = "exec_failed"
    WRONG_ANSWER = "wrong_answer"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class SynthesisConfig:
    model: str = "gpt-4"
    temperature: float = 0.0
    max_fix_rounds: int = 1
    request_timeout_s: float = 60.0


@dataclass
class ParsedSynthesis:
    """One parsed response; placeholders, numbers, and params all agree."""

    general_question: str
    numbers: dict[str, str]
    values: dict[str, Fraction]
    program: UnifiedProgram
    constraints: list[VariableConstraint]
    constraints_text: str


@dataclass
class SynthesisRound:
    prompt: str
    response: str
    parse_error: Optional[str] = None
    program_source: Optional[str] = None
    verified: Optional[bool] = None
    exec_status: Optional[str] = None
    value_line: Optional[str] = None
    failure_reason: Optional[str] = None


@dataclass
class SynthesisRecord:
    problem_id: str
    source: Source
    question: str
    answer: GroundTruthAnswer
    choices: Optional[tuple[str, ...]]
    status: SynthesisStatus
    rounds: list[SynthesisRound] = field(default_factory=list)
    masked: Optional[MaskedQuestion] = None
    template: Optional[UnifiedProgram] = None
    numbers: Optional[dict[str, str]] = None
    constraints_text: str = ""
    crosscheck_warnings: list[str] = field(default_factory=list)


# --- prompt construction -----------------------------------------------------

PROMPT_HEADER = """\
You turn math word problems into reusable templates. Rewrite the problem so \
that every quantity becomes a named placeholder, then write a program that \
computes the answer from those placeholders.

Respond with exactly four sections, in this order, each introduced by a \
level-3 markdown heading (three # characters and a space) titled, verbatim: \
General Question, Extracted Numbers, Unified Program, Constraints.

Section contents:
1. General Question: the problem text with each quantity replaced by a \
placeholder in braces, named n1, n2, ... in order of appearance.
2. Extracted Numbers: one line per placeholder in the form `name = literal`, \
where the literal is the quantity exactly as written in the problem (keep \
percent signs).
3. Unified Program: one fenced python code block defining \
`def solution(...)` over all placeholders in order, with a docstring holding \
one :param line per parameter in signature order and then one :return line, \
and a short comment on each step. The function returns the final answer. \
Percent placeholders are passed as fractional values (a 20% rate arrives \
as 0.2).
4. Constraints: one line per placeholder in the form \
`name: int|float in [lo, hi]; criteria`, choosing ranges and criteria that \
keep the problem meaningful. The original values must satisfy them.\
"""

_EXAMPLE_ARITHMETIC = '''\
Problem:
Maria buys 4 boxes of pencils. Each box holds 12 pencils. How many pencils \
does Maria have in total?

### General Question
Maria buys {n1} boxes of pencils. Each box holds {n2} pencils. How many \
pencils does Maria have in total?

### Extracted Numbers
n1 = 4
n2 = 12

### Unified Program
```python
def solution(n1, n2):
    """Count the pencils Maria has in total.

    :param n1: number of boxes bought
    :param n2: number of pencils in each box
    :return: total number of pencils, an integer
    """
    # Every box contributes n2 pencils.
    total = n1 * n2
    return total
```

### Constraints
n1: int in [1, 50]; positive integer number of boxes
n2: int in [1, 500]; positive integer number of pencils per box\
'''

_EXAMPLE_CHOICE = '''\
Problem:
A train travels 60 km in 1.5 hours. At what average speed does it travel, \
in km/h?
Options:
A)30
B)35
C)40
D)45
E)50

### General Question
A train travels {n1} km in {n2} hours. At what average speed does it \
travel, in km/h?

### Extracted Numbers
n1 = 60
n2 = 1.5

### Unified Program
```python
def solution(n1, n2):
    """Compute the train's average speed.

    :param n1: distance traveled in km
    :param n2: travel time in hours
    :return: average speed in km/h
    """
    # Average speed is distance divided by time.
    speed = n1 / n2
    return speed
```

### Constraints
n1: float in [1, 2000]; positive distance in km
n2: float in [0.5, 48]; positive duration in hours\
'''

_EXAMPLE_RATE = '''\
Problem:
A jacket priced at $80 is sold with a 25% discount. What is the sale price \
in dollars?

### General Question
A jacket priced at ${n1} is sold with a {n2} discount. What is the sale \
price in dollars?

### Extracted Numbers
n1 = 80
n2 = 25%

### Unified Program
```python
def solution(n1, n2):
    """Compute the discounted sale price.

    :param n1: original price in dollars
    :param n2: discount rate as a fraction (25% arrives as 0.25)
    :return: sale price in dollars
    """
    # The buyer pays the complement of the discount rate.
    price = n1 * (1 - n2)
    return price
```

### Constraints
n1: int in [1, 10000]; positive price in dollars
n2: int in [1, 95]; whole-number discount percentage\
'''

EXAMPLES_BY_SOURCE = {
    Source.AQUA_RAT: _EXAMPLE_CHOICE,
    Source.MATHQA: _EXAMPLE_CHOICE,
    Source.MATH: _EXAMPLE_RATE,
    Source.THEOREMQA: _EXAMPLE_RATE,
}
DEFAULT_EXAMPLE = _EXAMPLE_ARITHMETIC


def build_multitask_prompt(problem: SourceProblem, example: Optional[str] = None) -> str:
    """Deterministic first-round prompt. Each section header appears exactly
    once, inside the worked example."""
    example = example if example is not None else EXAMPLES_BY_SOURCE.get(
        problem.source, DEFAULT_EXAMPLE
    )
    parts = [PROMPT_HEADER, "Worked example:\n\n" + example]
    problem_block = "Now rewrite this problem.\n\nProblem:\n" + problem.question
    if problem.choices:
        problem_block += "\nOptions:\n" + "\n".join(problem.choices)
    parts.append(problem_block)
    parts.append("Answer with the four sections only.")
    return "\n\n".join(parts)


def _split_sections(text: str) -> dict[str, str]:
    matches = list(_HEADER_RE.finditer(text))
    sections: dict[str, str] = {}
    for i, m in enumerate(matches):
        name = m.group(1)
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        if name in sections:
            raise ResponseParseError(
                "MISSING_SECTION", f"section {name!r} appears more than once", name=name
            )
        sections[name] = text[m.end() : end]
    return sections


def _parse_number_lines(body: str) -> tuple[dict[str, str], dict[str, Fraction]]:
    numbers: dict[str, str] = {}
    values: dict[str, Fraction] = {}
    for line in body.splitlines():
        if not line.strip():
            continue
        m = _NUMBER_LINE_RE.match(line)
        if not m:
            raise ResponseParseError(
                "BAD_NUMBER_LITERAL", f"unparseable line {line.strip()!r}"
            )
        name, literal = m.group(1), m.group(2)
        if name in numbers:
            raise ResponseParseError("BAD_NUMBER_LITERAL", f"duplicate entry for {name}", name=name)
        try:
            value, _ = classify_literal(literal)
        except ValueError as exc:
            raise ResponseParseError("BAD_NUMBER_LITERAL", str(exc), name=name) from exc
        numbers[name] = literal.strip()
        values[name] = value
    return numbers, values


def parse_response(text: str) -> ParsedSynthesis:
    """Parse a first-round response under the strict section contract.

    Raises ResponseParseError (MISSING_SECTION, BAD_NUMBER_LITERAL,
    PLACEHOLDER_MISMATCH, TEMPLATE_INVALID) or ConstraintError for the
    constraints section's own failures.
    """
    sections = _split_sections(text)
    for name in SECTION_NAMES:
        if name not in sections:
            raise ResponseParseError("MISSING_SECTION", f"no {name!r} section", name=name)

    general = sections["General Question"].strip()
    numbers, values = _parse_number_lines(sections["Extracted Numbers"])
    placeholders = set(_PLACEHOLDER_RE.findall(general))
    if not numbers:
        raise ResponseParseError("PLACEHOLDER_MISMATCH", "no extracted numbers")
    if placeholders != set(numbers):
        raise ResponseParseError(
            "PLACEHOLDER_MISMATCH",
            f"question uses {sorted(placeholders)}, numbers define {sorted(numbers)}",
        )

    code = _CODE_BLOCK_RE.search(sections["Unified Program"])
    if not code:
        raise ResponseParseError(
            "MISSING_SECTION", "no fenced code block under Unified Program", name="Unified Program"
        )
    try:
        program = validate_template(code.group(1))
    except TemplateError as exc:
        raise ResponseParseError("TEMPLATE_INVALID", str(exc)) from exc
    if set(program.parameters) != placeholders:
        raise ResponseParseError(
            "PLACEHOLDER_MISMATCH",
            f"program takes {list(program.parameters)}, question uses {sorted(placeholders)}",
        )

    constraints_text = sections["Constraints"].strip()
    constraints = parse_constraints(constraints_text, program.parameters, originals=values)
    return ParsedSynthesis(
        general_question=general,
        numbers=numbers,
        values=values,
        program=program,
        constraints=constraints,
        constraints_text=constraints_text,
    )


def parse_bugfix_response(text: str) -> str:
    """Extract the corrected program source from a bug-fix response."""
    sections = _split_sections(text)
    if "Unified Program" not in sections:
        raise ResponseParseError(
            "MISSING_SECTION", "no 'Unified Program' section", name="Unified Program"
        )
    code = _CODE_BLOCK_RE.search(sections["Unified Program"])
    if not code:
        raise ResponseParseError(
            "MISSING_SECTION", "no fenced code block under Unified Program", name="Unified Program"
        )
    return code.group(1)


def _truth_text(record: SynthesisRecord) -> str:
    answer = record.answer
    if answer.kind.value == "numeric":
        return decimal_str(answer.numeric_value)
    if answer.kind.value == "choice":
        label = answer.choice_label
        if record.choices:
            index = ord(label) - ord("A")
            if 0 <= index < len(record.choices):
                return f"{label} ({record.choices[index]})"
        return label
    return answer.text_value


def build_bugfix_prompt(record: SynthesisRecord) -> str:
    """Second-round prompt: prior program verbatim, the failure, the truth,
    and an instruction to return only the minimally corrected program.

    Raises ResponseParseError(NO_PRIOR_ROUND) without a parsed prior program.
    """
    prior = next(
        (r for r in reversed(record.rounds) if r.program_source is not None), None
    )
    if prior is None:
        raise ResponseParseError("NO_PRIOR_ROUND", "no earlier round produced a program")

    if prior.exec_status == "OK":
        feedback = (
            f"The program ran and printed {prior.value_line!r}, which is not the "
            f"correct answer."
        )
    else:
        feedback = f"The program failed to run. {prior.failure_reason or prior.exec_status}"

    parts = [
        "A previous attempt at templating this problem produced a program that "
        "fails verification when the original numbers are substituted in.",
        "Problem:\n" + record.question,
    ]
    if record.choices:
        parts.append("Options:\n" + "\n".join(record.choices))
    parts.extend(
        [
            "Current program:\n```python\n" + prior.program_source.rstrip("\n") + "\n```",
            "Verification failure:\n" + feedback,
            "Correct answer: " + _truth_text(record),
            "Rewrite the program with the smallest modification that makes it "
            "produce the correct answer. Keep the function name, parameter list, "
            "docstring format, and comments. Respond with only the heading line "
            "`### Unified Program` followed by one fenced python code block "
            "containing the corrected program.",
        ]
    )
    return "\n\n".join(parts)


# --- the synthesis loop ------------------------------------------------------


def _local_masking(question: str) -> MaskedQuestion:
    try:
        return mask_question(question, extract_numbers(question))
    except MaskingError:
        return MaskedQuestion(template=question, bindings=())


def _verify_round(
    record: SynthesisRecord,
    parsed: ParsedSynthesis,
    masked: MaskedQuestion,
    round_: SynthesisRound,
    runner: Optional[str],
    limits: ExecutionLimits,
    policy: ComparisonPolicy,
) -> bool:
    try:
        sample = instantiate(
            parsed.program,
            masked,
            parsed.values,
            full_selector(parsed.program.parameters),
            problem_id=record.problem_id,
        )
    except TemplateError as exc:
        round_.parse_error = f"{exc.code}: {exc}"
        return False
    sample = dataclasses.replace(sample, expected_answer=record.answer)
    outcome = verify_sample(sample, limits, policy, runner, choices=record.choices)
    round_.verified = outcome.passed
    if outcome.execution is not None:
        round_.exec_status = outcome.execution.status.value
        round_.value_line = outcome.execution.value_line
    if not outcome.passed:
        round_.failure_reason = outcome.reason
    return outcome.passed


def synthesize(
    problem: SourceProblem,
    completer: Completer,
    config: SynthesisConfig = SynthesisConfig(),
    runner: Optional[str] = None,
    limits: ExecutionLimits = ExecutionLimits(),
    policy: ComparisonPolicy = ComparisonPolicy(),
) -> SynthesisRecord:
    """Run the full synthesis loop for one problem.

    Ends VERIFIED only when the final round's program executes and matches
    ground truth; otherwise the status reflects the last round's failure.
    """
    record = SynthesisRecord(
        problem_id=problem.id,
        source=problem.source,
        question=problem.question,
        answer=problem.answer,
        choices=problem.choices,
        status=SynthesisStatus.PARSE_FAILED,
    )
    local_masked = _local_masking(problem.question)

    prompt = build_multitask_prompt(problem)
    try:
        response = completer.complete(prompt, config.model, config.temperature, config.request_timeout_s)
    except ClientError as exc:
        record.rounds.append(SynthesisRound(prompt=prompt, response="", parse_error=str(exc)))
        record.status = SynthesisStatus.BUDGET_EXHAUSTED
        return record

    round_ = SynthesisRound(prompt=prompt, response=response)
    parsed: Optional[ParsedSynthesis] = None
    masked: Optional[MaskedQuestion] = None
    try:
        parsed = parse_response(response)
        check = crosscheck_masking(local_masked, parsed.general_question, parsed.numbers)
        record.crosscheck_warnings = list(check.warnings)
        if not check.passed:
            raise ResponseParseError("CROSSCHECK_FAILED", check.reason or "ROUNDTRIP_MISMATCH")
        masked = check.masked
    except (ResponseParseError, ConstraintError, MaskingError) as exc:
        round_.parse_error = f"{exc.code}: {exc}"
        record.rounds.append(round_)
        record.status = SynthesisStatus.PARSE_FAILED
        return record

    round_.program_source = parsed.program.source
    passed = _verify_round(record, parsed, masked, round_, runner, limits, policy)
    record.rounds.append(round_)

    if not passed:
        for _ in range(config.max_fix_rounds):
            if round_.parse_error and round_.program_source is None:
                break  # nothing to repair
            try:
                fix_prompt = build_bugfix_prompt(record)
            except ResponseParseError:
                break
            try:
                response = completer.complete(
                    fix_prompt, config.model, config.temperature, config.request_timeout_s
                )
            except ClientError as exc:
                record.rounds.append(
                    SynthesisRound(prompt=fix_prompt, response="", parse_error=str(exc))
                )
                record.status = SynthesisStatus.BUDGET_EXHAUSTED
                return record
            round_ = SynthesisRound(prompt=fix_prompt, response=response)
            try:
                new_source = parse_bugfix_response(response)
                new_program = validate_template(new_source)
                if set(new_program.parameters) != set(parsed.program.parameters):
                    raise ResponseParseError(
                        "PLACEHOLDER_MISMATCH",
                        f"fix changed parameters to {list(new_program.parameters)}",
                    )
            except TemplateError as exc:
                round_.parse_error = f"TEMPLATE_INVALID: {exc}"
                record.rounds.append(round_)
                continue
            except ResponseParseError as exc:
                round_.parse_error = f"{exc.code}: {exc}"
                record.rounds.append(round_)
                continue
            parsed = dataclasses.replace(parsed, program=new_program)
            round_.program_source = new_source
            passed = _verify_round(record, parsed, masked, round_, runner, limits, policy)
            record.rounds.append(round_)
            if passed:
                break

    last = record.rounds[-1]
    if passed:
        record.status = SynthesisStatus.VERIFIED
        record.masked = masked
        record.template = parsed.program
        record.numbers = parsed.numbers
        record.constraints_text = parsed.constraints_text
    elif last.parse_error is not None:
        record.status = SynthesisStatus.PARSE_FAILED
    elif last.exec_status is not None and last.exec_status != "OK":
        record.status = SynthesisStatus.EXEC_FAILED
    else:
        record.status = SynthesisStatus.WRONG_ANSWER
    return record


def synthesize_corpus(
    problems: Sequence[SourceProblem],
    completer: Completer,
    config: SynthesisConfig = SynthesisConfig(),
    runner: Optional[str] = None,
    limits: ExecutionLimits = ExecutionLimits(),
    policy: ComparisonPolicy = ComparisonPolicy(),
    workers: int = 1,
) -> list[SynthesisRecord]:
    """Synthesize every problem; output order always matches input order."""
    if workers <= 1:
        return [
            synthesize(p, completer, config, runner, limits, policy) for p in problems
        ]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(
            pool.map(
                lambda p: synthesize(p, completer, config, runner, limits, policy), problems
            )
        )


# --- record persistence ------------------------------------------------------


def record_to_json(record: SynthesisRecord) -> dict:
    return {
        "problem_id": record.problem_id,
        "source": record.source.value,
        "question": record.question,
        "answer": answer_to_json(record.answer),
        "choices": list(record.choices) if record.choices else None,
        "status": record.status.value,
        "masked": masked_to_json(record.masked) if record.masked else None,
        "template": record.template.source if record.template else None,
        "numbers": list(record.numbers.items()) if record.numbers else None,
        "constraints": record.constraints_text,
        "crosscheck_warnings": record.crosscheck_warnings,
        "rounds": [
            {
                "prompt": r.prompt,
                "response": r.response,
                "parse_error": r.parse_error,
                "program_source": r.program_source,
                "verified": r.verified,
                "exec_status": r.exec_status,
                "value_line": r.value_line,
                "failure_reason": r.failure_reason,
            }
            for r in record.rounds
        ],
    }


def record_from_json(data: dict) -> SynthesisRecord:
    record = SynthesisRecord(
        problem_id=data["problem_id"],
        source=Source(data["source"]),
        question=data["question"],
        answer=answer_from_json(data["answer"]),
        choices=tuple(data["choices"]) if data.get("choices") else None,
        status=SynthesisStatus(data["status"]),
        masked=masked_from_json(data["masked"]) if data.get("masked") else None,
        template=validate_template(data["template"]) if data.get("template") else None,
        numbers=dict(data["numbers"]) if data.get("numbers") else None,
        constraints_text=data.get("constraints", ""),
        crosscheck_warnings=list(data.get("crosscheck_warnings", [])),
    )
    for r in data.get("rounds", []):
        record.rounds.append(
            SynthesisRound(
                prompt=r["prompt"],
                response=r["response"],
                parse_error=r.get("parse_error"),
                program_source=r.get("program_source"),
                verified=r.get("verified"),
                exec_status=r.get("exec_status"),
                value_line=r.get("value_line"),
                failure_reason=r.get("failure_reason"),
            )
        )
    return record


def record_constraints(record: SynthesisRecord) -> list[VariableConstraint]:
    """Re-parse a verified record's constraints with its original values."""
    if record.template is None or record.masked is None:
        raise ValueError(f"{record.problem_id}: record has no verified template")
    return parse_constraints(
        record.constraints_text,
        record.template.parameters,
        originals=record.masked.original_assignment(),
    )


def write_records(records: Sequence[SynthesisRecord], path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record), ensure_ascii=False) + "\n")


def read_records(path) -> list[SynthesisRecord]:
    text = Path(path).read_text(encoding="utf-8")
    return [record_from_json(json.loads(line)) for line in text.splitlines() if line.strip()]
