"""Unified program templates: validation, variant selectors, substitution.

A template is a single function `solution(...)` whose parameters are the
masked numbers of a question. Substitution works on tokens, never raw text,
so identifiers inside strings and comments are untouchable by construction.
"""

from __future__ import annotations

import dataclasses
import hashlib
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

from .corpus import GroundTruthAnswer, answer_from_json, answer_to_json
from .errors import TemplateError
from .lexer import Token, TokenKind, tokenize_source
from .masking import KEEP, MaskedQuestion, NumberKind, render_question
from .numform import float_literal

SOLUTION_NAME = "solution"
SELECTOR_CAP = 16
DRIVER_LINE = "print(solution())"

ALLOWED_IMPORTS = frozenset(
    {"math", "fractions", "decimal", "itertools", "functools", "collections"}
)
# Determinism and sandbox hygiene: these names may not appear at all.
DENIED_IDENTIFIERS = frozenset(
    {
        "random",
        "time",
        "datetime",
        "secrets",
        "uuid",
        "os",
        "sys",
        "subprocess",
        "socket",
        "open",
        "input",
        "eval",
        "exec",
        "__import__",
    }
)

_INSIGNIFICANT = frozenset(
    {TokenKind.NEWLINE, TokenKind.INDENT, TokenKind.DEDENT, TokenKind.OTHER, TokenKind.COMMENT}
)
_PARAM_LINE_RE = re.compile(r"^\s*:param\s+(\w+)\s*:")
_RETURN_LINE_RE = re.compile(r"^\s*:return\s*:")
_DOC_PREFIX_RE = re.compile(r"^[rRbBuUfF]{0,2}('''|\"\"\"|'|\")")


@dataclass(frozen=True)
class UnifiedProgram:
    """A validated template; `source` is authoritative, the rest is derived."""

    source: str
    parameters: tuple[str, ...]
    docstring: str
    imports: tuple[str, ...] = ()

    @property
    def digest(self) -> str:
        """Content hash used for provenance and dedup."""
        return hashlib.sha256(self.source.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class VariantSelector:
    """The subset of parameters whose values get substituted."""

    names: frozenset[str]

    def ordered(self, parameters: Sequence[str]) -> tuple[str, ...]:
        return tuple(p for p in parameters if p in self.names)


@dataclass(frozen=True)
class InstantiatedSample:
    question: str
    program: str
    selector: tuple[str, ...]
    retained: tuple[str, ...]
    expected_answer: Optional[GroundTruthAnswer] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.expected_answer is not None and self.retained:
            raise ValueError("expected answer on a partially instantiated sample")

    @property
    def is_full(self) -> bool:
        return not self.retained


@dataclass(frozen=True)
class _Structure:
    """Raw-token indices of the parts instantiation rewrites."""

    lparen: int
    rparen: int
    indent: int
    doc: Optional[int]


class _Cursor:
    """Walks significant tokens while remembering raw indices."""

    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.indices = [i for i, t in enumerate(tokens) if t.kind not in _INSIGNIFICANT]
        self.pos = 0

    def take(self, detail: str) -> tuple[int, Token]:
        if self.pos >= len(self.indices):
            raise TemplateError("NOT_FUNCTION_FORM", f"unexpected end of source: {detail}")
        raw = self.indices[self.pos]
        self.pos += 1
        return raw, self.tokens[raw]


def _expect(cursor: _Cursor, kind: TokenKind, text: Optional[str], detail: str):
    raw, tok = cursor.take(detail)
    if tok.kind is not kind or (text is not None and tok.text != text):
        raise TemplateError("NOT_FUNCTION_FORM", f"{detail}; got {tok.text!r}")
    return raw, tok


def _docstring_quote(text: str) -> tuple[str, str]:
    m = _DOC_PREFIX_RE.match(text)
    if not m:
        raise TemplateError("NOT_FUNCTION_FORM", "docstring is not a plain string")
    quote = m.group(1)
    return text[: m.end()], quote


def _check_docstring(doc_text: str, parameters: Sequence[str]):
    head, quote = _docstring_quote(doc_text)
    content = doc_text[len(head) : -len(quote)]
    param_seq = []
    return_count = 0
    return_after_params = True
    for line in content.split("\n"):
        pm = _PARAM_LINE_RE.match(line)
        if pm:
            param_seq.append(pm.group(1))
            if return_count:
                return_after_params = False
            continue
        if _RETURN_LINE_RE.match(line):
            return_count += 1
    for name in parameters:
        if name not in param_seq:
            raise TemplateError("DOCSTRING_PARAM_MISSING", f"no :param line for {name}", name=name)
    for name in param_seq:
        if name not in parameters:
            raise TemplateError(
                "DOCSTRING_PARAM_EXTRA", f":param line for unknown {name}", name=name
            )
    if param_seq != list(parameters):
        raise TemplateError(
            "DOCSTRING_PARAM_ORDER", f"doc order {param_seq} != signature {list(parameters)}"
        )
    if return_count != 1 or not return_after_params:
        raise TemplateError("DOCSTRING_RETURN_MISSING", "exactly one trailing :return line required")


def validate_template(source: str) -> UnifiedProgram:
    """Check the template form and return the validated program.

    Raises TemplateError with codes NOT_FUNCTION_FORM, DOCSTRING_PARAM_MISSING
    / _EXTRA / _ORDER, DOCSTRING_RETURN_MISSING, UNUSED_PARAMETER,
    IMPORT_DENIED, IDENTIFIER_DENIED, or LEX_ERROR.
    """
    try:
        tokens = tokenize_source(source)
    except TemplateError as exc:
        raise TemplateError("LEX_ERROR", str(exc)) from exc

    cursor = _Cursor(tokens)
    def_raw, def_tok = cursor.take("expected a function definition")
    if def_tok.kind is not TokenKind.IDENT or def_tok.text != "def":
        raise TemplateError("NOT_FUNCTION_FORM", f"expected 'def', got {def_tok.text!r}")
    if any(t.kind is TokenKind.INDENT for t in tokens[:def_raw]):
        raise TemplateError("NOT_FUNCTION_FORM", "function definition is indented")

    _, name_tok = cursor.take("expected function name")
    if name_tok.kind is not TokenKind.IDENT or name_tok.text != SOLUTION_NAME:
        raise TemplateError(
            "NOT_FUNCTION_FORM", f"function must be named {SOLUTION_NAME!r}, got {name_tok.text!r}"
        )
    lparen_raw, _ = _expect(cursor, TokenKind.OP, "(", "expected '(' after function name")

    parameters: list[str] = []
    rparen_raw = lparen_raw
    while True:
        raw, tok = cursor.take("expected parameter or ')'")
        if tok.kind is TokenKind.OP and tok.text == ")":
            rparen_raw = raw
            break
        if tok.kind is not TokenKind.IDENT:
            raise TemplateError("NOT_FUNCTION_FORM", f"bad parameter list near {tok.text!r}")
        if tok.text in parameters:
            raise TemplateError("NOT_FUNCTION_FORM", f"duplicate parameter {tok.text!r}")
        parameters.append(tok.text)
        raw, sep = cursor.take("expected ',' or ')'")
        if sep.kind is TokenKind.OP and sep.text == ")":
            rparen_raw = raw
            break
        if not (sep.kind is TokenKind.OP and sep.text == ","):
            raise TemplateError(
                "NOT_FUNCTION_FORM", f"plain parameters only; got {sep.text!r}"
            )
    if not parameters:
        raise TemplateError("NOT_FUNCTION_FORM", "parameter list is empty")
    for tok in tokens[lparen_raw:rparen_raw]:
        if tok.kind is TokenKind.COMMENT:
            raise TemplateError("NOT_FUNCTION_FORM", "comment inside the signature")
    colon_raw, _ = _expect(cursor, TokenKind.OP, ":", "expected ':' after signature")

    # The def line must end here; the body must be an indented block.
    i = colon_raw + 1
    while i < len(tokens) and tokens[i].kind in (TokenKind.OTHER, TokenKind.COMMENT):
        i += 1
    if i >= len(tokens) or tokens[i].kind is not TokenKind.NEWLINE:
        raise TemplateError("NOT_FUNCTION_FORM", "statement on the def line")
    i += 1
    while i < len(tokens) and tokens[i].kind in (
        TokenKind.OTHER,
        TokenKind.COMMENT,
        TokenKind.NEWLINE,
    ):
        i += 1
    if i >= len(tokens) or tokens[i].kind is not TokenKind.INDENT:
        raise TemplateError("NOT_FUNCTION_FORM", "function body is empty")

    # Walk the body to the dedent that closes the function.
    level = 1
    body: list[Token] = []
    i += 1
    while i < len(tokens) and level > 0:
        tok = tokens[i]
        if tok.kind is TokenKind.INDENT:
            level += 1
        elif tok.kind is TokenKind.DEDENT:
            level -= 1
        if level > 0:
            body.append(tok)
        i += 1
    for tok in tokens[i:]:
        if tok.kind not in _INSIGNIFICANT:
            raise TemplateError(
                "NOT_FUNCTION_FORM", f"top-level statement after the function: {tok.text!r}"
            )

    body_sig = [t for t in body if t.kind not in _INSIGNIFICANT]
    if not body_sig or body_sig[0].kind is not TokenKind.STRING:
        raise TemplateError(
            "DOCSTRING_PARAM_MISSING",
            f"docstring missing (no :param line for {parameters[0]})",
            name=parameters[0],
        )
    docstring = body_sig[0].text
    _check_docstring(docstring, parameters)

    rest = body_sig[1:]
    ident_texts = {t.text for t in rest if t.kind is TokenKind.IDENT}
    if "return" not in ident_texts:
        raise TemplateError("NOT_FUNCTION_FORM", "no return statement")
    for name in parameters:
        if name not in ident_texts:
            raise TemplateError("UNUSED_PARAMETER", f"{name} never used in the body", name=name)

    imports: list[str] = []
    for idx, tok in enumerate(rest):
        if tok.kind is not TokenKind.IDENT:
            continue
        if tok.text in DENIED_IDENTIFIERS:
            raise TemplateError("IDENTIFIER_DENIED", f"{tok.text} is not allowed", name=tok.text)
        if tok.text in ("import", "from"):
            if idx + 1 >= len(rest) or rest[idx + 1].kind is not TokenKind.IDENT:
                raise TemplateError("NOT_FUNCTION_FORM", "malformed import")
            if tok.text == "import" and idx > 0 and rest[idx - 1].text == "from":
                continue  # module already checked at the 'from' token
            module = rest[idx + 1].text
            if module not in ALLOWED_IMPORTS:
                raise TemplateError("IMPORT_DENIED", f"import of {module}", name=module)
            imports.append(module)

    return UnifiedProgram(
        source=source,
        parameters=tuple(parameters),
        docstring=docstring,
        imports=tuple(sorted(set(imports))),
    )


def enumerate_selectors(
    k: int, parameters: Optional[Sequence[str]] = None
) -> list[VariantSelector]:
    """All 2^k - 1 non-empty selectors, in binary counting order.

    Bit i of the counter corresponds to parameters[i]. Raises
    TemplateError(K_OUT_OF_RANGE) outside 1..SELECTOR_CAP.
    """
    if k < 1 or k > SELECTOR_CAP:
        raise TemplateError("K_OUT_OF_RANGE", f"k={k} outside 1..{SELECTOR_CAP}")
    if parameters is None:
        parameters = tuple(f"n{i + 1}" for i in range(k))
    parameters = tuple(parameters)
    if len(parameters) != k:
        raise TemplateError("K_OUT_OF_RANGE", f"{len(parameters)} names for k={k}")
    selectors = []
    for mask in range(1, 1 << k):
        names = frozenset(parameters[i] for i in range(k) if mask >> i & 1)
        selectors.append(VariantSelector(names=names))
    return selectors


def full_selector(parameters: Sequence[str]) -> VariantSelector:
    return VariantSelector(names=frozenset(parameters))


def format_number(value, kind: NumberKind) -> str:
    """Program-literal form of a value.

    Percents become their fractional value (question "20%" -> literal 0.2).
    Fractions and negative values are parenthesized so substitution into an
    expression cannot change precedence (`n**2` with n=-5 must stay (-5)**2).
    """
    value = Fraction(value)
    if kind is NumberKind.INT:
        if value.denominator != 1:
            raise TemplateError("FORMAT_MISMATCH", f"non-integer {value} for INT slot")
        s = str(value.numerator)
    elif kind is NumberKind.FLOAT:
        s = float_literal(value)
    elif kind is NumberKind.PERCENT:
        s = float_literal(value / 100)
    else:
        return f"({value.numerator}/{value.denominator})"
    return f"({s})" if s.startswith("-") else s


def _structure(tokens: list[Token]) -> _Structure:
    """Locate signature/docstring positions in a pre-validated template."""
    sig = [i for i, t in enumerate(tokens) if t.kind not in _INSIGNIFICANT]
    it = iter(sig)
    next(it)  # def
    next(it)  # name
    lparen = next(it)
    rparen = next(i for i in it if tokens[i].kind is TokenKind.OP and tokens[i].text == ")")
    indent = next(
        i for i in range(rparen, len(tokens)) if tokens[i].kind is TokenKind.INDENT
    )
    doc = next(
        (i for i in sig if i > indent),
        None,
    )
    if doc is not None and tokens[doc].kind is not TokenKind.STRING:
        doc = None
    return _Structure(lparen=lparen, rparen=rparen, indent=indent, doc=doc)


def _drop_param_lines(doc_text: str, names) -> str:
    kept = []
    for line in doc_text.split("\n"):
        m = _PARAM_LINE_RE.match(line)
        if m and m.group(1) in names:
            continue
        kept.append(line)
    return "\n".join(kept)


def _is_word_char(ch: str) -> bool:
    return bool(ch) and (ch.isalnum() or ch == "_")


def instantiate(
    template: UnifiedProgram,
    masked: MaskedQuestion,
    assignment: Mapping[str, Fraction],
    selector: VariantSelector,
    problem_id: str = "",
) -> InstantiatedSample:
    """Substitute the selected parameters into program and question.

    Selected names leave the signature, lose their :param docstring line, and
    every body occurrence becomes the formatted literal. The full selector
    also appends the print driver, making the program executable end to end.

    Raises TemplateError(SELECTOR_NOT_SUBSET | MISSING_VALUE |
    SUBSTITUTION_COLLISION | FORMAT_MISMATCH).
    """
    params = template.parameters
    selected = set(selector.names)
    if not selected or not selected.issubset(params):
        raise TemplateError(
            "SELECTOR_NOT_SUBSET", f"selector {sorted(selected)} vs parameters {list(params)}"
        )
    for name in sorted(selected):
        if name not in assignment:
            raise TemplateError("MISSING_VALUE", f"no value for {name}", name=name)

    kinds = masked.kinds()
    literals = {
        name: format_number(assignment[name], kinds.get(name, NumberKind.INT))
        for name in selected
    }
    tokens = tokenize_source(template.source)
    st = _structure(tokens)
    retained = tuple(p for p in params if p not in selected)

    def _rendered(idx: int) -> str:
        tok = tokens[idx]
        if (
            tok.kind is TokenKind.IDENT
            and tok.text in literals
            and not (st.lparen < idx < st.rparen)
        ):
            return literals[tok.text]
        return tok.text

    out: list[str] = []
    last_char = ""
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if i == st.lparen:
            piece = "(" + ", ".join(retained) + ")"
            i = st.rparen + 1
        elif st.doc is not None and i == st.doc:
            piece = _drop_param_lines(tok.text, selected)
            i += 1
        elif tok.kind is TokenKind.IDENT and tok.text in literals:
            lit = literals[tok.text]
            nxt = ""
            for j in range(i + 1, len(tokens)):
                candidate = _rendered(j)
                if candidate:
                    nxt = candidate[0]
                    break
            if last_char == "." or (_is_word_char(last_char) and _is_word_char(lit[0])):
                raise TemplateError(
                    "SUBSTITUTION_COLLISION", f"{tok.text} at line {tok.line} abuts {last_char!r}"
                )
            if (nxt == "." and lit[-1].isdigit()) or (
                _is_word_char(nxt) and _is_word_char(lit[-1])
            ):
                raise TemplateError(
                    "SUBSTITUTION_COLLISION", f"{tok.text} at line {tok.line} abuts {nxt!r}"
                )
            piece = lit
            i += 1
        else:
            piece = tok.text
            i += 1
        if piece:
            out.append(piece)
            last_char = piece[-1]

    program = "".join(out)
    if not retained:
        if not program.endswith("\n"):
            program += "\n"
        program += DRIVER_LINE + "\n"

    render_assignment = {
        name: (assignment[name] if name in selected else KEEP) for name in masked.names
    }
    question = render_question(masked, render_assignment)

    return InstantiatedSample(
        question=question,
        program=program,
        selector=tuple(p for p in params if p in selected),
        retained=retained,
        expected_answer=None,
        provenance={
            "problem_id": problem_id,
            "template_digest": template.digest,
            "selector": [p for p in params if p in selected],
        },
    )


def _strip_docstring_source(source: str) -> str:
    tokens = tokenize_source(source)
    st = _structure(tokens)
    if st.doc is None:
        return source
    drop = {st.doc}
    j = st.doc + 1
    # Consume the remainder of the docstring line, through its newline.
    while j < len(tokens) and tokens[j].kind in (TokenKind.OTHER, TokenKind.COMMENT):
        drop.add(j)
        j += 1
    if j < len(tokens) and tokens[j].kind is TokenKind.NEWLINE:
        drop.add(j)
        j += 1
    # The INDENT before the docstring already carries this line's leading
    # whitespace, so the next line must not contribute it twice.
    if (
        st.doc > 0
        and tokens[st.doc - 1].kind is TokenKind.INDENT
        and j < len(tokens)
        and tokens[j].kind is TokenKind.OTHER
        and tokens[j].text.strip() == ""
        and j + 1 < len(tokens)
        and tokens[j + 1].kind is not TokenKind.NEWLINE
    ):
        drop.add(j)
    return "".join(tok.text for idx, tok in enumerate(tokens) if idx not in drop)


def strip_docstring(
    obj: Union[str, UnifiedProgram, InstantiatedSample]
) -> Union[str, UnifiedProgram, InstantiatedSample]:
    """Remove the docstring without changing behavior. Idempotent."""
    if isinstance(obj, str):
        return _strip_docstring_source(obj)
    if isinstance(obj, UnifiedProgram):
        return dataclasses.replace(obj, source=_strip_docstring_source(obj.source), docstring="")
    if isinstance(obj, InstantiatedSample):
        return dataclasses.replace(obj, program=_strip_docstring_source(obj.program))
    raise TypeError(f"cannot strip docstring from {type(obj).__name__}")


def sample_to_json(sample: InstantiatedSample) -> dict:
    return {
        "question": sample.question,
        "program": sample.program,
        "selector": list(sample.selector),
        "retained": list(sample.retained),
        "expected": answer_to_json(sample.expected_answer) if sample.expected_answer else None,
        "provenance": sample.provenance,
    }


def sample_from_json(data: dict) -> InstantiatedSample:
    return InstantiatedSample(
        question=data["question"],
        program=data["program"],
        selector=tuple(data.get("selector", ())),
        retained=tuple(data.get("retained", ())),
        expected_answer=answer_from_json(data["expected"]) if data.get("expected") else None,
        provenance=data.get("provenance", {}),
    )
