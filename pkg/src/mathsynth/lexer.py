"""Lossless token scanner for the Python subset used by unified programs.

Concatenating the text of every token reproduces the input byte for byte:
INDENT tokens carry the leading whitespace they introduce, DEDENT tokens are
empty, and all other tokens hold their exact source text. That property is
what makes token-level identifier substitution safe — strings and comments
are opaque single tokens that substitution never looks inside.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .errors import TemplateError


class TokenKind(Enum):
    IDENT = "ident"
    NUMBER = "number"
    STRING = "string"
    COMMENT = "comment"
    OP = "op"
    NEWLINE = "newline"
    INDENT = "indent"
    DEDENT = "dedent"
    OTHER = "other"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    col: int


_STRING_BODY = (
    r"'''(?:\\[\s\S]|[^\\])*?'''"
    r'|"""(?:\\[\s\S]|[^\\])*?"""'
    r"|'(?:\\[\s\S]|[^'\\\n])*'"
    r'|"(?:\\[\s\S]|[^"\\\n])*"'
)

_MASTER_RE = re.compile(
    r"(?P<comment>\#[^\n\r]*)"
    rf"|(?P<string>(?:[rRbBuUfF]{{1,2}})?(?:{_STRING_BODY}))"
    r"|(?P<number>0[xX][0-9a-fA-F_]+|0[oO][0-7_]+|0[bB][01_]+"
    r"|(?:\d[\d_]*(?:\.[\d_]*)?|\.\d[\d_]*)(?:[eE][+-]?\d[\d_]*)?[jJ]?)"
    r"|(?P<ident>[^\W\d]\w*)"
    r"|(?P<op>\*\*=|//=|>>=|<<=|!=|>=|<=|==|->|:=|\+=|-=|\*=|/=|%=|@=|&=|\|=|\^=|\*\*|//|<<|>>"
    r"|[-+*/%@&|^~<>=.,:;()\[\]{}])"
    r"|(?P<newline>\r\n|\r|\n)"
    r"|(?P<ws>[ \t\f]+|\\(?:\r\n|\r|\n))"
    r"|(?P<other>[\s\S])"
)

_LINE_WS_RE = re.compile(r"[ \t]*")

_OPEN = {"(", "[", "{"}
_CLOSE = {")", "]", "}"}

_KIND_BY_GROUP = {
    "comment": TokenKind.COMMENT,
    "string": TokenKind.STRING,
    "number": TokenKind.NUMBER,
    "ident": TokenKind.IDENT,
    "op": TokenKind.OP,
    "newline": TokenKind.NEWLINE,
    "ws": TokenKind.OTHER,
    "other": TokenKind.OTHER,
}


def tokenize_source(source: str) -> list[Token]:
    """Scan source into lossless tokens.

    Raises TemplateError with code UNTERMINATED_STRING when a quote never
    closes, and BAD_INDENT when a line's indentation matches no level on the
    indent stack.
    """
    tokens: list[Token] = []
    stack = [""]
    pos = 0
    line = 1
    col = 0
    depth = 0
    at_line_start = True
    n = len(source)

    def emit(kind: TokenKind, text: str):
        nonlocal line, col
        tokens.append(Token(kind=kind, text=text, line=line, col=col))
        newlines = text.count("\n") + text.count("\r") - text.count("\r\n")
        if newlines:
            line += newlines
            tail = re.split(r"\r\n|\r|\n", text)[-1]
            col = len(tail)
        else:
            col += len(text)

    while pos < n:
        if at_line_start and depth == 0:
            at_line_start = False
            ws = _LINE_WS_RE.match(source, pos).group()
            after = source[pos + len(ws) : pos + len(ws) + 1]
            if after in ("", "\n", "\r", "#"):
                # Blank or comment-only lines never move the indent stack.
                if ws:
                    emit(TokenKind.OTHER, ws)
            else:
                top = stack[-1]
                if ws == top:
                    if ws:
                        emit(TokenKind.OTHER, ws)
                elif ws.startswith(top) and len(ws) > len(top):
                    stack.append(ws)
                    emit(TokenKind.INDENT, ws)
                elif ws in stack:
                    while stack[-1] != ws:
                        stack.pop()
                        emit(TokenKind.DEDENT, "")
                    if ws:
                        emit(TokenKind.OTHER, ws)
                else:
                    raise TemplateError(
                        "BAD_INDENT", f"line {line}: indentation matches no open block"
                    )
            pos += len(ws)
            continue

        m = _MASTER_RE.match(source, pos)
        group = m.lastgroup
        text = m.group()
        if group == "other" and text in ("'", '"'):
            raise TemplateError("UNTERMINATED_STRING", f"line {line}: quote never closes")
        kind = _KIND_BY_GROUP[group]
        if kind is TokenKind.OP:
            for ch in text:
                if ch in _OPEN:
                    depth += 1
                elif ch in _CLOSE:
                    depth = max(0, depth - 1)
        emit(kind, text)
        pos = m.end()
        if kind is TokenKind.NEWLINE and depth == 0:
            at_line_start = True

    while len(stack) > 1:
        stack.pop()
        tokens.append(Token(kind=TokenKind.DEDENT, text="", line=line, col=col))
    return tokens


def render_tokens(tokens: Iterable[Token]) -> str:
    """Inverse of tokenize_source: exact source reconstruction."""
    return "".join(tok.text for tok in tokens)


_INSIGNIFICANT = frozenset(
    {TokenKind.NEWLINE, TokenKind.INDENT, TokenKind.DEDENT, TokenKind.OTHER, TokenKind.COMMENT}
)


def significant(tokens: Iterable[Token]) -> list[Token]:
    """Tokens that carry syntax (drops whitespace, comments, layout)."""
    return [tok for tok in tokens if tok.kind not in _INSIGNIFICANT]
