import pytest
from hypothesis import given
from hypothesis import strategies as st

from mathsynth.errors import TemplateError
from mathsynth.lexer import TokenKind, render_tokens, significant, tokenize_source

SAMPLES = [
    "",
    "x = 1\n",
    "def f(a, b):\n    return a + b\n",
    "def f():\n    '''doc'''\n    # comment\n    return 1\n",
    'text = "hello # not a comment"\n',
    "s = 'it\\'s'\n",
    'multi = """line one\nline two"""\n',
    "r = r'raw\\n'\n",
    "f_ = f'{x}'\n",
    "nums = [1, 0x1F, 0o17, 0b101, 1_000, 2.5e-3, 3j]\n",
    "a = (1 +\n     2)\n",
    "b = [\n    1,\n    2,\n]\n",
    "c = 1 \\\n    + 2\n",
    "if x:\n    if y:\n        pass\n    else:\n        pass\n",
    "def f():\n\n    # blank line above\n    return 0\n",
    "while True:\n    pass\n# trailing comment\n",
    "x=1;y=2\n",
    "d = {'k': 'v'}\n",
    "x **= 2\ny //= 3\nz := 0\n",
    "def g():\n    return 1\n\n\n",
    "   \n\t\n",
    "x = 1\r\ny = 2\r\n",
    "no_trailing_newline = 1",
    "def f():\n    s = '''a\n    b'''\n    return s\n",
]


@pytest.mark.parametrize("source", SAMPLES)
def test_round_trip_exact(source):
    assert render_tokens(tokenize_source(source)) == source


def test_token_kinds_basic():
    tokens = tokenize_source("def f(a):\n    # note\n    return a * 2\n")
    idents = [t.text for t in tokens if t.kind is TokenKind.IDENT]
    # Keywords are IDENT-shaped words here; substitution matches by text.
    assert idents == ["def", "f", "a", "return", "a"]
    comments = [t.text for t in tokens if t.kind is TokenKind.COMMENT]
    assert comments == ["# note"]


def test_indent_dedent_balance():
    source = "if a:\n    if b:\n        x = 1\ny = 2\n"
    tokens = tokenize_source(source)
    indents = sum(1 for t in tokens if t.kind is TokenKind.INDENT)
    dedents = sum(1 for t in tokens if t.kind is TokenKind.DEDENT)
    assert indents == 2 and dedents == 2
    assert all(t.text == "" for t in tokens if t.kind is TokenKind.DEDENT)


def test_indent_inside_brackets_ignored():
    source = "x = [\n        1,\n  2,\n]\n"
    tokens = tokenize_source(source)
    assert not any(t.kind in (TokenKind.INDENT, TokenKind.DEDENT) for t in tokens)
    assert render_tokens(tokens) == source


def test_unterminated_string():
    with pytest.raises(TemplateError) as exc_info:
        tokenize_source("s = 'oops\n")
    assert exc_info.value.code == "UNTERMINATED_STRING"


def test_unterminated_triple_string():
    with pytest.raises(TemplateError) as exc_info:
        tokenize_source('s = """never closed\n')
    assert exc_info.value.code == "UNTERMINATED_STRING"


def test_bad_indent():
    source = "if a:\n        x = 1\n    y = 2\n"
    with pytest.raises(TemplateError) as exc_info:
        tokenize_source(source)
    assert exc_info.value.code == "BAD_INDENT"


def test_comment_only_lines_carry_no_indent():
    source = "x = 1\n    # indented comment on its own\ny = 2\n"
    tokens = tokenize_source(source)
    assert not any(t.kind in (TokenKind.INDENT, TokenKind.DEDENT) for t in tokens)
    assert render_tokens(tokens) == source


def test_significant_drops_layout():
    tokens = significant(tokenize_source("def f():\n    # hi\n    return 1\n"))
    assert all(
        t.kind not in (TokenKind.NEWLINE, TokenKind.INDENT, TokenKind.DEDENT, TokenKind.OTHER, TokenKind.COMMENT)
        for t in tokens
    )
    assert [t.text for t in tokens] == ["def", "f", "(", ")", ":", "return", "1"]


def test_string_prefixes_stay_one_token():
    for literal in ("b'x'", "rb'x'", "Rb'x'", "f'x'", "u'x'", "B'''x'''"):
        tokens = [t for t in tokenize_source(f"v = {literal}\n") if t.kind is TokenKind.STRING]
        assert len(tokens) == 1 and tokens[0].text == literal


def test_positions_track_lines():
    tokens = tokenize_source("a = 1\nbb = 22\n")
    by_text = {t.text: t for t in tokens if t.kind in (TokenKind.IDENT, TokenKind.NUMBER)}
    assert by_text["a"].line == 1
    assert by_text["bb"].line == 2
    assert by_text["22"].col > by_text["bb"].col


_fragments = st.sampled_from(
    [
        "x", "y1", "_z", "def", "return", "1", "2.5", "1_000", "0x1f",
        "+", "-", "*", "**", "=", "==", "(", ")", "[", "]", ":", ",",
        " ", "  ", "\n", "# c\n", "'s'", '"d"', "\t",
    ]
)


@given(st.lists(_fragments, max_size=40))
def test_round_trip_fuzz(fragments):
    source = "".join(fragments)
    try:
        tokens = tokenize_source(source)
    except TemplateError as exc:
        assert exc.code in ("UNTERMINATED_STRING", "BAD_INDENT")
        return
    assert render_tokens(tokens) == source


@given(st.text(alphabet="abc123 ()[]+*=:#'\"\n\t", max_size=60))
def test_round_trip_hostile_text(source):
    try:
        tokens = tokenize_source(source)
    except TemplateError as exc:
        assert exc.code in ("UNTERMINATED_STRING", "BAD_INDENT")
        return
    assert render_tokens(tokens) == source
