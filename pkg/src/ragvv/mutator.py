"""Tokenizer-based bug injection and defect classification.

The lexer is deliberately shallow: it recognizes keywords, identifiers,
numbers, single-line string literals, operators, punctuation, whitespace
runs, newlines and comments, and it is lossless -- concatenating token
texts reproduces the input byte for byte. That makes it safe to run on
broken code, which matters because every mutated snippet is broken by
construction.

Seven injection operators realize the defect taxonomy:

* missing_colon         -- delete the ':' that ends a block header
* missing_parenthesis   -- delete one '(' or ')'
* missing_quotation     -- delete one delimiter quote of a string literal
* missing_comma         -- delete a ',' outside string literals
* mismatched_quotation  -- close a string with the other quote character
* mismatched_bracket    -- swap one closing bracket for a different closer
* keyword_as_identifier -- rename a bound identifier (all occurrences)
                           to a Python keyword

`classify_defect` recovers the operator class and line from a token-stream
diff without ever consulting an LLM, so generated fixtures carry ground
truth that is independently checkable.
"""
from __future__ import annotations

import keyword
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .corpus import BugLabel, BugVariant, InspectionTask, hash64

__all__ = [
    "TokenKind",
    "Token",
    "MutationResult",
    "AmbiguousDiffError",
    "tokenize",
    "detokenize",
    "inject_bug",
    "classify_defect",
    "generate_fixture_task",
]

KEYWORDS = frozenset(keyword.kwlist)
HEADER_KEYWORDS = frozenset(
    ["def", "if", "elif", "else", "for", "while", "class", "try", "except", "finally", "with"]
)
#: Keywords used by the keyword_as_identifier operator, cycled by seed.
RENAME_KEYWORDS = ("class", "for", "if", "return", "def")

_OPERATORS = (
    "**=", "//=", ">>=", "<<=", "...",
    "==", "!=", ">=", "<=", "->", ":=", "+=", "-=", "*=", "/=", "%=",
    "&=", "|=", "^=", "@=", ">>", "<<", "**", "//",
    "+", "-", "*", "/", "%", "@", "&", "|", "^", "~", "<", ">", "=",
)
_PUNCT_CHARS = "()[]{},:;."
_OPENERS = "([{"
_CLOSERS = ")]}"
_QUOTES = "'\""


class TokenKind(Enum):
    KEYWORD = "keyword"
    IDENTIFIER = "identifier"
    NUMBER = "number"
    STRING_LITERAL = "string_literal"
    OPERATOR = "operator"
    PUNCT = "punct"
    NEWLINE = "newline"
    INDENT = "indent"
    COMMENT = "comment"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    col: int


@dataclass(frozen=True)
class MutationResult:
    mutated_source: str
    label: BugLabel
    defect_line: int


class AmbiguousDiffError(ValueError):
    """The two sources differ by more than one operator application."""


def _is_ident_start(ch: str) -> bool:
    return ch.isalpha() or ch == "_"


def _is_ident_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def tokenize(source: str) -> list[Token]:
    """Lossless lexing of (possibly broken) Python-like source.

    Never raises: bytes that fit no other class become PUNCT tokens, and a
    string literal with no closing delimiter extends to end of line.
    """
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 0
    n = len(source)

    def emit(kind: TokenKind, text: str) -> None:
        nonlocal i, line, col
        tokens.append(Token(kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n") - 1
        else:
            col += len(text)
        i += len(text)

    while i < n:
        ch = source[i]
        if ch == "\n":
            emit(TokenKind.NEWLINE, "\n")
        elif ch == "\r":
            emit(TokenKind.NEWLINE, "\r\n" if source[i : i + 2] == "\r\n" else "\r")
        elif ch in " \t":
            j = i
            while j < n and source[j] in " \t":
                j += 1
            emit(TokenKind.INDENT, source[i:j])
        elif ch == "#":
            j = source.find("\n", i)
            j = n if j == -1 else j
            emit(TokenKind.COMMENT, source[i:j])
        elif ch in _QUOTES:
            j = i + 1
            while j < n and source[j] != "\n":
                if source[j] == "\\" and j + 1 < n:
                    j += 2
                    continue
                if source[j] == ch:
                    j += 1
                    break
                j += 1
            emit(TokenKind.STRING_LITERAL, source[i:j])
        elif _is_ident_start(ch):
            j = i
            while j < n and _is_ident_char(source[j]):
                j += 1
            word = source[i:j]
            kind = TokenKind.KEYWORD if word in KEYWORDS else TokenKind.IDENTIFIER
            emit(kind, word)
        elif ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and (source[j].isalnum() or source[j] in "._"):
                # exponent sign, e.g. 1e-3
                if source[j] in "eE" and j + 1 < n and source[j + 1] in "+-" and j > i:
                    j += 2
                    continue
                j += 1
            emit(TokenKind.NUMBER, source[i:j])
        else:
            for op in _OPERATORS:
                if source.startswith(op, i):
                    emit(TokenKind.OPERATOR, op)
                    break
            else:
                # punctuation, backslash continuations, and anything unknown
                emit(TokenKind.PUNCT, ch)
    return tokens


def detokenize(tokens: list[Token]) -> str:
    return "".join(t.text for t in tokens)


def _string_is_terminated(text: str) -> bool:
    """True when a STRING_LITERAL token carries both delimiter quotes."""
    if len(text) < 2 or text[-1] != text[0]:
        return False
    # the final quote must not be consumed by an escape
    j = 1
    while j < len(text) - 1:
        j += 2 if text[j] == "\\" else 1
    return j == len(text) - 1


def _rng(seed: int, label: BugLabel) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(hash64(seed, f"site:{label.value}")))


def _bracket_depth_sites(tokens: list[Token]) -> list[int]:
    """Indices of header-ending ':' tokens (depth-0 colon on a header line)."""
    sites: list[int] = []
    depth = 0
    line_head: str | None = None  # first significant token text on current line
    line_head_is_keyword = False
    for idx, tok in enumerate(tokens):
        if tok.kind is TokenKind.NEWLINE:
            line_head = None
            line_head_is_keyword = False
            continue
        if tok.kind in (TokenKind.INDENT, TokenKind.COMMENT):
            continue
        if line_head is None:
            line_head = tok.text
            line_head_is_keyword = tok.kind is TokenKind.KEYWORD and tok.text in HEADER_KEYWORDS
        if tok.kind is TokenKind.PUNCT and tok.text in _OPENERS:
            depth += 1
        elif tok.kind is TokenKind.PUNCT and tok.text in _CLOSERS:
            depth = max(0, depth - 1)
        elif (
            tok.kind is TokenKind.PUNCT
            and tok.text == ":"
            and depth == 0
            and line_head_is_keyword
        ):
            sites.append(idx)
            line_head_is_keyword = False  # one colon per header line
    return sites


def _bound_identifiers(tokens: list[Token]) -> list[str]:
    """Names that appear in a binding position (def/class name, assignment
    target, loop target, 'as' alias, def parameter)."""
    significant = [
        t
        for t in tokens
        if t.kind not in (TokenKind.INDENT, TokenKind.NEWLINE, TokenKind.COMMENT)
    ]
    bound: set[str] = set()
    depth = 0
    def_params_at: int | None = None  # depth of an open def parameter list
    pending_def_parens = False
    prev_kw: str | None = None
    for pos, tok in enumerate(significant):
        prev = significant[pos - 1] if pos > 0 else None
        nxt = significant[pos + 1] if pos + 1 < len(significant) else None
        if tok.kind is TokenKind.PUNCT and tok.text in _OPENERS:
            depth += 1
            if pending_def_parens and tok.text == "(":
                def_params_at = depth
                pending_def_parens = False
        elif tok.kind is TokenKind.PUNCT and tok.text in _CLOSERS:
            if def_params_at is not None and depth == def_params_at and tok.text == ")":
                def_params_at = None
            depth = max(0, depth - 1)
        if tok.kind is TokenKind.IDENTIFIER:
            in_params = def_params_at is not None and depth == def_params_at
            if prev_kw in ("def", "class", "for", "as"):
                bound.add(tok.text)
                pending_def_parens = prev_kw == "def"
            elif nxt is not None and nxt.kind is TokenKind.OPERATOR and nxt.text == "=":
                if depth == 0 or in_params:
                    bound.add(tok.text)
            elif in_params and prev is not None and prev.text in ("(", ","):
                bound.add(tok.text)
        prev_kw = tok.text if tok.kind is TokenKind.KEYWORD else None
    return sorted(bound)


def inject_bug(source: str, label: BugLabel, seed: int) -> MutationResult | None:
    """Introduce one defect of the requested class at a seeded-random site.

    Returns None when the source has no eligible site for that class.
    """
    if label is BugLabel.BUG_FREE:
        raise ValueError("cannot inject the bug-free label")
    tokens = tokenize(source)
    rng = _rng(seed, label)

    def pick(items: list):
        return items[int(rng.integers(0, len(items)))]

    if label is BugLabel.MISSING_COLON:
        sites = _bracket_depth_sites(tokens)
        if not sites:
            return None
        idx = pick(sites)
        return _delete_token(tokens, idx, label)

    if label is BugLabel.MISSING_PARENTHESIS:
        sites = [i for i, t in enumerate(tokens) if t.kind is TokenKind.PUNCT and t.text in "()"]
        if not sites:
            return None
        return _delete_token(tokens, pick(sites), label)

    if label is BugLabel.MISSING_COMMA:
        sites = [i for i, t in enumerate(tokens) if t.kind is TokenKind.PUNCT and t.text == ","]
        if not sites:
            return None
        return _delete_token(tokens, pick(sites), label)

    if label is BugLabel.MISSING_QUOTATION:
        strings = [
            i
            for i, t in enumerate(tokens)
            if t.kind is TokenKind.STRING_LITERAL and _string_is_terminated(t.text)
        ]
        if not strings:
            return None
        idx = pick(strings)
        drop_opening = bool(rng.integers(0, 2))
        text = tokens[idx].text
        new_text = text[1:] if drop_opening else text[:-1]
        return _replace_token_text(tokens, idx, new_text, label)

    if label is BugLabel.MISMATCHED_QUOTATION:
        strings = [
            i
            for i, t in enumerate(tokens)
            if t.kind is TokenKind.STRING_LITERAL and _string_is_terminated(t.text)
        ]
        if not strings:
            return None
        idx = pick(strings)
        text = tokens[idx].text
        other = '"' if text[0] == "'" else "'"
        return _replace_token_text(tokens, idx, text[:-1] + other, label)

    if label is BugLabel.MISMATCHED_BRACKET:
        sites = [i for i, t in enumerate(tokens) if t.kind is TokenKind.PUNCT and t.text in _CLOSERS]
        if not sites:
            return None
        idx = pick(sites)
        alternatives = [c for c in _CLOSERS if c != tokens[idx].text]
        return _replace_token_text(tokens, idx, pick(alternatives), label)

    if label is BugLabel.KEYWORD_AS_IDENTIFIER:
        candidates = _bound_identifiers(tokens)
        if not candidates:
            return None
        name = pick(candidates)
        kw = RENAME_KEYWORDS[seed % len(RENAME_KEYWORDS)]
        first_line = None
        pieces: list[str] = []
        for t in tokens:
            if t.kind is TokenKind.IDENTIFIER and t.text == name:
                pieces.append(kw)
                if first_line is None:
                    first_line = t.line
            else:
                pieces.append(t.text)
        assert first_line is not None
        return MutationResult("".join(pieces), label, first_line)

    raise ValueError(f"unhandled label {label!r}")


def _delete_token(tokens: list[Token], idx: int, label: BugLabel) -> MutationResult:
    mutated = "".join(t.text for i, t in enumerate(tokens) if i != idx)
    return MutationResult(mutated, label, tokens[idx].line)


def _replace_token_text(tokens: list[Token], idx: int, new_text: str, label: BugLabel) -> MutationResult:
    pieces = [new_text if i == idx else t.text for i, t in enumerate(tokens)]
    return MutationResult("".join(pieces), label, tokens[idx].line)


def _rename_pair(
    orig: list[Token], mut: list[Token]
) -> tuple[str, str, int] | None:
    """Match a block against the identifier->keyword rename pattern.

    Returns (old name, keyword, first line) when every differing position in
    the block is the same Identifier -> Keyword substitution.
    """
    if len(orig) != len(mut):
        return None
    pair: tuple[str, str] | None = None
    first_line: int | None = None
    for ot, mt in zip(orig, mut):
        if ot.text == mt.text:
            continue
        if ot.kind is TokenKind.IDENTIFIER and mt.kind is TokenKind.KEYWORD:
            if pair is None:
                pair = (ot.text, mt.text)
                first_line = ot.line
            elif pair != (ot.text, mt.text):
                return None
        else:
            return None
    if pair is None or first_line is None:
        return None
    return pair[0], pair[1], first_line


def _single_char_edit(orig_text: str, mut_text: str):
    """Detect a one-character deletion or substitution between two strings."""
    if len(mut_text) == len(orig_text) - 1:
        for i in range(len(orig_text)):
            if orig_text[:i] + orig_text[i + 1 :] == mut_text:
                return ("delete", orig_text[i], None)
        return None
    if len(mut_text) == len(orig_text):
        diffs = [i for i in range(len(orig_text)) if orig_text[i] != mut_text[i]]
        if len(diffs) == 1:
            i = diffs[0]
            return ("replace", orig_text[i], mut_text[i])
        return None
    return None


def classify_defect(original: str, mutated: str) -> tuple[BugLabel, int]:
    """Recover the operator class and defect line from a token-stream diff.

    The differing region is taken as the contiguous envelope between the
    common token prefix and suffix; a quote edit that re-lexes the rest of
    its line therefore stays one region. Returns (BUG_FREE, 0) for
    identical streams; raises AmbiguousDiffError when the envelope cannot
    be explained by a single operator application.
    """
    orig_tokens = tokenize(original)
    mut_tokens = tokenize(mutated)
    a = [t.text for t in orig_tokens]
    b = [t.text for t in mut_tokens]
    if a == b:
        return (BugLabel.BUG_FREE, 0)

    p = 0
    while p < len(a) and p < len(b) and a[p] == b[p]:
        p += 1
    s = 0
    while s < len(a) - p and s < len(b) - p and a[len(a) - 1 - s] == b[len(b) - 1 - s]:
        s += 1
    orig_env = orig_tokens[p : len(a) - s]
    mut_env = mut_tokens[p : len(b) - s]

    # keyword-as-identifier renames every occurrence of one name; the
    # envelope then spans first to last occurrence and aligns pairwise
    rename = _rename_pair(orig_env, mut_env)
    if rename is not None:
        return (BugLabel.KEYWORD_AS_IDENTIFIER, rename[2])

    orig_text = "".join(t.text for t in orig_env)
    mut_text = "".join(t.text for t in mut_env)
    line = orig_env[0].line if orig_env else (mut_env[0].line if mut_env else 1)

    edit = _single_char_edit(orig_text, mut_text)
    if edit is None:
        raise AmbiguousDiffError(f"edit region is not a single character change: {orig_text!r} -> {mut_text!r}")
    kind, old, new = edit
    if kind == "delete":
        if old == ":":
            return (BugLabel.MISSING_COLON, line)
        if old in "()":
            return (BugLabel.MISSING_PARENTHESIS, line)
        if old == ",":
            return (BugLabel.MISSING_COMMA, line)
        if old in _QUOTES:
            return (BugLabel.MISSING_QUOTATION, line)
        raise AmbiguousDiffError(f"deleted character {old!r} matches no operator")
    if old in _QUOTES and new in _QUOTES:
        return (BugLabel.MISMATCHED_QUOTATION, line)
    if old in _CLOSERS and new in _CLOSERS:
        return (BugLabel.MISMATCHED_BRACKET, line)
    raise AmbiguousDiffError(f"substitution {old!r} -> {new!r} matches no operator")


def applicable_labels(source: str) -> list[BugLabel]:
    """Defect classes with at least one eligible site in the source."""
    out = []
    for label in BugLabel:
        if label is BugLabel.BUG_FREE:
            continue
        if inject_bug(source, label, 0) is not None:
            out.append(label)
    return out


def generate_fixture_task(clean_source: str, task_id: str, seed: int) -> InspectionTask | None:
    """Build an 8-variant inspection task from one clean snippet.

    Returns None when any operator lacks an eligible site, when the snippet
    falls outside the lexer's string-literal subset (multi-line strings),
    or when a mutation fails its own classify_defect round-trip check.
    """
    tokens = tokenize(clean_source)
    if detokenize(tokens) != clean_source:
        return None
    if any(
        t.kind is TokenKind.STRING_LITERAL and not _string_is_terminated(t.text) for t in tokens
    ):
        return None

    variants = [BugVariant(BugLabel.BUG_FREE, clean_source, None)]
    for label in BugLabel:
        if label is BugLabel.BUG_FREE:
            continue
        result = inject_bug(clean_source, label, hash64(seed, f"{task_id}/{label.value}"))
        if result is None:
            return None
        try:
            got = classify_defect(clean_source, result.mutated_source)
        except AmbiguousDiffError:
            return None
        if got != (label, result.defect_line):
            return None
        variants.append(BugVariant(label, result.mutated_source, result.defect_line))
    return InspectionTask(task_id=task_id, variants=tuple(variants))
