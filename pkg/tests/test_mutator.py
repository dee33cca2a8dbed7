import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragvv.corpus import BugLabel
from ragvv.mutator import (
    AmbiguousDiffError,
    Token,
    TokenKind,
    classify_defect,
    detokenize,
    generate_fixture_task,
    inject_bug,
    tokenize,
)

DEFECTS = [l for l in BugLabel if l is not BugLabel.BUG_FREE]


class TestTokenize:
    def test_def_header_kinds(self):
        kinds = [(t.kind, t.text) for t in tokenize("def f(x):") if t.kind is not TokenKind.INDENT]
        assert kinds == [
            (TokenKind.KEYWORD, "def"),
            (TokenKind.IDENTIFIER, "f"),
            (TokenKind.PUNCT, "("),
            (TokenKind.IDENTIFIER, "x"),
            (TokenKind.PUNCT, ")"),
            (TokenKind.PUNCT, ":"),
        ]

    def test_empty_source(self):
        assert tokenize("") == []

    def test_comma_inside_string_is_one_token(self):
        tokens = tokenize('x = "a,b"')
        strings = [t for t in tokens if t.kind is TokenKind.STRING_LITERAL]
        assert [t.text for t in strings] == ['"a,b"']
        assert not any(t.kind is TokenKind.PUNCT and t.text == "," for t in tokens)

    def test_escaped_quote_stays_inside_string(self):
        tokens = tokenize(r'x = "say \"hi\""')
        strings = [t for t in tokens if t.kind is TokenKind.STRING_LITERAL]
        assert len(strings) == 1

    def test_comment_token(self):
        tokens = tokenize("x = 1  # trailing note\n")
        assert any(t.kind is TokenKind.COMMENT and t.text == "# trailing note" for t in tokens)

    def test_line_and_col_positions(self):
        tokens = tokenize("a = 1\nbb = 2\n")
        bb = next(t for t in tokens if t.text == "bb")
        assert (bb.line, bb.col) == (2, 0)

    def test_unterminated_string_runs_to_end_of_line(self):
        tokens = tokenize('x = "abc\ny = 1\n')
        broken = next(t for t in tokens if t.kind is TokenKind.STRING_LITERAL)
        assert broken.text == '"abc'
        assert detokenize(tokens) == 'x = "abc\ny = 1\n'

    def test_lossless_on_corpus(self, snippets):
        for rec in snippets:
            assert detokenize(tokenize(rec["source"])) == rec["source"]

    @settings(max_examples=200)
    @given(st.text(alphabet=st.characters(codec="ascii"), max_size=120))
    def test_lossless_on_arbitrary_ascii(self, source):
        assert detokenize(tokenize(source)) == source

    @settings(max_examples=50)
    @given(st.text(max_size=80))
    def test_lossless_on_arbitrary_unicode(self, source):
        assert detokenize(tokenize(source)) == source


class TestInjectBug:
    def test_missing_colon_single_site(self):
        result = inject_bug("def f(x):\n    return x", BugLabel.MISSING_COLON, seed=5)
        assert result is not None
        assert result.mutated_source.splitlines()[0] == "def f(x)"
        assert result.defect_line == 1

    def test_missing_comma_not_applicable(self):
        assert inject_bug("print(1)", BugLabel.MISSING_COMMA, seed=0) is None

    def test_mismatched_bracket_single_pair(self):
        result = inject_bug("xs = [1, 2]", BugLabel.MISMATCHED_BRACKET, seed=0)
        assert result is not None
        assert result.mutated_source in ("xs = [1, 2)", "xs = [1, 2}")
        assert result.defect_line == 1
        assert classify_defect("xs = [1, 2]", result.mutated_source) == (
            BugLabel.MISMATCHED_BRACKET, 1,
        )

    def test_keyword_rename_hits_all_occurrences(self):
        source = "total = 0\nfor v in [1, 2]:\n    total = total + v\nprint(total, 'x')\n"
        result = inject_bug(source, BugLabel.KEYWORD_AS_IDENTIFIER, seed=3)
        assert result is not None
        renamed = [t for t in tokenize(result.mutated_source) if t.kind is TokenKind.IDENTIFIER]
        original = [t for t in tokenize(source) if t.kind is TokenKind.IDENTIFIER]
        assert len(renamed) < len(original)  # some identifiers became keywords

    def test_deterministic_per_seed(self):
        source = "xs = [1, 2, 3]\nprint(xs, 'ok')\n"
        for label in DEFECTS:
            a = inject_bug(source, label, seed=77)
            b = inject_bug(source, label, seed=77)
            assert a == b

    def test_rejects_bug_free_label(self):
        with pytest.raises(ValueError):
            inject_bug("x = 1", BugLabel.BUG_FREE, seed=0)

    def test_mutation_is_single_line_shift_free(self, snippets):
        # defect_line always within the mutated source
        for rec in snippets[:10]:
            for label in DEFECTS:
                result = inject_bug(rec["source"], label, seed=1)
                if result is None:
                    continue
                assert 1 <= result.defect_line <= len(result.mutated_source.splitlines())


class TestClassifyDefect:
    def test_identity_is_bug_free(self):
        s = "def f():\n    return 1\n"
        assert classify_defect(s, s) == (BugLabel.BUG_FREE, 0)

    def test_round_trip_over_corpus(self, snippets):
        checked = 0
        for rec in snippets:
            source = rec["source"]
            for label in DEFECTS:
                for seed in (0, 1):
                    result = inject_bug(source, label, seed)
                    if result is None:
                        continue
                    assert classify_defect(source, result.mutated_source) == (
                        label, result.defect_line,
                    ), (rec["task_id"], label, seed)
                    checked += 1
        assert checked > 400

    def test_two_independent_edits_are_ambiguous(self):
        source = "def f(a, b):\n    return [a, b]\n"
        mutated = "def f(a b):\n    return [a, b\n"  # comma and bracket both gone
        with pytest.raises(AmbiguousDiffError):
            classify_defect(source, mutated)

    def test_unrelated_rewrite_is_ambiguous(self):
        with pytest.raises(AmbiguousDiffError):
            classify_defect("x = 1\n", "y = 2 + 2\n")


class TestGenerateFixtureTask:
    def test_full_task_from_rich_snippet(self):
        source = 'def f(a, b):\n    tag = "v"\n    return [a, b, tag]\n'
        task = generate_fixture_task(source, "fx", seed=9)
        assert task is not None
        assert len(task.variants) == 8
        assert {v.label for v in task.variants} == set(BugLabel)
        bug_free = [v for v in task.variants if v.label is BugLabel.BUG_FREE]
        assert bug_free[0].source == source

    def test_not_applicable_without_sites(self):
        assert generate_fixture_task("x = 1", "nope", seed=0) is None

    def test_deterministic(self):
        source = 'def g(x, y):\n    s = "t"\n    return (x, y, s)\n'
        a = generate_fixture_task(source, "d", seed=4)
        b = generate_fixture_task(source, "d", seed=4)
        assert a == b

    def test_multiline_string_snippets_are_skipped(self):
        source = 'def f(a, b):\n    s = """doc\nstring"""\n    return (a, b)\n'
        assert generate_fixture_task(source, "skip", seed=0) is None
