import pytest

from ragvv.corpus import BugLabel, BugVariant, KnowledgeDocument, select_variant
from ragvv.embedder import HashingEmbedder, embed
from ragvv.inspect_pipeline import (
    HUMAN_INSPECTOR_BASELINE_PCT,
    InspectionPrediction,
    build_inspection_prompt,
    inspection_request,
    judge_with_llm,
    parse_bug_label,
    run_inspection,
    score_inspection,
    write_predictions,
)
from ragvv.llmclient import ScriptedProvider, TransientLLMError, request_key
from ragvv.vectorstore import VectorStore

# the paper-reported GPT-3.5 Turbo mismatch-count vectors (without / with RAG)
GPT35_NO_RAG_COUNTS = {
    BugLabel.BUG_FREE: 34,
    BugLabel.MISSING_COLON: 360,
    BugLabel.MISSING_PARENTHESIS: 183,
    BugLabel.MISSING_QUOTATION: 77,
    BugLabel.MISSING_COMMA: 95,
    BugLabel.MISMATCHED_QUOTATION: 72,
    BugLabel.MISMATCHED_BRACKET: 87,
    BugLabel.KEYWORD_AS_IDENTIFIER: 424,
}
GPT35_RAG_COUNTS = {
    BugLabel.BUG_FREE: 179,
    BugLabel.MISSING_COLON: 32,
    BugLabel.MISSING_PARENTHESIS: 31,
    BugLabel.MISSING_QUOTATION: 39,
    BugLabel.MISSING_COMMA: 26,
    BugLabel.MISMATCHED_QUOTATION: 17,
    BugLabel.MISMATCHED_BRACKET: 2,
    BugLabel.KEYWORD_AS_IDENTIFIER: 52,
}


def make_predictions(matches: int, mismatch_counts: dict[BugLabel, int]):
    """Synthesize a prediction list with exact match/mismatch structure."""
    preds = []
    for i in range(matches):
        preds.append(
            InspectionPrediction(
                task_id=f"m{i:05d}", truth=BugLabel.MISSING_COLON, truth_line=1,
                predicted=BugLabel.MISSING_COLON, predicted_line=1, raw_response="missing colon",
            )
        )
    j = 0
    for label, count in mismatch_counts.items():
        for _ in range(count):
            wrong = BugLabel.MISSING_COMMA if label is not BugLabel.MISSING_COMMA else BugLabel.MISSING_COLON
            preds.append(
                InspectionPrediction(
                    task_id=f"x{j:05d}", truth=label, truth_line=1,
                    predicted=wrong, predicted_line=None, raw_response="wrong",
                )
            )
            j += 1
    return preds


class TestPromptBuilder:
    def test_no_reference_section_without_contexts(self):
        variant = BugVariant(BugLabel.BUG_FREE, "x = 1\n", None)
        prompt = build_inspection_prompt(variant, [])
        assert "Reference examples" not in prompt
        assert "1 | x = 1" in prompt

    def test_contexts_listed_in_order(self):
        variant = BugVariant(BugLabel.BUG_FREE, "x = 1\n", None)
        docs = [KnowledgeDocument(f"d{i}", f"example {i}") for i in range(3)]
        prompt = build_inspection_prompt(variant, docs)
        assert "Reference examples of correct code:" in prompt
        assert prompt.index("example 0") < prompt.index("example 1") < prompt.index("example 2")

    def test_instruction_before_snippet_before_references(self):
        variant = BugVariant(BugLabel.BUG_FREE, "y = 2\n", None)
        prompt = build_inspection_prompt(variant, [KnowledgeDocument("d", "ref text")])
        assert (
            prompt.index("bug type")
            < prompt.index("Code snippet")
            < prompt.index("Reference examples")
        )

    def test_deterministic(self):
        variant = BugVariant(BugLabel.BUG_FREE, "x = [1, 2]\n", None)
        docs = [KnowledgeDocument("d", "ref")]
        assert build_inspection_prompt(variant, docs) == build_inspection_prompt(variant, docs)


class TestParseBugLabel:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("The function definition is missing a colon on line 3", BugLabel.MISSING_COLON),
            ("there is a missing parenthesis in the call", BugLabel.MISSING_PARENTHESIS),
            ("an unterminated string literal", BugLabel.MISSING_QUOTATION),
            ("a comma is missing between elements", BugLabel.MISSING_COMMA),
            ("the string has a mismatched quotation mark", BugLabel.MISMATCHED_QUOTATION),
            ("closing bracket mismatch: ']' vs ')'", BugLabel.MISMATCHED_BRACKET),
            ("'class' is a reserved keyword used as a variable", BugLabel.KEYWORD_AS_IDENTIFIER),
            ("the code is free of errors", BugLabel.BUG_FREE),
            ("Bug-free code.", BugLabel.BUG_FREE),
        ],
    )
    def test_synonym_table(self, text, expected):
        label, _ = parse_bug_label(text)
        assert label is expected

    def test_mismatched_checked_before_missing(self):
        label, _ = parse_bug_label("this is a mismatched quotation, not a missing quotation")
        assert label is BugLabel.MISMATCHED_QUOTATION

    def test_line_extraction(self):
        assert parse_bug_label("missing colon on line 3")[1] == 3
        assert parse_bug_label("missing colon (line: 12)")[1] == 12
        assert parse_bug_label("missing colon somewhere")[1] is None

    def test_unmatched_text_is_unparseable(self):
        assert parse_bug_label("cosmic rays flipped a bit") == (None, None)

    def test_defect_mention_beats_no_bug_phrasing(self):
        label, _ = parse_bug_label("not bug-free: a missing comma on line 2")
        assert label is BugLabel.MISSING_COMMA


class TestScoreInspection:
    @pytest.mark.parametrize(
        "matches,mismatches,expected",
        [(2678, 1332, 66.78), (3632, 378, 90.57), (2943, 1067, 73.39), (3388, 622, 84.49)],
    )
    def test_accuracy_matches_published_rows(self, matches, mismatches, expected):
        counts = dict.fromkeys(BugLabel, 0)
        counts[BugLabel.MISSING_COLON] = mismatches
        metrics = score_inspection(make_predictions(matches, counts))
        assert metrics.matches == matches
        assert metrics.mismatches == mismatches
        assert round(metrics.accuracy, 2) == expected

    def test_published_mismatch_distribution(self):
        metrics = score_inspection(make_predictions(2678, GPT35_NO_RAG_COUNTS))
        assert metrics.mismatches == 1332
        expected_rates = {
            BugLabel.BUG_FREE: 2.55,
            BugLabel.MISSING_COLON: 27.03,
            BugLabel.MISSING_PARENTHESIS: 13.74,
            BugLabel.MISSING_QUOTATION: 5.78,
            BugLabel.MISSING_COMMA: 7.13,
            BugLabel.MISMATCHED_QUOTATION: 5.41,
            BugLabel.MISMATCHED_BRACKET: 6.53,
            BugLabel.KEYWORD_AS_IDENTIFIER: 31.83,
        }
        for label, want in expected_rates.items():
            assert metrics.mismatch_rates[label] == pytest.approx(want, abs=0.01)

    def test_rates_sum_to_100(self):
        metrics = score_inspection(make_predictions(10, GPT35_RAG_COUNTS))
        assert sum(metrics.mismatch_rates.values()) == pytest.approx(100.0, abs=0.01)

    def test_unparseable_counts_as_mismatch(self):
        pred = InspectionPrediction("t", BugLabel.MISSING_COLON, 1, None, None, "???")
        metrics = score_inspection([pred])
        assert metrics.mismatches == 1

    def test_require_line_mode(self):
        pred = InspectionPrediction(
            "t", BugLabel.MISSING_COLON, 3, BugLabel.MISSING_COLON, 4, "missing colon line 4"
        )
        assert score_inspection([pred]).matches == 1
        assert score_inspection([pred], require_line=True).matches == 0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            score_inspection([])


class TestJudge:
    def _judge_for(self, reply):
        class Fixed:
            def generate(self, req):
                return reply, None

        return Fixed()

    def test_yes_is_match(self):
        assert judge_with_llm("analysis", BugLabel.MISSING_COLON, self._judge_for("Yes."), model="j")

    def test_no_is_mismatch(self):
        assert not judge_with_llm("analysis", BugLabel.MISSING_COLON, self._judge_for("no"), model="j")

    def test_non_answer_is_mismatch_with_warning(self, caplog):
        import logging

        with caplog.at_level(logging.WARNING):
            result = judge_with_llm("analysis", BugLabel.MISSING_COLON, self._judge_for("maybe?"), model="j")
        assert result is False
        assert any("yes/no" in r.message for r in caplog.records)


def echo_fixtures(tasks, model, seed, contexts_by_task=None):
    """Scripted fixtures that answer each task's ground truth verbatim."""
    fixtures = {}
    for task in tasks:
        variant, truth = select_variant(task, seed)
        contexts = (contexts_by_task or {}).get(task.task_id, [])
        prompt = build_inspection_prompt(variant, contexts)
        req = inspection_request(prompt, model)
        if truth is BugLabel.BUG_FREE:
            fixtures[request_key(req)] = "The code is bug-free."
        else:
            fixtures[request_key(req)] = (
                f"The snippet contains a {truth.display} defect on line {variant.defect_line}."
            )
    return fixtures


class TestRunInspection:
    def test_echo_oracle_scores_100(self, fixture_tasks):
        tasks = fixture_tasks[:24]
        fixtures = echo_fixtures(tasks, "echo-model", seed=11)
        result = run_inspection(
            tasks, ScriptedProvider(fixtures, strict=True), model="echo-model", seed=11, workers=2
        )
        assert result.metrics.accuracy == 100.0
        assert result.metrics.mismatches == 0

    def test_always_bug_free_matches_selection_fraction(self, fixture_tasks):
        tasks = fixture_tasks[:48]
        provider = ScriptedProvider({}, default="the code is free of errors")
        result = run_inspection(tasks, provider, model="m", seed=23, workers=2)
        bug_free_selected = sum(
            1 for task in tasks if select_variant(task, 23)[1] is BugLabel.BUG_FREE
        )
        assert result.metrics.matches == bug_free_selected
        assert result.metrics.accuracy == pytest.approx(100.0 * bug_free_selected / len(tasks))

    def test_rag_toggle_changes_retrieval_not_scoring(self, fixture_tasks, snippets):
        tasks = fixture_tasks[:12]
        provider = ScriptedProvider({}, default="the code is free of errors")
        embedder = HashingEmbedder(64)
        store = VectorStore(64)
        for rec in snippets[:20]:
            doc = KnowledgeDocument(rec["task_id"], rec["source"])
            store.add(doc.doc_id, embed(doc.content, embedder), doc)
        store.freeze()
        off = run_inspection(tasks, provider, model="m", seed=5, rag=False, workers=1)
        on = run_inspection(
            tasks, provider, model="m", seed=5, rag=True, store=store, query_embedder=embedder,
            k=3, workers=1,
        )
        assert on.metrics.to_dict() == off.metrics.to_dict()
        assert all(p.retrieved_ids == () for p in off.predictions)
        assert all(len(p.retrieved_ids) == 3 for p in on.predictions)

    def test_retrieved_ids_bounded_by_k(self, fixture_tasks, snippets):
        embedder = HashingEmbedder(64)
        store = VectorStore(64)
        for rec in snippets[:2]:
            doc = KnowledgeDocument(rec["task_id"], rec["source"])
            store.add(doc.doc_id, embed(doc.content, embedder), doc)
        store.freeze()
        result = run_inspection(
            fixture_tasks[:4], ScriptedProvider({}), model="m", seed=1, rag=True,
            store=store, query_embedder=embedder, k=5, workers=1,
        )
        assert all(len(p.retrieved_ids) == 2 for p in result.predictions)  # only 2 docs indexed

    def test_retry_exhaustion_excludes_item(self, fixture_tasks, monkeypatch):
        monkeypatch.setattr("ragvv.llmclient.time.sleep", lambda s: None)
        tasks = fixture_tasks[:6]
        poisoned_prompt_hash = {}

        class MostlyFine:
            def generate(self, req):
                if request_key(req) in poisoned_prompt_hash:
                    raise TransientLLMError("flaky forever")
                return "the code is free of errors", None

        victim = tasks[0]
        variant, _ = select_variant(victim, 9)
        req = inspection_request(build_inspection_prompt(variant, []), "m")
        poisoned_prompt_hash[request_key(req)] = True

        result = run_inspection(tasks, MostlyFine(), model="m", seed=9, workers=1)
        assert result.errored_task_ids == [victim.task_id]
        assert result.metrics.total == len(tasks) - 1

    def test_rag_requires_index(self, fixture_tasks):
        with pytest.raises(ValueError, match="rag"):
            run_inspection(fixture_tasks[:2], ScriptedProvider({}), model="m", seed=0, rag=True)

    def test_items_file_has_no_timestamps(self, fixture_tasks, tmp_path):
        tasks = fixture_tasks[:6]
        result = run_inspection(tasks, ScriptedProvider({}), model="m", seed=3, workers=1)
        path = tmp_path / "items.ndjson"
        write_predictions(result.predictions, path)
        text = path.read_text()
        assert "ts" not in text.split("\n")[0] or '"task_id"' in text
        assert len(text.splitlines()) == len(tasks)


def test_human_baseline_constant():
    assert HUMAN_INSPECTOR_BASELINE_PCT == 60.0
