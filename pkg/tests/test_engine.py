"""Interaction loop tests: the five canonical control-flow scenarios,
duplicate skipping, round caps, parse-failure policy, abort semantics,
and conversation shapes.
"""

import pytest

from querychain.chain import ChainOfQuery, CoqNode
from querychain.config import Ablation, RunConfig, SourceTag
from querychain.engine import (
    NO_IR_DOCUMENT,
    CorrectPath,
    InteractionState,
    record_correct,
    run_interaction,
    traverse,
)
from querychain.errors import RunAbortedError, UnparseableGenerationError
from querychain.llm import ScriptedBackend
from querychain.reader import BaselineReader
from querychain.retrieval import Document, LocalRetriever, build_index
from querychain.verify import Feedback, FeedbackKind, IrOutcome

CORPUS = [
    Document("d1", "Jaws", "Jaws was directed by Steven Spielberg in 1975"),
    Document("d2", "Steven Spielberg", "Steven Spielberg was born on December 18 1946"),
    Document("d3", "Paris", "Paris is the capital of France"),
    Document("d4", "Eiffel Tower", "The Eiffel Tower was completed in 1889 in Paris"),
]


@pytest.fixture
def retriever():
    return LocalRetriever(build_index(CORPUS))


@pytest.fixture
def reader():
    return BaselineReader()


class CountingReader(BaselineReader):
    def __init__(self):
        self.calls = 0

    def read(self, query, doc):
        self.calls += 1
        return super().read(query, doc)


def chain_text(*pairs, final=None, unsolved_last=False):
    lines = []
    for i, (q, a) in enumerate(pairs, start=1):
        lines.append(f"[Query {i}]: {q}")
        if unsolved_last and i == len(pairs):
            lines.append("[Unsolved Query]")
        else:
            lines.append(f"[Answer {i}]: {a}")
    if final is not None:
        lines.append(f"[Final Answer]: {final}")
    return "\n".join(lines)


GOOD_CHAIN = chain_text(
    ("Who directed Jaws?", "Steven Spielberg"),
    ("When was Steven Spielberg born?", "December 18 1946"),
    final="December 18 1946",
)
QUESTION = "When was the director of Jaws born?"


class TestScenarioAllPass:
    def test_single_round_finish(self, retriever, reader):
        llm = ScriptedBackend([GOOD_CHAIN])
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        assert len(result.tree.branches) == 1
        assert [f.kind for f in result.feedbacks] == [FeedbackKind.FINISH]
        assert result.counters.rounds == 1
        assert [(e.query, e.answer, e.source, e.document.id) for e in result.path.entries] == [
            ("Who directed Jaws?", "Steven Spielberg", SourceTag.FROM_LLM, "d1"),
            ("When was Steven Spielberg born?", "December 18 1946", SourceTag.FROM_LLM, "d2"),
        ]
        assert result.tree.branches[0].restart_query is None


class TestScenarioCorrection:
    def test_wrong_answer_corrected_then_finish(self, retriever, reader):
        wrong = chain_text(
            ("Who directed Jaws?", "George Lucas"),
            ("When was Steven Spielberg born?", "December 18 1946"),
            final="December 18 1946",
        )
        llm = ScriptedBackend([wrong, GOOD_CHAIN])
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        assert len(result.tree.branches) == 2
        assert [f.kind for f in result.feedbacks] == [FeedbackKind.CORRECT, FeedbackKind.FINISH]
        assert result.counters.rounds == 2
        assert [(e.query, e.answer, e.source) for e in result.path.entries] == [
            ("Who directed Jaws?", "Steven Spielberg", SourceTag.CORRECTED_BY_IR),
            ("When was Steven Spielberg born?", "December 18 1946", SourceTag.FROM_LLM),
        ]
        assert result.tree.branches[1].restart_query == "Who directed Jaws?"

    def test_correction_feedback_carries_template_prompt(self, retriever, reader):
        wrong = chain_text(("Who directed Jaws?", "George Lucas"), final="George Lucas")
        llm = ScriptedBackend([wrong, GOOD_CHAIN])
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        correct = result.feedbacks[0]
        assert correct.prompt == (
            "According to the Reference, the answer for Who directed Jaws? "
            "should be Steven Spielberg, you can change your answer and "
            "continue constructing the reasoning chain for [Question]: "
            f"{QUESTION}. "
            "Reference: Jaws was directed by Steven Spielberg in 1975."
        )


class TestScenarioCompletion:
    def test_unsolved_completed_then_finish(self, retriever, reader):
        unsolved = chain_text(
            ("Who directed Jaws?", "Steven Spielberg"),
            ("When was Steven Spielberg born?", None),
            final="unknown",
            unsolved_last=True,
        )
        llm = ScriptedBackend([unsolved, GOOD_CHAIN])
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        assert [f.kind for f in result.feedbacks] == [FeedbackKind.COMPLETE, FeedbackKind.FINISH]
        assert result.path.entries[1].source is SourceTag.COMPLETED_BY_IR
        assert result.path.entries[1].answer == "December 18 1946"
        assert "give your answer" in result.feedbacks[0].prompt


class TestScenarioCorrectionThenCompletion:
    def test_three_branches(self, retriever, reader):
        round1 = chain_text(
            ("Who directed Jaws?", "George Lucas"),
            ("Where was the Eiffel Tower completed?", None),
            final="unknown",
            unsolved_last=True,
        )
        round2 = chain_text(
            ("Who directed Jaws?", "Steven Spielberg"),
            ("Where was the Eiffel Tower completed?", None),
            final="unknown",
            unsolved_last=True,
        )
        round3 = chain_text(
            ("Who directed Jaws?", "Steven Spielberg"),
            ("Where was the Eiffel Tower completed?", "1889"),
            final="Steven Spielberg, 1889",
        )
        llm = ScriptedBackend([round1, round2, round3])
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        assert len(result.tree.branches) == 3
        assert [f.kind for f in result.feedbacks] == [
            FeedbackKind.CORRECT,
            FeedbackKind.COMPLETE,
            FeedbackKind.FINISH,
        ]
        assert [(e.answer, e.source) for e in result.path.entries] == [
            ("Steven Spielberg", SourceTag.CORRECTED_BY_IR),
            ("1889", SourceTag.COMPLETED_BY_IR),
        ]


class TestScenarioRoundCap:
    def test_perpetual_mismatch_stops_after_rmax_plus_one(self, retriever, reader):
        gens = [
            chain_text((f"Who directed Jaws take {k}?", "George Lucas"), final="George Lucas")
            for k in range(1, 10)
        ]
        llm = ScriptedBackend(gens)
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig(r_max=5))
        assert result.counters.rounds == 6
        assert llm.cursor == 6
        assert len(result.tree.branches) == 6
        assert all(f.kind is FeedbackKind.CORRECT for f in result.feedbacks)
        assert result.state.last_feedback.kind is FeedbackKind.CORRECT

    def test_rmax_one(self, retriever, reader):
        gens = [
            chain_text((f"Who directed Jaws take {k}?", "George Lucas"), final="x")
            for k in range(1, 5)
        ]
        llm = ScriptedBackend(gens)
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig(r_max=1))
        assert result.counters.rounds == 2
        assert llm.cursor == 2


class TestDuplicateSkipping:
    def test_repeated_query_gets_one_ir_call(self, retriever):
        reader = CountingReader()
        wrong = chain_text(("Who directed Jaws?", "George Lucas"), final="x")
        # Round 2 repeats the same query with different case/punctuation;
        # it must be skipped, so the round finishes without another read.
        repeat = chain_text(("who directed JAWS", "Steven Spielberg"), final="y")
        llm = ScriptedBackend([wrong, repeat])
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        assert reader.calls == 1
        assert [f.kind for f in result.feedbacks] == [FeedbackKind.CORRECT, FeedbackKind.FINISH]
        # The path keeps the corrected entry from round 1.
        assert result.path.entries[0].answer == "Steven Spielberg"
        assert result.path.entries[0].source is SourceTag.CORRECTED_BY_IR

    def test_duplicate_within_one_chain(self, retriever):
        reader = CountingReader()
        chain = (
            "[Query 1]: Who directed Jaws?\n[Answer 1]: Steven Spielberg\n"
            "[Query 2]: Who directed Jaws?\n[Answer 2]: Steven Spielberg\n"
            "[Final Answer]: Steven Spielberg"
        )
        llm = ScriptedBackend([chain])
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        assert reader.calls == 1
        assert len(result.path.entries) == 1


class TestRetrievalFailurePassThrough:
    def test_no_match_node_continues_and_stays_off_path(self, retriever, reader):
        chain = (
            "[Query 1]: zebra xylophone quux?\n[Answer 1]: nothing\n"
            "[Query 2]: Who directed Jaws?\n[Answer 2]: Steven Spielberg\n"
            "[Final Answer]: Steven Spielberg"
        )
        llm = ScriptedBackend([chain])
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        assert [f.kind for f in result.feedbacks] == [FeedbackKind.FINISH]
        assert [e.query for e in result.path.entries] == ["Who directed Jaws?"]


class TestParseFailurePolicy:
    def test_single_failure_consumes_round_then_recovers(self, retriever, reader):
        llm = ScriptedBackend(["I cannot answer that.", GOOD_CHAIN])
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        assert result.counters.rounds == 2
        assert len(result.tree.branches) == 1
        assert [f.kind for f in result.feedbacks] == [FeedbackKind.FINISH]

    def test_retry_sends_identical_request(self, retriever, reader):
        llm = ScriptedBackend(["garbage with no markers", GOOD_CHAIN])
        run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        assert llm.requests[0] == llm.requests[1]

    def test_two_consecutive_failures_abort(self, retriever, reader):
        llm = ScriptedBackend(["nope", "still nope", GOOD_CHAIN])
        with pytest.raises(UnparseableGenerationError) as info:
            run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        error = info.value
        assert error.counters.rounds == 2
        assert error.tree.branches == []
        assert error.path.entries == ()

    def test_failure_counter_resets_on_success(self, retriever, reader):
        wrong = chain_text(("Who directed Jaws?", "George Lucas"), final="x")
        llm = ScriptedBackend(["bad one", wrong, "bad two", GOOD_CHAIN])
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        assert result.counters.rounds == 4
        assert [f.kind for f in result.feedbacks] == [FeedbackKind.CORRECT, FeedbackKind.FINISH]


class TestBackendFailure:
    def test_exhausted_script_aborts_with_partials(self, retriever, reader):
        wrong = chain_text(("Who directed Jaws?", "George Lucas"), final="x")
        llm = ScriptedBackend([wrong])
        with pytest.raises(RunAbortedError) as info:
            run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        error = info.value
        assert len(error.tree.branches) == 1
        assert error.path.entries[0].source is SourceTag.CORRECTED_BY_IR
        assert error.counters.rounds == 1
        assert [f.kind for f in error.feedbacks] == [FeedbackKind.CORRECT]


class TestNoIrAblation:
    config = RunConfig(ablation=frozenset({Ablation.NO_IR}))

    def test_single_generation_path_from_chain(self, retriever, reader):
        llm = ScriptedBackend([GOOD_CHAIN, "never consumed"])
        result = run_interaction(QUESTION, llm, retriever, reader, self.config)
        assert llm.cursor == 1
        assert result.counters.rounds == 1
        assert [f.kind for f in result.feedbacks] == [FeedbackKind.FINISH]
        assert [(e.source, e.document) for e in result.path.entries] == [
            (SourceTag.FROM_LLM, NO_IR_DOCUMENT),
            (SourceTag.FROM_LLM, NO_IR_DOCUMENT),
        ]

    def test_unsolved_nodes_stay_off_path(self, retriever, reader):
        text = chain_text(
            ("Who directed Jaws?", "Steven Spielberg"),
            ("impossible?", None),
            unsolved_last=True,
        )
        llm = ScriptedBackend([text])
        result = run_interaction(QUESTION, llm, retriever, reader, self.config)
        assert [e.query for e in result.path.entries] == ["Who directed Jaws?"]

    def test_parse_failure_aborts_immediately(self, retriever, reader):
        llm = ScriptedBackend(["no markers", GOOD_CHAIN])
        with pytest.raises(UnparseableGenerationError):
            run_interaction(QUESTION, llm, retriever, reader, self.config)


class TestConversationShape:
    def test_multi_turn_history_grows(self, retriever, reader):
        wrong = chain_text(("Who directed Jaws?", "George Lucas"), final="x")
        llm = ScriptedBackend([wrong, GOOD_CHAIN])
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        second_request = llm.requests[1]
        assert [m["role"] for m in second_request] == ["user", "assistant", "user"]
        assert second_request[1]["content"] == wrong
        assert second_request[2]["content"].startswith("According to the Reference")
        # The recorded conversation ends with the last assistant turn.
        assert result.conversation[-1]["role"] == "assistant"
        assert result.conversation[-1]["content"] == GOOD_CHAIN

    def test_single_turn_rebuilds_one_user_message(self, retriever, reader):
        wrong = chain_text(("Who directed Jaws?", "George Lucas"), final="x")
        llm = ScriptedBackend([wrong, GOOD_CHAIN])
        run_interaction(QUESTION, llm, retriever, reader, RunConfig(), multi_turn=False)
        second_request = llm.requests[1]
        assert len(second_request) == 1
        assert second_request[0]["role"] == "user"
        content = second_request[0]["content"]
        assert content.startswith("Construct a global reasoning chain")
        assert "According to the Reference" in content

    def test_first_request_has_examples_then_question(self, retriever, reader):
        example = (
            "What is the capital of France?",
            "[Query 1]: What is the capital of France?\n[Answer 1]: Paris\n[Final Answer]: Paris",
        )
        llm = ScriptedBackend([GOOD_CHAIN])
        run_interaction(QUESTION, llm, retriever, reader, RunConfig(), examples=[example])
        first = llm.requests[0][0]["content"]
        assert first.index("capital of France") < first.index(QUESTION)
        assert first.endswith(f"[Question]: {QUESTION}")


class TestCounters:
    def test_word_counts_and_clock(self, retriever, reader):
        ticks = iter([0.0, 10.0, 11.0, 12.5])
        llm = ScriptedBackend([GOOD_CHAIN])
        result = run_interaction(
            QUESTION, llm, retriever, reader, RunConfig(), clock=lambda: next(ticks)
        )
        first_prompt = llm.requests[0][0]["content"]
        assert result.counters.input_words == len(first_prompt.split())
        assert result.counters.output_words == len(GOOD_CHAIN.split())
        assert result.counters.wall_time_seconds == 10.0

    def test_history_recounted_every_round(self, retriever, reader):
        wrong = chain_text(("Who directed Jaws?", "George Lucas"), final="x")
        llm = ScriptedBackend([wrong, GOOD_CHAIN])
        result = run_interaction(QUESTION, llm, retriever, reader, RunConfig())
        expected = sum(
            len(m["content"].split()) for request in llm.requests for m in request
        )
        assert result.counters.input_words == expected


class TestRecordCorrect:
    doc = CORPUS[0]

    def test_replaces_by_normalized_query_in_place(self):
        path = CorrectPath()
        path = record_correct(path, "Who directed Jaws?", "George Lucas", self.doc, SourceTag.FROM_LLM)
        path = record_correct(path, "q2?", "a2", self.doc, SourceTag.FROM_LLM)
        path = record_correct(
            path, "who directed jaws", "Steven Spielberg", self.doc, SourceTag.CORRECTED_BY_IR
        )
        assert [e.answer for e in path.entries] == ["Steven Spielberg", "a2"]
        assert path.entries[0].source is SourceTag.CORRECTED_BY_IR


class TestTraverse:
    def test_ir_called_once_per_distinct_query(self):
        calls = []

        def fake_ir(node):
            calls.append(node.query)
            return IrOutcome(feedback=Feedback(kind=FeedbackKind.PASS), query=node.query)

        chain = ChainOfQuery(
            nodes=(
                CoqNode(1, "One?", "a"),
                CoqNode(2, "one", "b"),
                CoqNode(3, "Two?", "c"),
            )
        )
        state = InteractionState()
        feedback = traverse(chain, state, fake_ir)
        assert feedback.kind is FeedbackKind.FINISH
        assert calls == ["One?", "Two?"]
        assert state.processed == {"one", "two"}
