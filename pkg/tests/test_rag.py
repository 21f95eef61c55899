import json

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from litrag.corpus import ChunkingConfig, count_tokens
from litrag.embed import ReferenceEmbedder
from litrag.errors import (
    BudgetTooSmall,
    EndpointUnavailable,
    MissingMetadata,
    ModelError,
)
from litrag.index import RetrievalConfig, RetrievalHit
from litrag.rag import (
    DEFAULT_SYSTEM_TEXT,
    REFERENCES_HEADER,
    Answer,
    ChatClient,
    GenerationConfig,
    MemorySession,
    RagEngine,
    ReferenceLine,
    assemble_prompt,
    format_references,
    prompt_messages,
    render_context_block,
)

from conftest import make_meta, make_text


# ---------------------------------------------------------------------------
# prompt assembly
# ---------------------------------------------------------------------------


def blocks_of(*texts):
    return [(t, make_meta(i)) for i, t in enumerate(texts)]


def test_assemble_includes_all_blocks_under_large_budget():
    blocks = blocks_of("alpha beta", "gamma delta", "epsilon zeta")
    prompt = assemble_prompt("what?", blocks, [], GenerationConfig())
    assert [b[0] for b in prompt.context_blocks] == [t for t, _ in blocks]


def test_assemble_question_only_when_no_hits():
    prompt = assemble_prompt("what?", [], [], GenerationConfig())
    assert prompt.context_blocks == ()
    assert prompt.question == "what?"


def test_assemble_raises_when_question_alone_overflows():
    cfg = GenerationConfig(context_budget_tokens=3)
    with pytest.raises(BudgetTooSmall):
        assemble_prompt("a much longer question than three tokens", [], [], cfg)


def test_assemble_rejects_empty_question():
    with pytest.raises(ValueError):
        assemble_prompt("", [], [], GenerationConfig())


def _block_cost(ordinal, text, meta):
    return count_tokens(render_context_block(ordinal, text, meta))


def test_assemble_fits_exactly_two_of_three_equal_blocks():
    question = "short question"
    meta = make_meta(0)
    text = "tok " * 40
    blocks = [(text.strip(), meta)] * 3
    base = count_tokens(DEFAULT_SYSTEM_TEXT) + count_tokens(question)
    per_block = _block_cost(1, text.strip(), meta)
    header = count_tokens("Context:")
    # budget: system + question + header + two blocks, third must not fit
    budget = base + header + 2 * per_block
    prompt = assemble_prompt(
        question, blocks, [], GenerationConfig(context_budget_tokens=budget)
    )
    assert len(prompt.context_blocks) == 2
    assert prompt.total_tokens <= budget


def test_assemble_never_exceeds_budget_on_random_inputs():
    cfg = GenerationConfig(context_budget_tokens=120)
    blocks = blocks_of(*[make_text(i, 30) for i in range(6)])
    history = [(f"q{i} " * 5, f"a{i} " * 9) for i in range(6)]
    prompt = assemble_prompt("what is known?", blocks, history, cfg)
    assert prompt.total_tokens <= cfg.context_budget_tokens


@settings(max_examples=40, deadline=None)
@given(
    n_blocks=st.integers(0, 5),
    words=st.integers(1, 60),
    budget=st.integers(60, 400),
    n_history=st.integers(0, 6),
)
def test_assemble_budget_safety_fuzz(n_blocks, words, budget, n_history):
    cfg = GenerationConfig(context_budget_tokens=budget)
    blocks = blocks_of(*[make_text(i, words) for i in range(n_blocks)])
    history = [(make_text(i, 8), make_text(i + 1, 12)) for i in range(n_history)]
    try:
        prompt = assemble_prompt("what is the effect?", blocks, history, cfg)
    except BudgetTooSmall:
        return
    assert prompt.total_tokens <= budget
    # included blocks keep rank order
    included = [b[0] for b in prompt.context_blocks]
    pool = [b[0] for b in blocks]
    positions = [pool.index(t) for t in included]
    assert positions == sorted(positions)


def test_assemble_history_caps_at_four_most_recent_turns():
    history = [(f"q{i}", f"a{i}") for i in range(10)]
    prompt = assemble_prompt("next?", [], history, GenerationConfig())
    assert list(prompt.history) == history[6:]  # chronological, last four


def test_assemble_history_prefers_recent_turns_under_pressure():
    history = [(f"old question {i} with padding words", f"old answer {i}") for i in range(3)]
    history.append(("newest question", "newest answer"))
    base = count_tokens(DEFAULT_SYSTEM_TEXT) + count_tokens("next?")
    budget = base + count_tokens("newest question") + count_tokens("newest answer")
    prompt = assemble_prompt(
        "next?", [], history, GenerationConfig(context_budget_tokens=budget)
    )
    assert list(prompt.history) == [("newest question", "newest answer")]


def test_prompt_messages_shape():
    blocks = blocks_of("alpha beta gamma")
    history = [("q1", "a1")]
    prompt = assemble_prompt("q2", blocks, history, GenerationConfig())
    msgs = prompt_messages(prompt)
    assert [m["role"] for m in msgs] == ["system", "user", "assistant", "user"]
    assert msgs[0]["content"].startswith(DEFAULT_SYSTEM_TEXT)
    assert "Context:" in msgs[0]["content"]
    assert "alpha beta gamma" in msgs[0]["content"]
    assert msgs[-1] == {"role": "user", "content": "q2"}


def test_prompt_messages_without_context_has_no_header():
    prompt = assemble_prompt("q", [], [], GenerationConfig())
    msgs = prompt_messages(prompt)
    assert "Context:" not in msgs[0]["content"]


# ---------------------------------------------------------------------------
# chat client
# ---------------------------------------------------------------------------


def _chat_client(handler):
    return ChatClient(
        chat_url="http://chat.test/",
        default_model="test-model",
        transport=httpx.MockTransport(handler),
        sleep=lambda s: None,
    )


def test_chat_client_sends_config_verbatim():
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        return httpx.Response(
            200, json={"choices": [{"message": {"role": "assistant", "content": "ok"}}]}
        )

    client = _chat_client(handler)
    cfg = GenerationConfig(max_new_tokens=700, temperature=0.3)
    out = client.complete([{"role": "user", "content": "hi"}], cfg)
    assert out == "ok"
    assert seen["temperature"] == 0.3
    assert seen["max_tokens"] == 700
    assert seen["model"] == "test-model"
    assert seen["messages"] == [{"role": "user", "content": "hi"}]


def test_chat_client_unavailable_after_retries():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(500)

    with pytest.raises(EndpointUnavailable):
        _chat_client(handler).complete([{"role": "user", "content": "x"}], GenerationConfig())
    assert calls["n"] == 3


def test_chat_client_error_object_raises_model_error():
    def handler(request):
        return httpx.Response(
            200, json={"error": {"code": "overloaded", "message": "try later"}}
        )

    with pytest.raises(ModelError):
        _chat_client(handler).complete([{"role": "user", "content": "x"}], GenerationConfig())


def test_chat_client_malformed_body_raises_unavailable():
    def handler(request):
        return httpx.Response(200, json={"unexpected": True})

    with pytest.raises(EndpointUnavailable):
        _chat_client(handler).complete([{"role": "user", "content": "x"}], GenerationConfig())


def test_chat_client_requires_url():
    with pytest.raises(ValueError):
        ChatClient(chat_url="")


# ---------------------------------------------------------------------------
# reference formatting
# ---------------------------------------------------------------------------


def hit(cid, did, score, rank):
    return RetrievalHit(chunk_id=cid, doc_id=did, score=score, rank=rank)


def test_reference_line_template_bit_exact():
    line = ReferenceLine(
        ordinal=1,
        authors="Freddy C. Adams, Carlo Barbante",
        year=2013,
        title="Nanoscience, nanotechnology and spectrometry",
        doi="10.1016/j.sab.2013.04.008",
    )
    assert line.render() == (
        "[1] Freddy C. Adams, Carlo Barbante (2013). "
        "Nanoscience, nanotechnology and spectrometry. "
        "DOI: 10.1016/j.sab.2013.04.008"
    )


def test_format_references_dedups_preserving_first_rank():
    mx = make_meta(1)
    my = make_meta(2)
    metas = {mx.doi: mx, my.doi: my}
    hits = [
        hit("x#0", mx.doi, 0.9, 1),
        hit("y#0", my.doi, 0.8, 2),
        hit("x#1", mx.doi, 0.7, 3),
    ]
    refs = format_references(hits, metas)
    assert [r.doi for r in refs] == [mx.doi, my.doi]
    assert [r.ordinal for r in refs] == [1, 2]


def test_format_references_empty():
    assert format_references([], {}) == []


def test_format_references_missing_metadata():
    with pytest.raises(MissingMetadata):
        format_references([hit("c", "10.1/unknown", 0.5, 1)], {})


def test_answer_render_includes_reference_block():
    ref = ReferenceLine(1, "A. B.", 2021, "T", "10.1/d")
    answer = Answer(
        text="Body.", references=(ref,), hits=(), config_used=GenerationConfig()
    )
    assert answer.render() == f"Body.\n\n{REFERENCES_HEADER}\n{ref.render()}"


def test_answer_render_plain_when_no_references():
    answer = Answer(text="Body.", references=(), hits=(), config_used=GenerationConfig())
    assert answer.render() == "Body."


# ---------------------------------------------------------------------------
# engine end to end (reference embedder + mock chat endpoint)
# ---------------------------------------------------------------------------


def echo_handler(captured):
    def handler(request):
        payload = json.loads(request.content)
        captured.append(payload)
        system = payload["messages"][0]["content"]
        return httpx.Response(
            200,
            json={
                "choices": [
                    {"message": {"role": "assistant", "content": f"echo:{system[-80:]}"}}
                ]
            },
        )

    return handler


def make_engine(captured=None, dim=64, **kwargs):
    handler = echo_handler(captured if captured is not None else [])
    chat = ChatClient(
        chat_url="http://chat.test/",
        default_model="m",
        transport=httpx.MockTransport(handler),
        sleep=lambda s: None,
    )
    return RagEngine(embedder=ReferenceEmbedder(dim), chat=chat, **kwargs)


def test_engine_ingest_and_stats():
    engine = make_engine()
    engine.ingest(make_meta(1), make_text(1))
    engine.ingest(make_meta(2), make_text(2))
    assert engine.stats() == {"docs": 2, "chunks": 2, "dim": 64}


def test_engine_rejects_duplicate_doi():
    engine = make_engine()
    engine.ingest(make_meta(1), make_text(1))
    with pytest.raises(ValueError):
        engine.ingest(make_meta(1), make_text(1))


def test_engine_long_document_multi_chunk():
    engine = make_engine(chunking=ChunkingConfig(chunk_tokens=50, overlap_tokens=10))
    engine.ingest(make_meta(1), make_text(1, 200))
    stats = engine.stats()
    assert stats["docs"] == 1
    assert stats["chunks"] > 1


def test_engine_answer_has_references_and_hits():
    engine = make_engine()
    for i in range(5):
        engine.ingest(make_meta(i), make_text(i))
    answer = engine.answer_query("what about nanomaterials spectroscopy catalysis?")
    assert len(answer.hits) == 3  # default k
    assert answer.references
    assert answer.references[0].ordinal == 1
    dois = [r.doi for r in answer.references]
    assert len(dois) == len(set(dois))
    assert answer.text.startswith("echo:")


def test_engine_empty_index_answers_without_references():
    engine = make_engine()
    answer = engine.answer_query("anything at all?")
    assert answer.hits == ()
    assert answer.references == ()


def test_engine_query_overlap_doc_ranks_first():
    engine = make_engine()
    engine.ingest(make_meta(1, doi="10.1/match"), "graphene oxide membranes filter water")
    engine.ingest(make_meta(2, doi="10.1/other"), "perovskite solar cells degrade quickly")
    answer = engine.answer_query("how do graphene oxide membranes filter?")
    assert answer.hits[0].doc_id == "10.1/match"
    assert answer.references[0].doi == "10.1/match"


def test_engine_session_history_reaches_second_prompt():
    captured = []
    engine = make_engine(captured)
    engine.ingest(make_meta(1), make_text(1))
    session = MemorySession()
    engine.answer_query("first question about polymers?", session)
    engine.answer_query("second question about coatings?", session)
    roles = [m["role"] for m in captured[1]["messages"]]
    assert roles == ["system", "user", "assistant", "user"]
    assert captured[1]["messages"][1]["content"] == "first question about polymers?"
    assert len(session.turns) == 2


def test_engine_no_chat_client_raises():
    engine = RagEngine(embedder=ReferenceEmbedder(16))
    with pytest.raises(EndpointUnavailable):
        engine.answer_query("anything?")


def test_engine_retrieve_without_rerank_prefix():
    engine = make_engine(retrieval=RetrievalConfig(k=2, rerank_enabled=False))
    for i in range(6):
        engine.ingest(make_meta(i), make_text(i))
    hits = engine.retrieve("nanomaterials catalysis?")
    assert len(hits) == 2
    assert hits[0].score >= hits[1].score


def test_engine_remove_document_hides_it_from_search():
    engine = make_engine()
    engine.ingest(make_meta(1, doi="10.1/gone"), "unique vocabulary zirconia aerogel")
    engine.ingest(make_meta(2), make_text(2))
    assert engine.remove_document("10.1/gone") == 1
    answer = engine.answer_query("unique vocabulary zirconia aerogel?")
    assert all(h.doc_id != "10.1/gone" for h in answer.hits)


def test_engine_restore_round_trip(tmp_path, corpus_file):
    corpus = corpus_file(4)
    snap = str(tmp_path / "idx.snap")

    first = make_engine()
    first.restore(corpus, None)
    assert first.stats()["docs"] == 4
    first.save_snapshot(snap)
    q = "nanomaterials spectroscopy catalysis graphene"
    before = [(h.chunk_id, h.score) for h in first.retrieve(q)]

    second = make_engine()
    second.restore(corpus, snap)
    after = [(h.chunk_id, h.score) for h in second.retrieve(q)]
    assert after == before
    assert second.stats() == first.stats()


def test_engine_answer_to_dict_carries_rendered_form():
    engine = make_engine()
    engine.ingest(make_meta(1), make_text(1))
    answer = engine.answer_query("nanomaterials?")
    data = answer.to_dict()
    assert data["rendered"] == answer.render()
    assert data["references"][0]["line"] == answer.references[0].render()
    assert data["config_used"]["temperature"] == 0.3
    assert data["config_used"]["max_new_tokens"] == 700


def test_engine_parameter_defaults_reach_the_wire():
    captured = []
    engine = make_engine(captured)
    engine.ingest(make_meta(1), make_text(1))
    engine.answer_query("check parameters?")
    assert captured[0]["temperature"] == 0.3
    assert captured[0]["max_tokens"] == 700
