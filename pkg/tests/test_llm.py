import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
import requests
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import finite_difference_gradient, random_spd
from solid.llm import (
    API_KEY_ENV,
    AgentUnavailable,
    ChatClient,
    ChatLLMAgent,
    ConfidenceLevel,
    FixedProposalAgent,
    LlmEndpointConfig,
    ParseError,
    PromptContext,
    QuadraticMockAgent,
    ScriptedLevelsAgent,
    Transcript,
    build_prompt,
    levels_to_proposal,
    load_news,
    missing_news,
    parse_response,
    propose_llm,
    render_levels,
)
from solid.llm.prompt import NO_NEWS, SPARSITY_DIRECTIVE

L = ConfidenceLevel


class TestConfidenceLevel:
    def test_anchor_scores(self):
        assert L.VERY_HIGH.score == 0.6
        assert L.NEUTRAL.score == 0.3
        assert L.VERY_LOW.score == 0.0

    def test_scores_step_by_tenths(self):
        assert [lv.score for lv in L] == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]

    def test_total_order(self):
        levels = list(L)
        assert levels == sorted(levels)
        assert L.LOW < L.SOMEWHAT_LOW <= L.SOMEWHAT_LOW < L.VERY_HIGH
        assert L.HIGH > L.NEUTRAL >= L.NEUTRAL

    @pytest.mark.parametrize(
        "token, level",
        [
            ("Somewhat High Confidence", L.SOMEWHAT_HIGH),
            ("somewhat high", L.SOMEWHAT_HIGH),
            ("VERY LOW CONFIDENCE", L.VERY_LOW),
            ("Neutral", L.NEUTRAL),
            ("  high  ", L.HIGH),
        ],
    )
    def test_parse_phrase_forms(self, token, level):
        assert L.parse(token) is level

    def test_parse_rejects_unknown(self):
        with pytest.raises(ParseError) as info:
            L.parse("Extremely High")
        assert info.value.token == "Extremely High"


class TestParseResponse:
    def test_two_ticker_line(self):
        out = parse_response("NVDA: High Confidence, AMD: Neutral", ["NVDA", "AMD"])
        assert out == {"NVDA": L.HIGH, "AMD": L.NEUTRAL}

    def test_only_final_line_counts(self):
        text = (
            "Reasoning: NVDA looks strong.\n"
            "Draft: NVDA: Low, AMD: Low\n"
            "After weighing the optimizer's plan I settle on:\n"
            "NVDA: Very High Confidence, AMD: Somewhat Low Confidence\n"
        )
        out = parse_response(text, ["NVDA", "AMD"])
        assert out == {"NVDA": L.VERY_HIGH, "AMD": L.SOMEWHAT_LOW}

    def test_markdown_decoration_ignored(self):
        text = "Final:\n**NVDA: [High Confidence], AMD: `Neutral`**"
        assert parse_response(text, ["NVDA", "AMD"]) == {"NVDA": L.HIGH, "AMD": L.NEUTRAL}

    def test_unknown_level(self):
        with pytest.raises(ParseError) as info:
            parse_response("NVDA: Extremely High", ["NVDA"])
        assert info.value.token == "Extremely High"

    def test_missing_ticker(self):
        with pytest.raises(ParseError) as info:
            parse_response("NVDA: High", ["NVDA", "AMD"])
        assert info.value.missing == ["AMD"]

    def test_no_line(self):
        with pytest.raises(ParseError) as info:
            parse_response("I cannot decide.", ["NVDA"])
        assert info.value.missing == ["NVDA"]

    def test_duplicate_ticker(self):
        with pytest.raises(ParseError, match="more than once"):
            parse_response("NVDA: High, NVDA: Low", ["NVDA"])

    def test_case_insensitive_ticker(self):
        assert parse_response("nvda: high", ["NVDA"]) == {"NVDA": L.HIGH}


level_maps = st.integers(1, 12).flatmap(
    lambda n: st.lists(st.sampled_from(list(L)), min_size=n, max_size=n)
)


@settings(max_examples=200, deadline=None)
@given(level_maps)
def test_render_parse_round_trip(levels):
    tickers = [f"T{i}" for i in range(len(levels))]
    mapping = dict(zip(tickers, levels))
    line = render_levels(mapping, tickers)
    assert parse_response("some analysis\n" + line, tickers) == mapping


@settings(max_examples=200, deadline=None)
@given(level_maps, st.booleans())
def test_proposal_on_simplex(levels, sparse):
    tickers = [f"T{i}" for i in range(len(levels))]
    w = levels_to_proposal(dict(zip(tickers, levels)), tickers, sparse=sparse)
    assert abs(w.sum() - 1) <= 1e-12
    assert w.min() >= 0


class TestLevelsToProposal:
    def test_hand_normalization(self):
        w = levels_to_proposal({"A": L.VERY_HIGH, "B": L.NEUTRAL})
        np.testing.assert_allclose(w, [2 / 3, 1 / 3], atol=1e-15)

    def test_all_very_low_uniform(self):
        w = levels_to_proposal({t: L.VERY_LOW for t in "ABC"})
        np.testing.assert_array_equal(w, np.full(3, 1 / 3))

    def test_sparse_drops_low(self):
        w = levels_to_proposal({"A": L.HIGH, "B": L.LOW}, sparse=True)
        np.testing.assert_array_equal(w, [1.0, 0.0])

    def test_dense_keeps_low(self):
        w = levels_to_proposal({"A": L.HIGH, "B": L.LOW}, sparse=False)
        np.testing.assert_allclose(w, [5 / 6, 1 / 6], atol=1e-15)

    def test_ticker_order_respected(self):
        w = levels_to_proposal({"A": L.VERY_HIGH, "B": L.NEUTRAL}, ["B", "A"])
        np.testing.assert_allclose(w, [1 / 3, 2 / 3], atol=1e-15)

    def test_missing_ticker(self):
        with pytest.raises(ValueError):
            levels_to_proposal({"A": L.HIGH}, ["A", "B"])


def two_ticker_ctx(**kw):
    base = dict(
        tickers=("NVDA", "AMD"),
        news={"NVDA": "NVDA beat earnings.", "AMD": "AMD launched a chip."},
        recent_prices="2024-01-31 NVDA 615.2 AMD 167.7",
        decision_price=np.array([0.2, -0.1]),
        public_plan=np.array([0.6, 0.4]),
    )
    base.update(kw)
    return PromptContext(**base)


class TestBuildPrompt:
    def test_signed_prices(self):
        system, user = build_prompt(two_ticker_ctx())
        assert "decision-price" in user
        assert "NVDA: +0.2000" in user
        assert "AMD: -0.1000" in user
        assert "NVDA: 0.6000, AMD: 0.4000" in user

    def test_system_framing(self):
        system, _ = build_prompt(two_ticker_ctx())
        assert "optimization model" in system
        assert "compromise" in system

    def test_news_and_prices_embedded(self):
        _, user = build_prompt(two_ticker_ctx())
        assert "NVDA beat earnings." in user
        assert "AMD launched a chip." in user
        assert "2024-01-31 NVDA 615.2" in user

    def test_format_line(self):
        _, user = build_prompt(two_ticker_ctx())
        assert "NVDA: X1, AMD: X2" in user
        for lv in L:
            assert lv.label in user

    def test_sparsity_toggle(self):
        _, dense = build_prompt(two_ticker_ctx(sparse_mode=False))
        _, sparse = build_prompt(two_ticker_ctx(sparse_mode=True))
        assert SPARSITY_DIRECTIVE in sparse and "sparsity" in sparse
        assert "sparsity" not in dense

    def test_missing_news_placeholder(self):
        _, user = build_prompt(two_ticker_ctx(news={"NVDA": "something"}))
        assert "news for AMD:\n" + NO_NEWS in user

    def test_deterministic(self):
        assert build_prompt(two_ticker_ctx()) == build_prompt(two_ticker_ctx())

    def test_context_validation(self):
        with pytest.raises(ValueError):
            PromptContext(tickers=())
        with pytest.raises(ValueError):
            PromptContext(tickers=("A", "A"))
        with pytest.raises(ValueError):
            PromptContext(tickers=("A", "B"), decision_price=[0.1])

    def test_defaults(self):
        ctx = PromptContext(tickers=("A", "B"))
        np.testing.assert_array_equal(ctx.decision_price, [0, 0])
        np.testing.assert_array_equal(ctx.public_plan, [0.5, 0.5])


class StubClient:
    def __init__(self, responses):
        self.responses = list(responses)
        self.messages = []

    def complete(self, messages):
        self.messages.append(messages)
        return self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]


class TestProposeLlm:
    def test_fixed_response(self):
        ctx = two_ticker_ctx()
        reply = "analysis...\nNVDA: Very High, AMD: Neutral"
        w1 = propose_llm(ctx, StubClient([reply]))
        w2 = propose_llm(ctx, StubClient([reply]))
        expected = levels_to_proposal(parse_response(reply, ctx.tickers), ctx.tickers)
        np.testing.assert_array_equal(w1, expected)
        assert w1.tobytes() == w2.tobytes()

    def test_garbage_twice(self):
        transcript = Transcript()
        with pytest.raises(AgentUnavailable, match="unparseable"):
            propose_llm(two_ticker_ctx(), StubClient(["no idea", "still no idea"]), transcript)
        assert [r["retry"] for r in transcript.records] == [0, 1]
        assert all(r["error"] for r in transcript.records)

    def test_valid_on_retry(self):
        transcript = Transcript()
        client = StubClient(["NVDA: Stellar", "NVDA: High, AMD: Low"])
        w = propose_llm(two_ticker_ctx(period="2024-01"), client, transcript, iteration=3)
        np.testing.assert_allclose(w, [5 / 6, 1 / 6])
        final = transcript.records[-1]
        assert final["retry"] == 1
        assert final["parsed_levels"] == {"NVDA": "High Confidence", "AMD": "Low Confidence"}
        assert final["period"] == "2024-01" and final["iteration"] == 3
        # corrective instruction appended to the conversation
        second = client.messages[1]
        assert second[-2] == {"role": "assistant", "content": "NVDA: Stellar"}
        assert "could not be parsed" in second[-1]["content"]

    def test_transcript_file(self, tmp_path):
        path = tmp_path / "t.jsonl"
        propose_llm(two_ticker_ctx(), StubClient(["NVDA: High, AMD: High"]), Transcript(path))
        rec = json.loads(path.read_text().splitlines()[0])
        assert set(rec) == {"period", "iteration", "prompt_hash", "response", "parsed_levels", "retry", "error"}
        assert len(rec["prompt_hash"]) == 64

    def test_chat_agent_uses_state(self):
        client = StubClient(["NVDA: High, AMD: High"])
        agent = ChatLLMAgent(two_ticker_ctx(), client)
        w = agent.propose(np.array([0.3, 0.7]), np.array([-0.5, 0.25]), 1.0)
        np.testing.assert_array_equal(w, [0.5, 0.5])
        user = client.messages[0][1]["content"]
        assert "NVDA: -0.5000, AMD: +0.2500" in user
        assert "NVDA: 0.3000, AMD: 0.7000" in user
        assert agent.calls == 1


class _Handler(BaseHTTPRequestHandler):
    requests_seen = []
    fail_first = 0
    reply = "NVDA: High, AMD: Neutral"

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).requests_seen.append((self.path, dict(self.headers), body))
        if type(self).fail_first > 0:
            type(self).fail_first -= 1
            self.send_response(503)
            self.end_headers()
            return
        data = json.dumps({"choices": [{"message": {"role": "assistant", "content": self.reply}}]})
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(data.encode())

    def log_message(self, *args):
        pass


@pytest.fixture
def chat_server():
    _Handler.requests_seen = []
    _Handler.fail_first = 0
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


class TestChatClient:
    def config(self, server, **kw):
        return LlmEndpointConfig(base_url=f"http://127.0.0.1:{server.server_port}/v1", model="m", **kw)

    def test_wire_format(self, chat_server, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "sk-test")
        client = ChatClient(self.config(chat_server))
        out = client.complete([{"role": "user", "content": "hi"}])
        assert out == "NVDA: High, AMD: Neutral"
        path, headers, body = _Handler.requests_seen[0]
        assert path == "/v1/chat/completions"
        assert headers["Authorization"] == "Bearer sk-test"
        assert body == {"model": "m", "temperature": 0.0, "messages": [{"role": "user", "content": "hi"}]}

    def test_no_key_no_header(self, chat_server, monkeypatch):
        monkeypatch.delenv(API_KEY_ENV, raising=False)
        ChatClient(self.config(chat_server)).complete([])
        assert "Authorization" not in _Handler.requests_seen[0][1]

    def test_retries_transport(self, chat_server):
        _Handler.fail_first = 2
        sleeps = []
        client = ChatClient(self.config(chat_server, max_retries=2, backoff=0.5), sleep=sleeps.append)
        assert client.complete([]) == "NVDA: High, AMD: Neutral"
        assert sleeps == [0.5, 1.0]
        assert len(_Handler.requests_seen) == 3

    def test_exhausted(self, chat_server):
        _Handler.fail_first = 10
        client = ChatClient(self.config(chat_server, max_retries=1), sleep=lambda s: None)
        with pytest.raises(AgentUnavailable, match="2 attempts"):
            client.complete([])

    def test_unreachable(self):
        cfg = LlmEndpointConfig(base_url="http://127.0.0.1:9", timeout=0.5, max_retries=0)
        with pytest.raises(AgentUnavailable):
            ChatClient(cfg).complete([])

    def test_end_to_end_propose(self, chat_server):
        client = ChatClient(self.config(chat_server))
        w = propose_llm(two_ticker_ctx(), client)
        np.testing.assert_allclose(w, [0.625, 0.375])

    def test_malformed_body(self):
        class Resp:
            def raise_for_status(self):
                pass

            def json(self):
                return {"choices": []}

        class Session:
            def post(self, *a, **k):
                return Resp()

        client = ChatClient(LlmEndpointConfig(max_retries=0), session=Session())
        with pytest.raises(AgentUnavailable, match="malformed"):
            client.complete([])

    def test_default_temperature_zero(self):
        assert LlmEndpointConfig().temperature == 0.0

    def test_session_error_is_transport(self):
        class Session:
            def post(self, *a, **k):
                raise requests.ConnectionError("boom")

        client = ChatClient(LlmEndpointConfig(max_retries=0), session=Session())
        with pytest.raises(AgentUnavailable, match="boom"):
            client.complete([])


class TestQuadraticMock:
    def test_already_optimal(self):
        agent = QuadraticMockAgent([0.3, 0.7])
        np.testing.assert_allclose(agent.propose([0.3, 0.7], [0, 0], 1.0), [0.3, 0.7], atol=1e-15)

    def test_hand_example(self):
        agent = QuadraticMockAgent([1.0, 0.0])
        np.testing.assert_allclose(agent.propose([0, 0], [0, 0], 1.0), [0.5, 0.0], atol=1e-15)

    def test_singular_at_zero_rho(self):
        agent = QuadraticMockAgent([1.0, 0.0], weight=np.diag([1.0, 0.0]))
        with pytest.raises(ValueError, match="singular"):
            agent.propose([0, 0], [0, 0], 0.0)

    def test_rejects_bad_weight(self):
        with pytest.raises(ValueError):
            QuadraticMockAgent([0, 0], weight=[[1, 2], [0, 1]])
        with pytest.raises(ValueError):
            QuadraticMockAgent([0, 0], weight=np.eye(3))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 6), st.sampled_from([0.1, 1.0, 10.0]))
def test_quadratic_mock_stationarity(seed, n, rho):
    rng = np.random.default_rng(seed)
    agent = QuadraticMockAgent(rng.normal(size=n), random_spd(rng, n))
    lam, x_prev = rng.normal(size=n), rng.normal(size=n)
    x = agent.propose(x_prev, lam, rho)
    grad = finite_difference_gradient(lambda z: agent.augmented_utility(z, lam, x_prev, rho), x)
    assert np.max(np.abs(grad)) <= 1e-8


class TestScriptedAgent:
    def test_single_entry_constant(self):
        agent = ScriptedLevelsAgent([{"A": "High", "B": "Neutral"}])
        first = agent.propose()
        for _ in range(4):
            np.testing.assert_array_equal(agent.propose(), first)

    def test_two_entries_change_once(self):
        agent = ScriptedLevelsAgent([{"A": L.HIGH, "B": L.HIGH}, {"A": L.VERY_HIGH, "B": L.NEUTRAL}])
        out = [agent.propose().tolist() for _ in range(4)]
        assert out[0] == [0.5, 0.5]
        assert out[1] == out[2] == out[3] != out[0]

    def test_all_neutral_uniform(self):
        agent = ScriptedLevelsAgent([{t: "Neutral" for t in "ABCD"}])
        np.testing.assert_array_equal(agent.propose(), np.full(4, 0.25))

    def test_ignores_state(self):
        agent = ScriptedLevelsAgent([{"A": "High", "B": "Low"}], sparse=True)
        np.testing.assert_array_equal(agent.propose([9, 9], [5, -5], 100.0), [1.0, 0.0])

    def test_empty_schedule(self):
        with pytest.raises(ValueError):
            ScriptedLevelsAgent([])

    def test_fixed_agent_copies(self):
        agent = FixedProposalAgent([0.2, 0.8])
        out = agent.propose()
        out[0] = 99
        np.testing.assert_array_equal(agent.propose(), [0.2, 0.8])


class TestNews:
    def test_load_and_missing(self, tmp_path):
        (tmp_path / "2024-01").mkdir()
        (tmp_path / "2024-01" / "NVDA.txt").write_text("chips", encoding="utf-8")
        assert load_news(tmp_path, "2024-01", ["NVDA", "AMD"]) == {"NVDA": "chips", "AMD": ""}
        assert missing_news(tmp_path, ["2024-01", "2024-02"], ["NVDA", "AMD"]) == {
            "NVDA": ["2024-02"],
            "AMD": ["2024-01", "2024-02"],
        }

    def test_no_dir(self):
        assert load_news(None, "2024-01", ["A"]) == {"A": ""}
