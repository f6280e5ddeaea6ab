import json

import httpx
import pytest

from conftest import mock_gateway, no_sleep
from quoteremix.gateway import (
    AttemptsExhausted,
    AuthError,
    ChatRequest,
    Gateway,
    GatewayTimeout,
    MalformedResponse,
    MockBackend,
    MockRule,
    OpenAIBackend,
    RateLimiter,
    RateLimitError,
    RetryPolicy,
    ServerError,
    UnmatchedPrompt,
    cache_key,
    load_mock_fixtures,
    mock_script,
)


class FakeClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now

    def sleep(self, seconds):
        self.now += seconds


class Flaky:
    """Fails with the given errors, in order, then answers."""

    def __init__(self, *errors, text="ok"):
        self.errors = list(errors)
        self.text = text
        self.calls = 0

    def __call__(self, req):
        self.calls += 1
        if self.errors:
            raise self.errors.pop(0)
        return self.text, (1, 1)


def test_cache_hit_is_identical_and_free(tmp_path):
    backend = mock_script({"Quote Matching": "Step 1 Quote Matching: ...★ “x”\n"})
    gw = mock_gateway(backend, cache_dir=tmp_path / "cache")
    req = ChatRequest("Step 1 Quote Matching for DKNY", temperature=0.9)
    first = gw.complete(req)
    second = gw.complete(req)
    assert not first.from_cache and second.from_cache
    assert second.text.encode() == first.text.encode()
    assert gw.calls == 1 and backend.calls == 1

    # a fresh gateway over the same directory still hits
    gw2 = mock_gateway(backend, cache_dir=tmp_path / "cache")
    assert gw2.complete(req).from_cache and gw2.calls == 0
    entry = json.loads(next((tmp_path / "cache").rglob("*.json")).read_text())
    assert entry["key"] == cache_key(req) and entry["request"]["temperature"] == 0.9


def test_fixture_passthrough_and_routing():
    gw = mock_gateway(mock_script({"Quote Matching": "canned step one", "Answer:": "Answer: 1"},
                                  default="fallback"))
    assert gw.complete(ChatRequest("Step 1 Quote Matching")).text == "canned step one"
    assert gw.complete(ChatRequest("End with Answer: 0/1")).text == "Answer: 1"
    assert gw.complete(ChatRequest("anything else")).text == "fallback"


def test_unmatched_prompt_without_default():
    gw = mock_gateway(mock_script({"Quote Matching": "x"}))
    with pytest.raises(UnmatchedPrompt):
        gw.complete(ChatRequest("hello"))


def test_duplicate_matchers_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        MockBackend([MockRule("Answer", "a"), MockRule("Answer", "b")])
    with pytest.raises(ValueError):
        mock_script({})


def test_regex_rules_fill_named_groups():
    backend = mock_script({r"re:Brand: (?P<brand>\w+)": ["{brand} never sleeps.", "Only {brand}."]})
    out = {backend(ChatRequest(f"Brand: {b}\n"))[0] for b in ("DKNY", "GE", "Dawn", "Olay")}
    assert all(o.endswith(".") for o in out)
    assert backend(ChatRequest("Brand: GE\n")) == backend(ChatRequest("Brand: GE\n"))


def test_two_rate_limits_then_success():
    backend = Flaky(RateLimitError("429"), RateLimitError("429"))
    gw = Gateway(backend, retry=RetryPolicy(max_attempts=5, base_delay=1.0, jitter=0.0), sleep=no_sleep)
    resp = gw.complete(ChatRequest("hi"))
    assert resp.attempts == 3 and resp.text == "ok"
    assert gw.delays == [1.0, 2.0]
    assert gw.calls == backend.calls == 3


def test_backoff_schedule_with_jitter_and_cap():
    policy = RetryPolicy(max_attempts=8, base_delay=1.0, max_delay=4.0, jitter=0.25)
    backend = Flaky(*[GatewayTimeout("slow")] * 7)
    slept = []
    gw = Gateway(backend, retry=policy, sleep=slept.append, seed=3)
    gw.complete(ChatRequest("hi"))
    raw = [1, 2, 4, 4, 4, 4, 4]
    assert slept == gw.delays
    for d, base in zip(slept, raw):
        assert base <= d <= base * 1.25


def test_exhaustion_wraps_last_error():
    gw = Gateway(Flaky(*[ServerError("500")] * 3), retry=RetryPolicy(max_attempts=3), sleep=no_sleep)
    with pytest.raises(AttemptsExhausted) as info:
        gw.complete(ChatRequest("hi"))
    assert info.value.attempts == 3 and isinstance(info.value.last_error, ServerError)


@pytest.mark.parametrize("error", [AuthError("401"), MalformedResponse("bad json")])
def test_non_retryable_errors_fail_fast(error):
    backend = Flaky(error)
    gw = Gateway(backend, sleep=no_sleep)
    with pytest.raises(type(error)):
        gw.complete(ChatRequest("hi"))
    assert backend.calls == 1


def test_cache_keys_are_distinct():
    keys = {cache_key(ChatRequest(f"prompt {i % 2500}", temperature=(i // 2500) * 0.5))
            for i in range(10_000)}
    assert len(keys) == 10_000
    base = ChatRequest("x")
    variants = [ChatRequest("x", system_text="s"), ChatRequest("x", model_id="gpt-4o"),
                ChatRequest("x", seed=1), ChatRequest("x", temperature=0.1)]
    assert len({cache_key(base), *map(cache_key, variants)}) == 5
    # output budget does not change the content
    assert cache_key(ChatRequest("x", max_output_tokens=7)) == cache_key(base)


def test_request_validation():
    with pytest.raises(ValueError):
        ChatRequest("x", temperature=2.5)
    with pytest.raises(ValueError):
        ChatRequest("")


def test_rate_limiter_on_simulated_clock():
    clock = FakeClock()
    limiter = RateLimiter(3, clock=clock, sleep=clock.sleep)
    stamps = [limiter.acquire() for _ in range(10)]
    assert stamps == sorted(stamps)
    for t in stamps:
        assert sum(t <= s < t + 1.0 for s in stamps) <= 3
    assert stamps[:3] == [0.0, 0.0, 0.0] and stamps[3] == 1.0


def test_gateway_uses_rate_limit():
    clock = FakeClock()
    gw = Gateway(Flaky(), rate_limit=2, clock=clock, sleep=clock.sleep)
    for i in range(5):
        gw.complete(ChatRequest(f"p{i}"))
    assert clock.now == 2.0


def _openai(handler, **kw):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return OpenAIBackend(base_url="http://test/v1", api_key="sk-test", client=client, **kw)


def test_openai_backend_request_and_response():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={
            "choices": [{"message": {"content": "Answer: 1"}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 3},
        })

    text, usage = _openai(handler)(ChatRequest("judge this", system_text="sys", model_id="gpt-4o", seed=4))
    assert text == "Answer: 1" and usage == (12, 3)
    assert seen["url"] == "http://test/v1/chat/completions"
    assert seen["auth"] == "Bearer sk-test"
    assert seen["body"]["messages"][0] == {"role": "system", "content": "sys"}
    assert seen["body"]["seed"] == 4 and seen["body"]["model"] == "gpt-4o"


@pytest.mark.parametrize("status, error", [
    (401, AuthError), (429, RateLimitError), (503, ServerError), (408, GatewayTimeout),
    (400, MalformedResponse),
])
def test_openai_backend_status_mapping(status, error):
    with pytest.raises(error):
        _openai(lambda r: httpx.Response(status, text="nope"))(ChatRequest("x"))


def test_openai_backend_malformed_body():
    with pytest.raises(MalformedResponse):
        _openai(lambda r: httpx.Response(200, json={"choices": []}))(ChatRequest("x"))


def test_openai_backend_timeout_is_retryable():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)
    with pytest.raises(GatewayTimeout):
        _openai(handler)(ChatRequest("x"))


def test_missing_key_names_the_variable(monkeypatch):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    with pytest.raises(AuthError, match="OPENAI_API_KEY"):
        OpenAIBackend()


def test_fixture_file_loading(tmp_path):
    (tmp_path / "fixtures.json").write_text(json.dumps({
        "default": "Answer: C",
        "rules": [{"match": "Quote Matching", "response": "one"},
                  {"match": "^Brand: (?P<b>.+)$", "regex": True, "response": ["{b}!"]}],
    }))
    backend = load_mock_fixtures(tmp_path)
    assert backend(ChatRequest("Quote Matching"))[0] == "one"
    assert backend(ChatRequest("x\nBrand: GE\ny"))[0] == "GE!"
    assert backend(ChatRequest("zzz"))[0] == "Answer: C"
