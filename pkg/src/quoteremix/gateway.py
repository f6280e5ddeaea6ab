"""Chat-completion access with retries, rate limiting and a response cache.

A :class:`Gateway` wraps a backend callable. Backends take a
:class:`ChatRequest` and return ``(text, (input_tokens, output_tokens))`` or
raise one of the :class:`GatewayError` subclasses below. Two backends ship:
:class:`OpenAIBackend` for any OpenAI-compatible endpoint, and
:class:`MockBackend` for deterministic offline runs.
"""

from __future__ import annotations

import collections
import hashlib
import json
import logging
import os
import random
import re
import tempfile
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import httpx

logger = logging.getLogger(__name__)

ENV_BASE_URL = "OPENAI_BASE_URL"
ENV_API_KEY = "OPENAI_API_KEY"
ENV_ORG_ID = "OPENAI_ORG_ID"
DEFAULT_BASE_URL = "https://api.openai.com/v1"


class GatewayError(Exception):
    retryable = False


class AuthError(GatewayError):
    pass


class RateLimitError(GatewayError):
    retryable = True


class GatewayTimeout(GatewayError):
    retryable = True


class ServerError(GatewayError):
    retryable = True


class MalformedResponse(GatewayError):
    pass


class UnmatchedPrompt(GatewayError):
    """The mock backend has no rule for this prompt and no default."""


class AttemptsExhausted(GatewayError):
    def __init__(self, attempts: int, last_error: Exception):
        super().__init__(f"gave up after {attempts} attempts: {last_error}")
        self.attempts = attempts
        self.last_error = last_error


@dataclass(frozen=True)
class ChatRequest:
    user_text: str
    system_text: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 512
    model_id: str = "mock"
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: tuple[int, int] = (0, 0)
    latency_ms: int = 0
    from_cache: bool = False
    attempts: int = 1


def cache_key(req: ChatRequest) -> str:
    payload = json.dumps(
        [req.model_id, req.system_text, req.user_text, float(req.temperature), req.seed],
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class RetryPolicy:
    max_attempts: int = 5
    base_delay: float = 1.0
    max_delay: float = 30.0
    jitter: float = 0.25

    def delay(self, attempt: int, rng: random.Random) -> float:
        """Backoff before retry number ``attempt`` (1-based)."""
        raw = min(self.max_delay, self.base_delay * 2 ** (attempt - 1))
        return raw * (1 + self.jitter * rng.random())


class RateLimiter:
    """At most ``rate`` dispatches inside any half-open window of ``period`` seconds."""

    def __init__(self, rate: int, period: float = 1.0,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rate < 1:
            raise ValueError("rate must be >= 1")
        self.rate = rate
        self.period = period
        self._clock = clock
        self._sleep = sleep
        self._sent: collections.deque[float] = collections.deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        with self._lock:
            while True:
                now = self._clock()
                while self._sent and now - self._sent[0] >= self.period:
                    self._sent.popleft()
                if len(self._sent) < self.rate:
                    self._sent.append(now)
                    return now
                self._sleep(self.period - (now - self._sent[0]))


class ResponseCache:
    """One JSON file per request digest."""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[dict]:
        path = self._path(key)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)

    def put(self, key: str, request: ChatRequest, response: ChatResponse) -> None:
        path = self._path(key)
        body = {"key": key, "request": asdict(request), "response": asdict(response)}
        atomic_write_text(path, json.dumps(body, ensure_ascii=False, indent=1, sort_keys=True))


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


Backend = Callable[[ChatRequest], "tuple[str, tuple[int, int]]"]


class Gateway:
    """Thread-safe front door for every model call.

    ``calls`` counts backend dispatches; cache hits do not touch it.
    """

    def __init__(self, backend: Backend, *, cache_dir: Optional[Union[str, Path]] = None,
                 retry: Optional[RetryPolicy] = None, rate_limit: Optional[int] = None,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep, seed: int = 0):
        self.backend = backend
        self.cache = ResponseCache(cache_dir) if cache_dir else None
        self.retry = retry or RetryPolicy()
        self.limiter = RateLimiter(rate_limit, clock=clock, sleep=sleep) if rate_limit else None
        self._clock = clock
        self._sleep = sleep
        self._rng = random.Random(seed)
        self._lock = threading.Lock()
        self.calls = 0
        self.delays: list[float] = []

    def complete(self, req: ChatRequest) -> ChatResponse:
        key = cache_key(req)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                r = hit["response"]
                return ChatResponse(text=r["text"], usage=tuple(r["usage"]),
                                    latency_ms=r["latency_ms"], from_cache=True,
                                    attempts=r.get("attempts", 1))

        last: Optional[Exception] = None
        for attempt in range(1, self.retry.max_attempts + 1):
            if attempt > 1:
                with self._lock:
                    wait = self.retry.delay(attempt - 1, self._rng)
                    self.delays.append(wait)
                self._sleep(wait)
            if self.limiter is not None:
                self.limiter.acquire()
            with self._lock:
                self.calls += 1
            start = self._clock()
            try:
                text, usage = self.backend(req)
            except GatewayError as exc:
                if not exc.retryable:
                    raise
                logger.warning("attempt %d/%d failed: %s", attempt, self.retry.max_attempts, exc)
                last = exc
                continue
            latency = int(round((self._clock() - start) * 1000))
            resp = ChatResponse(text=text, usage=tuple(usage), latency_ms=latency,
                                from_cache=False, attempts=attempt)
            if self.cache is not None:
                self.cache.put(key, req, resp)
            return resp
        raise AttemptsExhausted(self.retry.max_attempts, last)


class OpenAIBackend:
    """POSTs to ``{base_url}/chat/completions`` of an OpenAI-compatible server."""

    def __init__(self, base_url: Optional[str] = None, api_key: Optional[str] = None,
                 organization: Optional[str] = None, timeout: float = 60.0,
                 client: Optional[httpx.Client] = None):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL) or DEFAULT_BASE_URL).rstrip("/")
        self.api_key = api_key or os.environ.get(ENV_API_KEY)
        if not self.api_key:
            raise AuthError(f"no API key: set the {ENV_API_KEY} environment variable")
        self.organization = organization or os.environ.get(ENV_ORG_ID)
        self.client = client or httpx.Client(timeout=timeout)

    def __call__(self, req: ChatRequest) -> tuple[str, tuple[int, int]]:
        headers = {"Authorization": f"Bearer {self.api_key}"}
        if self.organization:
            headers["OpenAI-Organization"] = self.organization
        messages = []
        if req.system_text:
            messages.append({"role": "system", "content": req.system_text})
        messages.append({"role": "user", "content": req.user_text})
        body = {
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        if req.seed is not None:
            body["seed"] = req.seed
        try:
            resp = self.client.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
        except httpx.TimeoutException as exc:
            raise GatewayTimeout(str(exc)) from exc
        except httpx.TransportError as exc:
            raise ServerError(str(exc)) from exc

        if resp.status_code in (401, 403):
            raise AuthError(f"HTTP {resp.status_code}: check {ENV_API_KEY}")
        if resp.status_code == 429:
            raise RateLimitError("HTTP 429")
        if resp.status_code == 408:
            raise GatewayTimeout("HTTP 408")
        if resp.status_code >= 500:
            raise ServerError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise MalformedResponse(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
            usage = data.get("usage") or {}
            tokens = (int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response body: {exc}") from exc
        if not isinstance(text, str):
            raise MalformedResponse("response content is not text")
        return text, tokens


@dataclass(frozen=True)
class MockRule:
    """Answer with ``response`` when ``match`` occurs in the user text.

    ``response`` may be a string, a list of strings (one is picked by a hash
    of the user text) or a callable taking the request. String responses are
    ``str.format``-ed with the named groups of a regex match.
    """
    match: str
    response: Union[str, Sequence[str], Callable[[ChatRequest], str]]
    regex: bool = False
    pattern: Optional[re.Pattern] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.regex:
            object.__setattr__(self, "pattern", re.compile(self.match, re.MULTILINE))

    def search(self, text: str):
        if self.regex:
            return self.pattern.search(text)
        return self.match in text or None


class MockBackend:
    """Deterministic rule-based backend. The first matching rule wins."""

    def __init__(self, rules: Sequence[MockRule], default: Optional[str] = None):
        if not rules and default is None:
            raise ValueError("a mock backend needs at least one rule or a default")
        seen = set()
        for rule in rules:
            ident = (rule.match, rule.regex)
            if ident in seen:
                raise ValueError(f"duplicate mock matcher {rule.match!r}")
            seen.add(ident)
        self.rules = list(rules)
        self.default = default
        self.calls = 0

    def __call__(self, req: ChatRequest) -> tuple[str, tuple[int, int]]:
        self.calls += 1
        for rule in self.rules:
            m = rule.search(req.user_text)
            if not m:
                continue
            text = self._render(rule, req, m)
            break
        else:
            if self.default is None:
                raise UnmatchedPrompt(f"no mock rule matches prompt starting {req.user_text[:60]!r}")
            text = self.default
        return text, (len(req.user_text.split()), len(text.split()))

    @staticmethod
    def _render(rule: MockRule, req: ChatRequest, m) -> str:
        resp = rule.response
        if callable(resp):
            return resp(req)
        if not isinstance(resp, str):
            digest = hashlib.sha256(req.user_text.encode("utf-8")).digest()
            resp = resp[int.from_bytes(digest[:8], "big") % len(resp)]
        if rule.regex:
            groups = {k: v.strip() for k, v in m.groupdict().items() if v is not None}
            if groups:
                resp = resp.format(**groups)
        return resp


def mock_script(fixtures: Union[Mapping[str, object], Sequence[MockRule]],
                default: Optional[str] = None) -> MockBackend:
    """Build a mock backend from an ordered ``matcher -> response`` mapping.

    Matchers wrapped as ``re:<pattern>`` are regular expressions; everything
    else is a plain substring.
    """
    if isinstance(fixtures, Mapping):
        if not fixtures:
            raise ValueError("fixtures must be non-empty")
        rules = []
        for matcher, response in fixtures.items():
            if matcher.startswith("re:"):
                rules.append(MockRule(matcher[3:], response, regex=True))
            else:
                rules.append(MockRule(matcher, response))
    else:
        rules = list(fixtures)
        if not rules:
            raise ValueError("fixtures must be non-empty")
    return MockBackend(rules, default=default)


def load_mock_fixtures(path: Union[str, Path]) -> MockBackend:
    """Load a mock backend from a JSON fixture file.

    Schema::

        {"default": "...optional...",
         "rules": [{"match": "...", "regex": false, "response": "..." | ["...", ...]}]}
    """
    path = Path(path)
    if path.is_dir():
        path = path / "fixtures.json"
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    rules = [MockRule(r["match"], r["response"], regex=bool(r.get("regex", False)))
             for r in data.get("rules", [])]
    return MockBackend(rules, default=data.get("default"))
