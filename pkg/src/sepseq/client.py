"""Chat-completion client with bounded concurrency, retries, token
accounting, and a deterministic offline mock family.

Wire contract: POST {base_url}/chat/completions with body exactly
{model, messages, temperature, max_tokens}; the answer is read from
choices[0].message.content and usage.{prompt,completion,total}_tokens.
The API key comes from an environment variable and is never written to
logs, transcripts, or result files.

Mock endpoints make the whole pipeline testable without a network:

  oracle                  always answers correctly
  oracle?error=p          wrong but well-formed answer with probability p
  null?rate=p             unextractable answer with probability p
  repeat-corruptor?threshold=t   exact echo up to length t, one corrupted
                          digit beyond it (spare=q keeps a fraction intact)
  dispersion?base=b       wrong with probability min(1, b*(L-1)) where L is
                          the effective segment length (min(k, n) under the
                          segmented format, n otherwise)

All mock decisions are seeded by (sample id, run index), so results are
independent of concurrency; the `dispersion` draw ignores the mock params,
coupling sweeps over k to one uniform draw per sample x run. A `flaky=p`
param makes the first attempt fail transiently, and strategy `pot` makes
mocks emit a runnable program instead of a direct answer (its error rate is
scaled by pot_factor, default 0.5, reflecting that models transcribe better
into code).
"""
from __future__ import annotations

import json
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable, Iterable
from urllib.parse import parse_qsl, urlparse

import requests

from .datagen import TaskType, derive_seed
from .errors import TransportError, UsageError
from .prompting import PromptStrategy, RenderedPrompt

DEFAULT_API_KEY_ENV = "LLM_API_KEY"
_OPTION_LETTERS = "ABCDEFGH"


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    backoff_s: tuple[float, ...] = (0.5, 1.0, 2.0)
    retryable_statuses: frozenset[int] = frozenset({408, 429, 500, 502, 503, 504})

    def delay(self, attempt: int) -> float:
        if not self.backoff_s:
            return 0.0
        return self.backoff_s[min(attempt - 1, len(self.backoff_s) - 1)]


@dataclass(frozen=True)
class ModelEndpoint:
    """A live chat-completions endpoint or a mock spec; exactly one of the two."""

    model: str
    base_url: str | None = None
    mock: str | None = None
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout_s: float = 120.0

    def __post_init__(self) -> None:
        if (self.base_url is None) == (self.mock is None):
            raise UsageError("endpoint needs exactly one of base_url / mock")


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int | None
    completion_tokens: int | None
    total_tokens: int | None
    latency_ms: float
    finish_reason: str | None = None
    usage_estimated: bool = False


def estimate_tokens(text: str) -> int:
    """Whitespace-token fallback when an endpoint omits usage."""
    return len(text.split())


@dataclass
class RunRecord:
    """One model interaction, as persisted to the transcript file."""

    sample_id: str
    run_index: int
    task: str
    gold: str
    bin: str | None
    strategy: str
    format_mode: str
    k: int
    separator: str
    payload_chars: int
    payload_chars_vanilla: int
    content: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    total_tokens: int | None = None
    usage_estimated: bool = False
    latency_ms: float = 0.0
    finish_reason: str | None = None
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, record: dict[str, Any]) -> "RunRecord":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in record.items() if k in names})


class TranscriptWriter:
    """Append-only JSONL sink, safe to share across worker threads."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._fh = self.path.open("a", encoding="utf-8")

    def write(self, record: dict[str, Any]) -> None:
        line = json.dumps(record, ensure_ascii=False)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            self._fh.close()


def read_transcripts(path: str | Path) -> list[RunRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(RunRecord.from_dict(json.loads(line)))
    return records


# ---------------------------------------------------------------------------
# Mock endpoints
# ---------------------------------------------------------------------------

class _MockTransient(Exception):
    """Simulated transient transport failure (retryable)."""


def _corrupt_one_digit(text: str, rng: random.Random) -> str:
    positions = [i for i, ch in enumerate(text) if ch.isdigit()]
    if not positions:
        return text + "0"
    at = rng.choice(positions)
    new = rng.choice([d for d in "0123456789" if d != text[at]])
    return text[:at] + new + text[at + 1:]


class MockModel:
    """Deterministic stand-in for a chat endpoint; see module docstring."""

    def __init__(self, spec: str) -> None:
        parsed = urlparse(spec)
        self.kind = parsed.path
        if self.kind not in {"oracle", "null", "repeat-corruptor", "dispersion"}:
            raise UsageError(f"unknown mock kind {self.kind!r}")
        self.params = {k: float(v) for k, v in parse_qsl(parsed.query)}
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_in_flight = 0
        self.calls = 0
        self._attempts: dict[tuple[str, int], int] = {}

    def reset_stats(self) -> None:
        with self._lock:
            self.max_in_flight = 0
            self.calls = 0
            self._attempts.clear()

    def _wrong_value(self, task: TaskType, gold: str, rng: random.Random) -> str:
        if task is TaskType.REPETITION:
            return _corrupt_one_digit(gold, rng)
        if task in (TaskType.NUMBER_LIST, TaskType.STOCK, TaskType.WEATHER):
            return rng.choice([c for c in _OPTION_LETTERS if c != gold.upper()])
        return str(int(gold) + rng.randint(1, 3))

    def _decide_wrong(self, prompt: RenderedPrompt, run_index: int) -> tuple[bool, random.Random]:
        meta = prompt.metadata
        rng = random.Random(derive_seed("mock", self.kind, meta["sample_id"], run_index))
        draw = rng.random()
        if self.kind == "oracle":
            p = self.params.get("error", 0.0)
            if meta["strategy"] == PromptStrategy.POT.value:
                p *= self.params.get("pot_factor", 0.5)
            return draw < p, rng
        if self.kind == "dispersion":
            n = meta.get("n") or 1
            seg = min(meta["k"], n) if meta["format_mode"] == "sepseq" else n
            p = min(1.0, self.params.get("base", 0.02) * max(0, seg - 1))
            coupled = random.Random(derive_seed("mock-dispersion-u", meta["sample_id"], run_index))
            return coupled.random() < p, rng
        if self.kind == "repeat-corruptor":
            threshold = self.params.get("threshold", 256.0)
            n = meta.get("n") or 0
            if n <= threshold:
                return False, rng
            return draw >= self.params.get("spare", 0.0), rng
        return False, rng  # null decides separately

    def _content(self, prompt: RenderedPrompt, run_index: int) -> str:
        meta = prompt.metadata
        task = TaskType(meta["task"])
        gold = meta["gold"]
        if self.kind == "null":
            rng = random.Random(derive_seed("mock", self.kind, meta["sample_id"], run_index))
            if rng.random() < self.params.get("rate", 1.0):
                return "I'm unable to determine this from the given input."
            wrong = False
        else:
            wrong, rng = self._decide_wrong(prompt, run_index)
        value = self._wrong_value(task, gold, rng) if wrong else gold
        answer = value if task is TaskType.REPETITION else f"Answer: {value}"
        if meta["strategy"] == PromptStrategy.POT.value:
            return f"```python\nprint({answer!r})\n```"
        return answer

    def respond(self, prompt: RenderedPrompt, run_index: int) -> ChatResponse:
        meta = prompt.metadata
        key = (meta["sample_id"], run_index)
        with self._lock:
            self.calls += 1
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
            attempt = self._attempts[key] = self._attempts.get(key, 0) + 1
        try:
            flaky = self.params.get("flaky", 0.0)
            if flaky and attempt == 1:
                rng = random.Random(derive_seed("mock-flaky", meta["sample_id"], run_index))
                if rng.random() < flaky:
                    raise _MockTransient("injected transient failure")
            delay = self.params.get("delay", 0.0)
            if delay:
                time.sleep(delay)
            content = self._content(prompt, run_index)
            prompt_tokens = estimate_tokens(prompt.system_text) + estimate_tokens(prompt.user_text)
            completion = estimate_tokens(content)
            return ChatResponse(
                content=content,
                prompt_tokens=prompt_tokens,
                completion_tokens=completion,
                total_tokens=prompt_tokens + completion,
                latency_ms=0.0,
            )
        finally:
            with self._lock:
                self._in_flight -= 1


_MOCK_CACHE: dict[str, MockModel] = {}
_MOCK_CACHE_LOCK = threading.Lock()


def mock_for(endpoint: ModelEndpoint) -> MockModel:
    """Shared MockModel instance per mock spec (test hook lives here)."""
    if endpoint.mock is None:
        raise UsageError("endpoint has no mock spec")
    with _MOCK_CACHE_LOCK:
        if endpoint.mock not in _MOCK_CACHE:
            _MOCK_CACHE[endpoint.mock] = MockModel(endpoint.mock)
        return _MOCK_CACHE[endpoint.mock]


# ---------------------------------------------------------------------------
# Completion + batch
# ---------------------------------------------------------------------------

def _request_body(
    prompt: RenderedPrompt, model: str, temperature: float, max_tokens: int
) -> dict[str, Any]:
    messages = []
    if prompt.system_text:
        messages.append({"role": "system", "content": prompt.system_text})
    messages.append({"role": "user", "content": prompt.user_text})
    return {
        "model": model,
        "messages": messages,
        "temperature": temperature,
        "max_tokens": max_tokens,
    }


def _http_call(
    endpoint: ModelEndpoint, body: dict[str, Any], policy: RetryPolicy,
    sleep: Callable[[float], None],
) -> ChatResponse:
    import os

    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(endpoint.api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    last_error = "no attempt made"
    for attempt in range(1, policy.max_attempts + 1):
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=endpoint.timeout_s)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_error = f"transport: {exc}"
        else:
            if resp.ok:
                return _parse_http_response(resp, body)
            last_error = f"status {resp.status_code}"
            if resp.status_code not in policy.retryable_statuses:
                raise TransportError(f"non-retryable {last_error} from {url}")
        if attempt < policy.max_attempts:
            sleep(policy.delay(attempt))
    raise TransportError(f"retries exhausted ({policy.max_attempts} attempts): {last_error}")


def _parse_http_response(resp: requests.Response, body: dict[str, Any]) -> ChatResponse:
    try:
        payload = resp.json()
        choice = payload["choices"][0]
        content = choice["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed chat response: {exc}") from exc
    usage = payload.get("usage") or {}
    prompt_tokens = usage.get("prompt_tokens")
    completion_tokens = usage.get("completion_tokens")
    total_tokens = usage.get("total_tokens")
    estimated = prompt_tokens is None or completion_tokens is None
    if estimated:
        # endpoint omitted usage: fall back to whitespace-token estimates
        if prompt_tokens is None:
            prompt_tokens = sum(estimate_tokens(m["content"]) for m in body["messages"])
        if completion_tokens is None:
            completion_tokens = estimate_tokens(content)
        total_tokens = prompt_tokens + completion_tokens
    return ChatResponse(
        content=content,
        prompt_tokens=prompt_tokens,
        completion_tokens=completion_tokens,
        total_tokens=total_tokens,
        latency_ms=resp.elapsed.total_seconds() * 1000.0,
        finish_reason=choice.get("finish_reason"),
        usage_estimated=estimated,
    )


def complete(
    endpoint: ModelEndpoint,
    prompt: RenderedPrompt,
    temperature: float = 0.0,
    max_tokens: int = 4096,
    run_index: int = 0,
    policy: RetryPolicy | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> ChatResponse:
    """One chat request with retries; raises TransportError when exhausted."""
    policy = policy or RetryPolicy()
    if endpoint.mock is not None:
        mock = mock_for(endpoint)
        last_error = "no attempt made"
        for attempt in range(1, policy.max_attempts + 1):
            started = time.perf_counter()
            try:
                resp = mock.respond(prompt, run_index)
            except _MockTransient as exc:
                last_error = str(exc)
                if attempt < policy.max_attempts:
                    sleep(policy.delay(attempt))
                continue
            latency = (time.perf_counter() - started) * 1000.0
            return ChatResponse(
                content=resp.content,
                prompt_tokens=resp.prompt_tokens,
                completion_tokens=resp.completion_tokens,
                total_tokens=resp.total_tokens,
                latency_ms=latency,
                finish_reason="stop",
            )
        raise TransportError(f"retries exhausted ({policy.max_attempts} attempts): {last_error}")
    body = _request_body(prompt, endpoint.model, temperature, max_tokens)
    return _http_call(endpoint, body, policy, sleep)


def _record_from(
    prompt: RenderedPrompt, run_index: int, resp: ChatResponse | None, error: str | None
) -> RunRecord:
    meta = prompt.metadata
    return RunRecord(
        sample_id=meta["sample_id"],
        run_index=run_index,
        task=meta["task"],
        gold=meta["gold"],
        bin=meta.get("bin"),
        strategy=meta["strategy"],
        format_mode=meta["format_mode"],
        k=meta["k"],
        separator=meta["separator"],
        payload_chars=meta["payload_chars"],
        payload_chars_vanilla=meta["payload_chars_vanilla"],
        content=resp.content if resp else "",
        prompt_tokens=resp.prompt_tokens if resp else None,
        completion_tokens=resp.completion_tokens if resp else None,
        total_tokens=resp.total_tokens if resp else None,
        usage_estimated=resp.usage_estimated if resp else False,
        latency_ms=resp.latency_ms if resp else 0.0,
        finish_reason=resp.finish_reason if resp else None,
        error=error,
    )


def run_batch(
    endpoint: ModelEndpoint,
    prompts: Iterable[RenderedPrompt],
    concurrency: int = 8,
    runs: int = 1,
    temperature: float = 0.0,
    max_tokens: int = 4096,
    policy: RetryPolicy | None = None,
    transcript_path: str | Path | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> list[RunRecord]:
    """Execute every prompt `runs` times with at most `concurrency` requests
    in flight. Failed requests yield error-tagged records rather than being
    dropped; the batch aborts only when more than half of all requests fail.
    """
    if concurrency < 1:
        raise UsageError("concurrency must be >= 1")
    if runs < 1:
        raise UsageError("runs must be >= 1")
    prompts = list(prompts)
    if not prompts:
        raise UsageError("no prompts to run")
    policy = policy or RetryPolicy()
    writer = TranscriptWriter(transcript_path) if transcript_path else None
    model = endpoint.model
    temperature_ = temperature
    max_tokens_ = max_tokens

    def one(prompt: RenderedPrompt, run_index: int) -> RunRecord:
        try:
            resp = complete(
                endpoint, prompt,
                temperature=temperature_, max_tokens=max_tokens_,
                run_index=run_index, policy=policy, sleep=sleep,
            )
            record = _record_from(prompt, run_index, resp, None)
        except TransportError as exc:
            record = _record_from(prompt, run_index, None, f"transport_error: {exc}")
        if writer is not None:
            audit = record.to_dict()
            audit["request"] = _request_body(prompt, model, temperature_, max_tokens_)
            writer.write(audit)
        return record

    jobs = [(prompt, run_index) for run_index in range(runs) for prompt in prompts]
    try:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            records = list(pool.map(lambda job: one(*job), jobs))
    finally:
        if writer is not None:
            writer.close()
    failures = sum(1 for r in records if r.error)
    if failures * 2 > len(records):
        raise TransportError(f"{failures}/{len(records)} requests failed; aborting run")
    records.sort(key=lambda r: (r.sample_id, r.run_index))
    return records
