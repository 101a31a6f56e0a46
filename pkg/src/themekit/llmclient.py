"""Chat-completion HTTP client with retries, plus structured-output helpers.

Speaks the common inference-server wire protocol: POST {base_url}/chat/completions
with {model, messages, temperature, max_tokens}, content read from
choices[0].message.content. Transport errors and 5xx responses retry with
exponential backoff; 4xx never retries.
"""

from __future__ import annotations

import ast
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import requests

SYSTEM_PROMPT_ENV = "THEMEKIT_SYSTEM_PROMPT"
ENDPOINT_ENV = "THEMEKIT_ENDPOINT"
API_KEY_ENV = "THEMEKIT_API_KEY"
MAX_PARALLEL_ENV = "THEMEKIT_MAX_PARALLEL"


class LlmError(Exception):
    """Base class for client-side LLM failures."""


class TransportError(LlmError):
    """Connection failures, timeouts, and 5xx responses after all retries."""


class RequestError(LlmError):
    """4xx responses and malformed successes; never retried."""

    def __init__(self, message: str, status: Optional[int] = None, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body


class ExtractionError(LlmError):
    """No parseable JSON object in the model output."""


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base_ms: int = 50
    backoff_factor: float = 2.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    api_key: Optional[str] = None
    timeout_ms: int = 60_000
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    max_parallel: int = 1

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")

    @staticmethod
    def from_env(base_url: Optional[str] = None, **overrides) -> "EndpointConfig":
        url = base_url or os.environ.get(ENDPOINT_ENV)
        if not url:
            raise ValueError(f"no endpoint given and {ENDPOINT_ENV} is unset")
        kwargs = dict(overrides)
        kwargs.setdefault("api_key", os.environ.get(API_KEY_ENV))
        if "max_parallel" not in kwargs and os.environ.get(MAX_PARALLEL_ENV):
            kwargs["max_parallel"] = int(os.environ[MAX_PARALLEL_ENV])
        return EndpointConfig(base_url=url, **kwargs)


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if not self.messages or self.messages[0]["role"] != "system":
            raise ValueError("first message must be the system prompt")
        if self.temperature != 0.0:
            raise ValueError("temperature is fixed at 0 for reproducibility")
        for msg in self.messages:
            if msg["role"] not in ("system", "user"):
                raise ValueError(f"unsupported message role: {msg['role']!r}")

    @staticmethod
    def build(model: str, system: str, user: str, max_tokens: int = 1024) -> "ChatRequest":
        return ChatRequest(
            model=model,
            messages=(
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ),
            max_tokens=max_tokens,
        )


@dataclass(frozen=True)
class ChatResponse:
    content: str
    usage: Optional[dict] = None
    latency_ms: int = 0


_thread_local = threading.local()


def _session() -> requests.Session:
    session = getattr(_thread_local, "session", None)
    if session is None:
        session = requests.Session()
        _thread_local.session = session
    return session


def complete(cfg: EndpointConfig, req: ChatRequest, *, sleep=time.sleep) -> ChatResponse:
    """Send one chat request, retrying transport errors and 5xx with backoff."""
    url = cfg.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    if cfg.api_key:
        headers["Authorization"] = f"Bearer {cfg.api_key}"
    payload = {
        "model": req.model,
        "messages": list(req.messages),
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    timeout_s = cfg.timeout_ms / 1000.0
    last_error: Optional[Exception] = None
    for attempt in range(1, cfg.retry.max_attempts + 1):
        started = time.monotonic()
        try:
            response = _session().post(url, json=payload, headers=headers, timeout=timeout_s)
        except requests.RequestException as exc:
            last_error = exc
        else:
            if 400 <= response.status_code < 500:
                raise RequestError(
                    f"request rejected with HTTP {response.status_code}: "
                    f"{response.text[:200]}",
                    status=response.status_code,
                    body=response.text[:1000],
                )
            if response.status_code >= 500:
                last_error = TransportError(
                    f"HTTP {response.status_code}: {response.text[:200]}"
                )
            else:
                try:
                    data = response.json()
                    content = data["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise RequestError(
                        f"malformed completion response: {response.text[:200]}",
                        status=response.status_code,
                        body=response.text[:1000],
                    ) from exc
                latency = int((time.monotonic() - started) * 1000)
                return ChatResponse(
                    content=content,
                    usage=data.get("usage"),
                    latency_ms=latency,
                )
        if attempt < cfg.retry.max_attempts:
            delay_ms = cfg.retry.backoff_base_ms * (cfg.retry.backoff_factor ** (attempt - 1))
            sleep(delay_ms / 1000.0)
    raise TransportError(
        f"request failed after {cfg.retry.max_attempts} attempts: {last_error}"
    )


@dataclass(frozen=True)
class BatchResult:
    key: str
    response: Optional[ChatResponse] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.response is not None


def complete_batch(cfg: EndpointConfig, reqs: Sequence[tuple]) -> list:
    """Run keyed requests with at most cfg.max_parallel in flight.

    `reqs` is a sequence of (key, ChatRequest); the result list is aligned
    to the input order. Per-item failures are carried in the results, never
    raised.
    """
    if not reqs:
        return []

    def one(item: tuple) -> BatchResult:
        key, req = item
        try:
            return BatchResult(key=key, response=complete(cfg, req))
        except LlmError as exc:
            return BatchResult(key=key, error=f"{type(exc).__name__}: {exc}")

    if cfg.max_parallel == 1 or len(reqs) == 1:
        return [one(item) for item in reqs]
    with ThreadPoolExecutor(max_workers=cfg.max_parallel) as pool:
        return list(pool.map(one, reqs))


def _find_balanced(content: str, open_char: str, close_char: str) -> Optional[str]:
    depth = 0
    start = -1
    in_string: Optional[str] = None
    escaped = False
    for i, ch in enumerate(content):
        if in_string is not None:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == in_string:
                in_string = None
            continue
        if ch in ("'", '"') and depth > 0:
            in_string = ch
        elif ch == open_char:
            if depth == 0:
                start = i
            depth += 1
        elif ch == close_char and depth > 0:
            depth -= 1
            if depth == 0:
                return content[start : i + 1]
    return None


def extract_json_object(content: str) -> dict:
    """Parse the first balanced {...} block out of model output.

    Tolerates surrounding prose, code fences, and single-quoted
    pseudo-JSON. Keys are lowercased so lookups are case-insensitive.
    """
    block = _find_balanced(content, "{", "}")
    if block is None:
        excerpt = content.strip()[:120]
        raise ExtractionError(f"no JSON object found in output: {excerpt!r}")
    obj = None
    try:
        obj = json.loads(block)
    except json.JSONDecodeError:
        try:
            obj = ast.literal_eval(block)
        except (ValueError, SyntaxError):
            obj = None
    if not isinstance(obj, dict):
        raise ExtractionError(f"unparseable JSON object: {block[:120]!r}")
    return {str(k).lower(): v for k, v in obj.items()}


def extract_json_array(content: str) -> Optional[list]:
    """First balanced [...] block parsed as a list, or None."""
    block = _find_balanced(content, "[", "]")
    if block is None:
        return None
    for parser in (json.loads, ast.literal_eval):
        try:
            value = parser(block)
        except (ValueError, SyntaxError):
            continue
        if isinstance(value, list):
            return value
    return None


def as_bool(value) -> bool:
    """Yes-ish values to True; No/Unknown/absent to False."""
    if isinstance(value, bool):
        return value
    if value is None:
        return False
    text = str(value).strip().lower()
    return text in ("yes", "y", "true", "1")


def as_tristate(value) -> str:
    """'yes', 'no', or 'unknown' (anything unrecognized counts as 'no')."""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if value is None:
        return "no"
    text = str(value).strip().lower()
    if text in ("yes", "y", "true", "1"):
        return "yes"
    if text in ("unknown", "unclear", "unsure"):
        return "unknown"
    return "no"
