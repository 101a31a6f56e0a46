"""A deterministic local chat-completions endpoint for hermetic tests.

Responses come from a fixture script: an ordered list of rules, each with a
match condition and a canned reply. Rules are evaluated top to bottom per
request:

    {"match": {"mode": "substring", "needle": "Sentence: ..."},
     "respond": "A", "status": 200, "delay_ms": 0}

Modes:
    exact      request content equals the needle
    substring  needle (or every needle in a list) occurs in the content
    sequence   fires once, in file order: the Nth unconsumed sequence rule
               answers the Nth request that reaches it
    any        catch-all

Request content is the concatenation of all message contents. Unmatched
requests get HTTP 500 unless the script ends with an `any` rule.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional, Sequence


class FixtureError(Exception):
    pass


_MODES = ("exact", "substring", "sequence", "any")


@dataclass
class FixtureRule:
    mode: str
    needles: tuple = ()
    respond: str = ""
    status: int = 200
    delay_ms: int = 0
    consumed: bool = False  # sequence rules only

    @staticmethod
    def from_obj(obj: dict, index: int) -> "FixtureRule":
        match = obj.get("match", {})
        mode = match.get("mode", "any")
        if mode not in _MODES:
            raise FixtureError(f"rule {index}: unknown match mode {mode!r}")
        needle = match.get("needle")
        if needle is None:
            needles: tuple = ()
        elif isinstance(needle, str):
            needles = (needle,)
        elif isinstance(needle, list):
            needles = tuple(str(n) for n in needle)
        else:
            raise FixtureError(f"rule {index}: needle must be a string or list")
        if mode in ("exact", "substring") and not needles:
            raise FixtureError(f"rule {index}: mode {mode!r} requires a needle")
        return FixtureRule(
            mode=mode,
            needles=needles,
            respond=str(obj.get("respond", "")),
            status=int(obj.get("status", 200)),
            delay_ms=int(obj.get("delay_ms", 0)),
        )

    def matches(self, content: str) -> bool:
        if self.mode == "any":
            return True
        if self.mode == "sequence":
            return not self.consumed
        if self.mode == "exact":
            return content == self.needles[0]
        return all(needle in content for needle in self.needles)


def load_fixture(path) -> list:
    rules = []
    with open(path, encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FixtureError(f"rule {index}: invalid JSON: {exc}") from exc
            rules.append(FixtureRule.from_obj(obj, index))
    return rules


def dump_fixture(rules: Sequence[dict], path) -> None:
    """Write rule dicts as fixture JSONL (validates by round-parsing)."""
    with open(path, "w", encoding="utf-8") as fh:
        for index, obj in enumerate(rules):
            FixtureRule.from_obj(obj, index)
            fh.write(json.dumps(obj) + "\n")


@dataclass
class ServerStats:
    requests: int = 0
    unmatched: int = 0
    in_flight: int = 0
    peak_in_flight: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def enter(self) -> None:
        with self._lock:
            self.requests += 1
            self.in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)

    def exit(self) -> None:
        with self._lock:
            self.in_flight -= 1


class MockChatServer:
    """Serve the chat-completions protocol from a fixture script."""

    def __init__(self, rules: Sequence[FixtureRule], host: str = "127.0.0.1", port: int = 0):
        self.rules = list(rules)
        self.stats = ServerStats()
        self._rule_lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args) -> None:  # quiet
                pass

            def do_POST(self) -> None:
                server.stats.enter()
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    body = self.rfile.read(length)
                    if not self.path.rstrip("/").endswith("/chat/completions"):
                        self._reply(404, {"error": "unknown path"})
                        return
                    try:
                        payload = json.loads(body)
                        messages = payload["messages"]
                        content = "\n".join(str(m.get("content", "")) for m in messages)
                    except (ValueError, KeyError, TypeError):
                        self._reply(400, {"error": "malformed request body"})
                        return
                    rule = server._pick_rule(content)
                    if rule is None:
                        server.stats.unmatched += 1
                        self._reply(500, {"error": "no fixture rule matched request"})
                        return
                    if rule.delay_ms:
                        time.sleep(rule.delay_ms / 1000.0)
                    if rule.status != 200:
                        self._reply(rule.status, {"error": rule.respond or "scripted failure"})
                        return
                    self._reply(
                        200,
                        {
                            "id": "mock",
                            "object": "chat.completion",
                            "model": payload.get("model", "mock"),
                            "choices": [
                                {
                                    "index": 0,
                                    "message": {"role": "assistant", "content": rule.respond},
                                    "finish_reason": "stop",
                                }
                            ],
                            "usage": {
                                "prompt_tokens": len(content.split()),
                                "completion_tokens": len(rule.respond.split()),
                            },
                        },
                    )
                finally:
                    server.stats.exit()

            def _reply(self, status: int, obj: dict) -> None:
                data = json.dumps(obj).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._httpd.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    def _pick_rule(self, content: str) -> Optional[FixtureRule]:
        with self._rule_lock:
            for rule in self.rules:
                if rule.matches(content):
                    if rule.mode == "sequence":
                        rule.consumed = True
                    return rule
        return None

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockChatServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self) -> "MockChatServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve_mock(script_path, host: str = "127.0.0.1", port: int = 0) -> MockChatServer:
    """Load a fixture file and return a started server (caller stops it)."""
    return MockChatServer(load_fixture(script_path), host=host, port=port).start()
