"""Model access: scripted fixtures, a remote chat-completion client, recording.

Every role call goes through one contract — `complete(BackendRequest) ->
BackendReply` — so the engine never knows whether it is talking to a fixture
table, a live model, or a recorder sandwiched between the two.

Step keys make calls addressable: `<session>/L<layer>/R<round>/<role>`, with
an optional trailing scope segment and a `#<attempt>` suffix for grammar
re-asks. A fixture is just a JSON map of step key -> reply text
(`.fixture.json`), which is also exactly what the recording wrapper writes,
so any live session becomes a replayable fixture for free.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import httpx

from ramtn.protocol import Role

DEFAULT_TOKEN_VARIABLE = "RAMTN_API_TOKEN"
DEFAULT_RETRY_BUDGET = 3
DEFAULT_BACKOFF_BASE = 0.5
DEFAULT_BACKOFF_CAP = 8.0
DEFAULT_CONCURRENCY = 4
DEFAULT_TIMEOUT = 30.0

FIXTURE_SUFFIX = ".fixture.json"


# =============================================================================
# Errors
# =============================================================================


class BackendError(Exception):
    """Base class for backend failures."""


class MissingFixtureKey(BackendError):
    """Strict scripted backend had no entry for the requested step key."""

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"no fixture entry for step key {key!r}")


class AuthRejected(BackendError):
    """The remote endpoint rejected credentials; never retried."""


class NetworkExhausted(BackendError):
    """Transient failures persisted past the retry budget."""


class RecordingError(BackendError):
    """The recording wrapper could not persist a call."""


# =============================================================================
# Request / reply
# =============================================================================


@dataclass(frozen=True)
class BackendRequest:
    role: Role
    prompt: str
    session_id: str
    step_key: str
    temperature: float = 0.0
    max_output_tokens: int = 2048


@dataclass(frozen=True)
class BackendReply:
    text: str
    attempt: int = 1
    latency_s: float = 0.0
    metadata: Mapping[str, object] = field(default_factory=dict)


class Backend:
    """Completion contract; implementations must be safe for concurrent calls."""

    def complete(self, request: BackendRequest) -> BackendReply:
        raise NotImplementedError


# =============================================================================
# Scripted backend
# =============================================================================


def wildcard_key(step_key: str) -> str:
    """The same step key with its session segment replaced by '*'."""
    head, sep, rest = step_key.partition("/")
    return f"*{sep}{rest}" if sep else step_key


def base_key(step_key: str) -> str:
    """The step key with any '#<attempt>' re-ask suffix removed."""
    head, sep, _ = step_key.rpartition("#")
    return head if sep else step_key


class ScriptedBackend(Backend):
    """Pure table lookup: fixture[step key] -> reply text.

    Lookup order: the exact key, then the key without its attempt suffix,
    then both again with the session segment wildcarded to '*' (bundled
    fixtures are authored session-agnostic). Strict mode raises on a miss;
    lenient mode returns empty text and tags the reply metadata.
    """

    def __init__(self, fixture: Mapping[str, str], strict: bool = True):
        self._fixture = dict(fixture)
        self._strict = strict

    @classmethod
    def from_file(cls, path: str | Path, strict: bool = True) -> "ScriptedBackend":
        return cls(load_fixture(path), strict=strict)

    def lookup(self, step_key: str) -> str | None:
        for candidate in (
            step_key,
            base_key(step_key),
            wildcard_key(step_key),
            wildcard_key(base_key(step_key)),
        ):
            if candidate in self._fixture:
                return self._fixture[candidate]
        return None

    def complete(self, request: BackendRequest) -> BackendReply:
        text = self.lookup(request.step_key)
        if text is None:
            if self._strict:
                raise MissingFixtureKey(request.step_key)
            return BackendReply(
                text="",
                metadata={"warning": f"no fixture entry for {request.step_key!r}; empty reply"},
            )
        return BackendReply(text=text)


def load_fixture(path: str | Path) -> dict[str, str]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in raw.items()
    ):
        raise BackendError(f"fixture {path} must be a flat map of step key to reply text")
    return raw


def bundled_fixture_dir() -> Path:
    return Path(__file__).resolve().parent / "data" / "fixtures"


def list_bundled_fixtures() -> tuple[str, ...]:
    return tuple(
        sorted(p.name[: -len(FIXTURE_SUFFIX)] for p in bundled_fixture_dir().glob(f"*{FIXTURE_SUFFIX}"))
    )


def load_bundled_fixture(name: str, strict: bool = True) -> ScriptedBackend:
    path = bundled_fixture_dir() / f"{name}{FIXTURE_SUFFIX}"
    if not path.exists():
        known = ", ".join(list_bundled_fixtures())
        raise BackendError(f"no bundled fixture named {name!r}; available: {known}")
    return ScriptedBackend.from_file(path, strict=strict)


# =============================================================================
# Remote chat-completion client
# =============================================================================


@dataclass(frozen=True)
class RemoteConfig:
    base_url: str
    model: str
    token_variable: str = DEFAULT_TOKEN_VARIABLE
    timeout_s: float = DEFAULT_TIMEOUT
    retry_budget: int = DEFAULT_RETRY_BUDGET
    backoff_base_s: float = DEFAULT_BACKOFF_BASE
    backoff_cap_s: float = DEFAULT_BACKOFF_CAP
    concurrency_limit: int = DEFAULT_CONCURRENCY


_SYSTEM_CONTENT = {
    Role.CONSTRUCTOR: "You are the constructor in a recursive adversarial analysis protocol.",
    Role.CRITIC: "You are the critic in a recursive adversarial analysis protocol.",
    Role.RESPONDER: "You are the constructor answering the critic's objections.",
    Role.OBSERVER: "You are the observer recalibrating this round's outcomes.",
}


class RemoteBackend(Backend):
    """Chat-completion client with bounded retries and polite backoff.

    Retries timeouts, 429 and 5xx; 429 honors a Retry-After hint when one is
    given, otherwise (like 5xx/timeouts) waits exponentially: base * 2^n,
    capped. 401/403 raise AuthRejected immediately; other 4xx fail without
    retry. Total attempts never exceed 1 + retry budget.
    """

    def __init__(
        self,
        config: RemoteConfig,
        transport: httpx.BaseTransport | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        token = os.environ.get(config.token_variable, "")
        if not token:
            raise AuthRejected(
                f"no API token: set the {config.token_variable} environment variable"
            )
        self._config = config
        self._sleeper = sleeper
        self._gate = threading.Semaphore(config.concurrency_limit)
        headers = {"Authorization": f"Bearer {token}"}
        self._client = httpx.Client(
            base_url=config.base_url,
            headers=headers,
            timeout=config.timeout_s,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def complete(self, request: BackendRequest) -> BackendReply:
        payload = {
            "model": self._config.model,
            "messages": [
                {"role": "system", "content": _SYSTEM_CONTENT[request.role]},
                {"role": "user", "content": request.prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        attempts = 1 + self._config.retry_budget
        last_error: str = "no attempt made"
        for attempt in range(1, attempts + 1):
            started = time.monotonic()
            try:
                with self._gate:
                    response = self._client.post("/v1/chat/completions", json=payload)
            except httpx.TimeoutException as err:
                last_error = f"timeout: {err}"
                self._pause(attempt, None)
                continue
            except httpx.TransportError as err:
                last_error = f"transport error: {err}"
                self._pause(attempt, None)
                continue
            latency = time.monotonic() - started

            if response.status_code in (401, 403):
                raise AuthRejected(f"endpoint rejected credentials ({response.status_code})")
            if response.status_code == 429 or response.status_code >= 500:
                last_error = f"status {response.status_code}"
                self._pause(attempt, _retry_after_hint(response))
                continue
            if response.status_code >= 400:
                raise BackendError(
                    f"request rejected with status {response.status_code}: {response.text[:200]}"
                )

            try:
                body = response.json()
                text = body["choices"][0]["message"]["content"]
            except (ValueError, LookupError, TypeError) as err:
                raise BackendError(f"malformed completion response: {err}")
            usage = body.get("usage", {}) if isinstance(body, dict) else {}
            return BackendReply(
                text=text if isinstance(text, str) else "",
                attempt=attempt,
                latency_s=latency,
                metadata={"usage": usage},
            )
        raise NetworkExhausted(
            f"gave up after {attempts} attempts on {request.step_key}: {last_error}"
        )

    def _pause(self, attempt: int, hint_s: float | None) -> None:
        if hint_s is not None:
            delay = min(max(hint_s, 0.0), self._config.backoff_cap_s)
        else:
            delay = min(
                self._config.backoff_base_s * (2 ** (attempt - 1)), self._config.backoff_cap_s
            )
        self._sleeper(delay)


def _retry_after_hint(response: httpx.Response) -> float | None:
    raw = response.headers.get("Retry-After")
    if raw is None:
        return None
    try:
        return float(raw)
    except ValueError:
        return None


# =============================================================================
# Recording wrapper
# =============================================================================


class RecordingBackend(Backend):
    """Delegates to an inner backend and persists every (step key, text) pair.

    The output file is rewritten after every call so a crash mid-session
    still leaves a usable partial fixture. The path must be writable at
    construction time — configuration failures must precede the first call.
    """

    def __init__(self, inner: Backend, out_path: str | Path):
        self._inner = inner
        self._path = Path(out_path)
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        try:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            with open(self._path, "w", encoding="utf-8") as handle:
                json.dump({}, handle)
        except OSError as err:
            raise RecordingError(f"fixture path {self._path} is not writable: {err}")

    def complete(self, request: BackendRequest) -> BackendReply:
        reply = self._inner.complete(request)
        with self._lock:
            self._entries[request.step_key] = reply.text
            try:
                tmp = self._path.with_suffix(self._path.suffix + ".tmp")
                with open(tmp, "w", encoding="utf-8") as handle:
                    json.dump(self._entries, handle, ensure_ascii=False, indent=2, sort_keys=True)
                    handle.write("\n")
                os.replace(tmp, self._path)
            except OSError as err:
                raise RecordingError(f"could not persist recording to {self._path}: {err}")
        return reply

    @property
    def entries(self) -> dict[str, str]:
        return dict(self._entries)
