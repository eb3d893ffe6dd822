"""Clients for the chat-completion describer API.

The real transport posts a prompt plus base64 images to an HTTP
endpoint; the mock transport replays fixture files and keeps the whole
pipeline offline.  :func:`describe_sequence` wraps a transport with
retry, exponential backoff and a spend budget.

Transient failures (rate limits, server errors, network drops) are
retried; authentication and malformed-request errors are not.
"""
from __future__ import annotations

import base64
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .prompt import PROMPT
from .records import LvdRecord, ParserConfig, parse_response
from .sequences import FrameSequence

MAX_RETRIES = 3
BASE_DELAY_S = 1.0
BACKOFF_MULTIPLIER = 2.0


class TransportError(RuntimeError):
    """Base class; ``retryable`` marks transient failures."""

    retryable = False


class RateLimitError(TransportError):
    retryable = True


class ServerError(TransportError):
    retryable = True


class NetworkError(TransportError):
    retryable = True


class AuthError(TransportError):
    retryable = False


class BadRequestError(TransportError):
    retryable = False


class BudgetExceededError(RuntimeError):
    pass


@dataclass(frozen=True)
class TransportResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class LvdRequest:
    sequence: FrameSequence
    prompt: str = PROMPT
    model: str = "gpt-4o"
    max_tokens: int = 1024


class Transport(Protocol):
    def send(self, request: LvdRequest) -> TransportResponse: ...


@dataclass
class UsageBudget:
    """Accumulated token spend with an optional hard cap (currency
    units; rates are per 1000 tokens)."""

    max_cost: float | None = None
    prompt_rate: float = 0.0025
    completion_rate: float = 0.01
    prompt_tokens: int = 0
    completion_tokens: int = 0
    n_requests: int = 0

    @property
    def cost(self) -> float:
        return (self.prompt_tokens * self.prompt_rate
                + self.completion_tokens * self.completion_rate) / 1000.0

    def charge(self, response: TransportResponse) -> None:
        self.prompt_tokens += response.prompt_tokens
        self.completion_tokens += response.completion_tokens
        self.n_requests += 1
        if self.max_cost is not None and self.cost > self.max_cost:
            raise BudgetExceededError(
                f"describer budget exceeded: {self.cost:.4f} > {self.max_cost:.4f}"
            )


class HttpChatTransport:
    """Chat-completion transport over HTTP.

    The API key is read from the environment variable named by
    ``api_key_env``; images are attached base64-encoded.
    """

    def __init__(self, endpoint: str, api_key_env: str = "LVD_API_KEY",
                 timeout: float = 60.0, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._client = client

    def send(self, request: LvdRequest) -> TransportResponse:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise AuthError(f"no API key in ${self.api_key_env}")
        content: list[dict] = [{"type": "text", "text": request.prompt}]
        for path in request.sequence.frame_paths:
            data = base64.b64encode(Path(path).read_bytes()).decode("ascii")
            content.append({
                "type": "image_url",
                "image_url": {"url": f"data:image/jpeg;base64,{data}"},
            })
        payload = {
            "model": request.model,
            "max_tokens": request.max_tokens,
            "messages": [{"role": "user", "content": content}],
        }
        client = self._client or httpx.Client(timeout=self.timeout)
        try:
            resp = client.post(
                self.endpoint, json=payload,
                headers={"Authorization": f"Bearer {key}"},
            )
        except httpx.HTTPError as exc:
            raise NetworkError(str(exc)) from exc
        finally:
            if self._client is None:
                client.close()
        if resp.status_code == 401 or resp.status_code == 403:
            raise AuthError(f"HTTP {resp.status_code}")
        if resp.status_code == 429:
            raise RateLimitError("rate limited")
        if resp.status_code >= 500:
            raise ServerError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise BadRequestError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        body = resp.json()
        usage = body.get("usage", {})
        return TransportResponse(
            text=body["choices"][0]["message"]["content"],
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
        )


class MockTransport:
    """Replay fixture files: ``<individual>_<t>.txt`` per window, with
    ``default.txt`` as fallback.  Never touches the network."""

    def __init__(self, fixture_dir):
        self.fixture_dir = Path(fixture_dir)

    def send(self, request: LvdRequest) -> TransportResponse:
        seq = request.sequence
        candidates = [
            self.fixture_dir / f"{seq.individual_id}_{seq.t}.txt",
            self.fixture_dir / "default.txt",
        ]
        for path in candidates:
            if path.exists():
                text = path.read_text(encoding="utf-8")
                return TransportResponse(
                    text=text,
                    prompt_tokens=len(request.prompt.split()),
                    completion_tokens=len(text.split()),
                )
        raise BadRequestError(
            f"no fixture for window ({seq.individual_id!r}, {seq.t})"
        )


def describe_sequence(request: LvdRequest, transport: Transport,
                      max_retries: int = MAX_RETRIES,
                      base_delay: float = BASE_DELAY_S,
                      multiplier: float = BACKOFF_MULTIPLIER,
                      sleep: Callable[[float], None] = time.sleep,
                      budget: UsageBudget | None = None) -> TransportResponse:
    """Send one request with retry and backoff.

    Retryable transport failures are re-sent up to ``max_retries`` times
    with delays ``base_delay * multiplier**attempt``; terminal failures
    propagate immediately.  The budget, when given, is charged per
    successful response and raises once the cap is crossed.
    """
    attempt = 0
    while True:
        try:
            response = transport.send(request)
        except TransportError as exc:
            if not exc.retryable or attempt >= max_retries:
                raise
            sleep(base_delay * multiplier ** attempt)
            attempt += 1
            continue
        if budget is not None:
            budget.charge(response)
        return response


@dataclass
class DescribedWindow:
    """A parsed description tied back to its window."""

    individual_id: str
    t: int
    record: LvdRecord
    lat: float
    lon: float


def describe_windows(sequences, transport: Transport,
                     parser: ParserConfig | None = None,
                     budget: UsageBudget | None = None,
                     model: str = "gpt-4o",
                     sleep: Callable[[float], None] = time.sleep):
    """Describe and parse a batch of sequences.

    Returns ``(described, failures)`` where ``failures`` is a list of
    (sequence, diagnostics) for windows whose response did not parse.
    """
    described, failures = [], []
    for seq in sequences:
        response = describe_sequence(
            LvdRequest(sequence=seq, model=model), transport,
            sleep=sleep, budget=budget,
        )
        outcome = parse_response(response.text, parser)
        if outcome.ok:
            described.append(DescribedWindow(
                individual_id=seq.individual_id, t=seq.t,
                record=outcome.record, lat=seq.lat, lon=seq.lon,
            ))
        else:
            failures.append((seq, outcome.diagnostics))
    return described, failures
