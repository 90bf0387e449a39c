"""Chat-completion backends: a remote HTTP client with bounded retry and the
deterministic offline fallback.

The remote client talks to any OpenAI-style chat-completion endpoint: JSON
body with model, message list, temperature, and max tokens; bearer credential
read from an environment variable. Timeouts, non-success statuses, and
malformed payloads are retried with exponential backoff up to a configured
cap, then surface as typed errors.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import requests

from ..errors import TourSynthError, ValidationError
from ..population import AgentProfile
from ..routing import WardItinerary
from .fallback import fallback_generate

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-4o-mini"
DEFAULT_TEMPERATURE = 0.8
DEFAULT_API_KEY_ENV = "TOURSYNTH_API_KEY"


class BackendError(TourSynthError):
    """Base class for generation-backend failures."""


class TimeoutError_(BackendError):
    """The remote endpoint did not answer within the configured timeout."""


class StatusError(BackendError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"remote returned HTTP {status}{': ' + detail if detail else ''}")
        self.status = status


class PayloadError(BackendError):
    """The remote answered 200 but the payload was not a chat completion."""


@dataclass(frozen=True)
class GenContext:
    """Structured inputs the offline fallback generates from; the remote
    backend works from the prompt text alone and ignores this."""

    profile: AgentProfile
    itinerary: WardItinerary
    seed: int


@dataclass(frozen=True)
class GenRequest:
    prompt: str
    model: str = DEFAULT_MODEL
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = 2048
    context: GenContext | None = None

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValidationError(f"temperature {self.temperature} outside [0, 2]")


@dataclass(frozen=True)
class GenResponse:
    text: str
    finish_reason: str = "stop"
    usage: dict = field(default_factory=dict)


class RemoteBackend:
    """One chat-completion HTTP exchange per request, with bounded retry."""

    def __init__(
        self,
        endpoint: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout_s: float = 30.0,
        max_retries: int = 3,
        backoff_base_s: float = 0.5,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self.session = session or requests.Session()

    def generate(self, req: GenRequest) -> GenResponse:
        payload = {
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"

        last_error: BackendError | None = None
        for attempt in range(self.max_retries + 1):
            if attempt > 0:
                delay = self.backoff_base_s * (2 ** (attempt - 1))
                logger.debug("retrying chat completion in %.2fs (attempt %d)", delay, attempt + 1)
                time.sleep(delay)
            try:
                resp = self.session.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout_s
                )
            except requests.Timeout:
                last_error = TimeoutError_(f"no response within {self.timeout_s}s")
                continue
            except requests.RequestException as exc:
                last_error = StatusError(0, f"transport failure: {exc}")
                continue
            if resp.status_code != 200:
                last_error = StatusError(resp.status_code, resp.text[:200])
                continue
            try:
                data = resp.json()
                choice = data["choices"][0]
                text = choice["message"]["content"]
                if not isinstance(text, str):
                    raise TypeError("content is not a string")
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                last_error = PayloadError(f"malformed completion payload: {exc}")
                continue
            usage = data.get("usage", {})
            if usage:
                logger.debug("token usage: %s", usage)
            return GenResponse(
                text=text,
                finish_reason=choice.get("finish_reason", "stop"),
                usage=usage if isinstance(usage, dict) else {},
            )
        assert last_error is not None
        raise last_error


class FallbackBackend:
    """Deterministic offline generator; needs the structured request context."""

    def generate(self, req: GenRequest) -> GenResponse:
        if req.context is None:
            raise ValidationError("fallback backend requires a structured generation context")
        text = fallback_generate(req.context.profile, req.context.itinerary, req.context.seed)
        return GenResponse(text=text, finish_reason="fallback")


def call_generator(req: GenRequest, backend) -> GenResponse:
    """Dispatch one generation request to the configured backend."""
    return backend.generate(req)
