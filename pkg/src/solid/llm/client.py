"""Chat-completion client and the language-model agent built on it."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass

import requests

from .confidence import ParseError, levels_to_proposal, parse_response
from .prompt import build_prompt, corrective_message

logger = logging.getLogger(__name__)

API_KEY_ENV = "SOLID_LLM_API_KEY"


class AgentUnavailable(RuntimeError):
    """The language-model agent could not produce a usable proposal."""


class TransportError(RuntimeError):
    """A single chat-completion request failed."""


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o-mini"
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")

    @property
    def api_key(self):
        # read at call time so the secret never lands in configs or reprs
        return os.environ.get(API_KEY_ENV, "")


class ChatClient:
    """Minimal client for ``POST {base_url}/chat/completions``.

    ``session`` may be any object with a ``requests``-compatible ``post``.
    """

    def __init__(self, config, session=None, sleep=time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self._sleep = sleep
        self._lock = threading.Lock()

    def payload(self, messages):
        return {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        }

    def _post_once(self, messages):
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        key = self.config.api_key
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self.session.post(
                url, json=self.payload(messages), headers=headers, timeout=self.config.timeout
            )
            resp.raise_for_status()
            data = resp.json()
            return data["choices"][0]["message"]["content"]
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed chat-completion response: {exc}") from exc

    def complete(self, messages):
        """Return the assistant text, retrying transport failures ``max_retries`` times."""
        last = None
        # one request in flight per client
        with self._lock:
            for attempt in range(self.config.max_retries + 1):
                try:
                    return self._post_once(messages)
                except TransportError as exc:
                    last = exc
                    logger.warning("chat completion attempt %d failed: %s", attempt + 1, exc)
                    if attempt < self.config.max_retries:
                        self._sleep(self.config.backoff * 2**attempt)
        raise AgentUnavailable(
            f"chat completion failed after {self.config.max_retries + 1} attempts: {last}"
        )


class Transcript:
    """Append-only audit log of prompts and responses, optionally mirrored to JSONL."""

    def __init__(self, path=None):
        self.path = path
        self.records = []
        self._lock = threading.Lock()

    def append(self, record):
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")


def prompt_hash(system, user):
    return hashlib.sha256((system + "\x00" + user).encode("utf-8")).hexdigest()


def propose_llm(ctx, client, transcript=None, iteration=None):
    """One agent step: prompt, query, parse, map levels to weights.

    A parse failure triggers exactly one corrective re-prompt. Transport
    failures are retried inside ``client``. Either way the final failure is
    raised as :class:`AgentUnavailable`.
    """
    system, user = build_prompt(ctx)
    messages = [
        {"role": "system", "content": system},
        {"role": "user", "content": user},
    ]
    phash = prompt_hash(system, user)
    error = None
    for retry in range(2):
        response = client.complete(messages)
        try:
            levels = parse_response(response, ctx.tickers)
        except ParseError as exc:
            error = exc
            _log(transcript, ctx, iteration, phash, response, None, retry, str(exc))
            messages = messages + [
                {"role": "assistant", "content": response},
                {"role": "user", "content": corrective_message(ctx, exc)},
            ]
            continue
        _log(transcript, ctx, iteration, phash, response, levels, retry, None)
        return levels_to_proposal(levels, ctx.tickers, sparse=ctx.sparse_mode)
    raise AgentUnavailable(f"unparseable response after corrective retry: {error}")


def _log(transcript, ctx, iteration, phash, response, levels, retry, error):
    if transcript is None:
        return
    transcript.append(
        {
            "period": ctx.period,
            "iteration": iteration,
            "prompt_hash": phash,
            "response": response,
            "parsed_levels": None if levels is None else {t: lv.label for t, lv in levels.items()},
            "retry": retry,
            "error": error,
        }
    )


class ChatLLMAgent:
    """Consensus agent that asks a chat model for confidence levels each iteration."""

    name = "llm"

    def __init__(self, context, client, transcript=None):
        self.context = context
        self.client = client
        self.transcript = transcript
        self.calls = 0

    def propose(self, public, price, rho=None, consistency_set=None):
        self.calls += 1
        ctx = self.context.with_state(decision_price=price, public_plan=public)
        return propose_llm(ctx, self.client, self.transcript, iteration=self.calls)
