"""
The remote reasoning agent.

``OpenAIChatClient`` talks to any OpenAI-compatible chat-completion endpoint.
``TranscriptClient`` wraps it to append every exchange to ``transcript.jsonl``
and to serve recorded responses back; with no inner client it is the
offline replay mode and never touches the network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Protocol, Sequence

import openai

from ..errors import ConfigError, NoJsonFound, ProposalError, SchemaError, TransportError, UnrepairableParams
from ..history import IterationRecord
from ..params import DesignParams, ParamSpace, SpecTargets
from .prompts import FORMAT_REMINDER, GUIDANCE_MODES, HISTORY_WINDOW, ROLE, build_prompt, build_recovery_prompt
from .proposal import Proposal, parse_proposal

log = logging.getLogger(__name__)

Message = Dict[str, str]

DEFAULT_API_KEY_ENV = "TCADLOOP_API_KEY"
BASE_URL_ENV = "TCADLOOP_BASE_URL"

# transient failures; every other APIError is final
RETRYABLE_ERRORS = (openai.APIConnectionError, openai.APITimeoutError, openai.RateLimitError, openai.InternalServerError)


@dataclass(frozen=True)
class LLMConfig:
    model: str = "o3-mini"
    base_url: Optional[str] = None
    api_key_env: str = DEFAULT_API_KEY_ENV
    temperature: float = 0.2
    max_attempts: int = 3
    backoff_s: float = 1.0
    timeout_s: float = 600.0

    def __post_init__(self) -> None:
        if not self.model:
            raise ConfigError("llm model must be a non-empty string")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f"llm temperature must be in [0, 2], got {self.temperature}")
        if self.max_attempts < 1:
            raise ConfigError(f"llm max_attempts must be >= 1, got {self.max_attempts}")
        if self.backoff_s < 0 or self.timeout_s <= 0:
            raise ConfigError("llm backoff_s must be >= 0 and timeout_s > 0")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "base_url": self.base_url,
            "api_key_env": self.api_key_env,
            "temperature": self.temperature,
            "max_attempts": self.max_attempts,
            "backoff_s": self.backoff_s,
            "timeout_s": self.timeout_s,
        }

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "LLMConfig":
        data = dict(data or {})
        unknown = sorted(set(data) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigError(f"unknown llm fields: {', '.join(unknown)}")
        return cls(**data)


class ChatClient(Protocol):
    model: str
    temperature: float

    def complete(self, messages: Sequence[Message]) -> str: ...


def request_hash(model: str, temperature: float, messages: Sequence[Message]) -> str:
    canonical = json.dumps(
        {"model": model, "temperature": temperature, "messages": list(messages)},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class OpenAIChatClient:
    """Chat completions with a fixed number of attempts and exponential backoff."""

    def __init__(self, cfg: LLMConfig, *, sleep: Callable[[float], None] = time.sleep, client: Any = None):
        self.cfg = cfg
        self.model = cfg.model
        self.temperature = cfg.temperature
        self._sleep = sleep
        if client is None:
            api_key = os.environ.get(cfg.api_key_env)
            if not api_key:
                raise ConfigError(f"environment variable {cfg.api_key_env} holds no API key")
            client = openai.OpenAI(
                api_key=api_key,
                base_url=cfg.base_url or os.environ.get(BASE_URL_ENV) or None,
                timeout=cfg.timeout_s,
                max_retries=0,
            )
        self._client = client

    def complete(self, messages: Sequence[Message]) -> str:
        last: Optional[Exception] = None
        for attempt in range(1, self.cfg.max_attempts + 1):
            try:
                resp = self._client.chat.completions.create(
                    model=self.model,
                    messages=list(messages),
                    temperature=self.temperature,
                )
            except RETRYABLE_ERRORS as exc:
                last = exc
                log.warning("llm request failed attempt=%d/%d error=%s", attempt, self.cfg.max_attempts, exc)
                if attempt < self.cfg.max_attempts:
                    self._sleep(self.cfg.backoff_s * 2 ** (attempt - 1))
                continue
            except openai.APIError as exc:
                log.error("llm request rejected error=%s", exc)
                raise TransportError(f"chat completion rejected: {exc}") from exc
            if not resp.choices:
                raise TransportError("chat completion returned no choices")
            return resp.choices[0].message.content or ""
        raise TransportError(f"chat completion failed after {self.cfg.max_attempts} attempts: {last}")


class TranscriptClient:
    """
    Record/replay wrapper. Requests are matched by ``request_hash``; repeated
    identical requests consume their recorded responses in order.
    """

    def __init__(
        self,
        path: Path,
        model: str,
        temperature: float,
        inner: Optional[ChatClient] = None,
        record: bool = True,
    ):
        self.path = Path(path)
        self.model = model
        self.temperature = temperature
        self.inner = inner
        self.record = record
        self._recorded: Dict[str, List[str]] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open("r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                    self._recorded.setdefault(entry["request_hash"], []).append(entry["response"])
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ConfigError(f"{self.path} line {line_no}: unreadable transcript entry ({exc})") from exc
        log.info("transcript loaded path=%s requests=%d", self.path, len(self._recorded))

    def _append(self, key: str, messages: Sequence[Message], response: str) -> None:
        entry = {
            "request_hash": key,
            "model": self.model,
            "temperature": self.temperature,
            "messages": list(messages),
            "response": response,
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(entry, sort_keys=True) + "\n")
            f.flush()
            os.fsync(f.fileno())

    def complete(self, messages: Sequence[Message]) -> str:
        key = request_hash(self.model, self.temperature, messages)
        queue = self._recorded.get(key)
        if queue:
            log.info("transcript replay request_hash=%s", key[:12])
            return queue.pop(0)
        if self.inner is None:
            raise TransportError(f"replay transcript {self.path} has no response for request {key[:12]}")
        response = self.inner.complete(messages)
        if self.record:
            self._append(key, messages, response)
        return response


class LLMAgent:
    name = "llm"

    def __init__(
        self,
        space: ParamSpace,
        targets: SpecTargets,
        mode: str,
        client: ChatClient,
        seed: Optional[DesignParams] = None,
        *,
        include_bands: bool = False,
        window: int = HISTORY_WINDOW,
    ):
        if mode not in GUIDANCE_MODES:
            raise ConfigError(f"guidance must be one of {list(GUIDANCE_MODES)}, got {mode!r}")
        self.space = space
        self.targets = targets
        self.mode = mode
        self.client = client
        self.seed = seed
        self.include_bands = include_bands
        self.window = window

    def _ask(self, prompt: str) -> Proposal:
        messages: List[Message] = [{"role": "system", "content": ROLE}, {"role": "user", "content": prompt}]
        raw = self.client.complete(messages)
        try:
            return parse_proposal(raw, self.space)
        except (NoJsonFound, SchemaError, UnrepairableParams) as first:
            log.warning("llm reply unusable, asking again error=%s", first)
            messages += [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": f"{FORMAT_REMINDER}\nProblem: {first}"},
            ]
            raw = self.client.complete(messages)
            try:
                p = parse_proposal(raw, self.space)
            except (NoJsonFound, SchemaError, UnrepairableParams) as second:
                raise ProposalError(f"two unusable replies: {first}; then {second}") from second
            return Proposal(p.params, p.rationale, p.raw_response, parse_retries=1)

    def propose(self, history: Sequence[IterationRecord]) -> Proposal:
        prompt = build_prompt(
            history, self.space, self.targets, self.mode, window=self.window, include_bands=self.include_bands
        )
        return self._ask(prompt)

    def recover(
        self,
        history: Sequence[IterationRecord],
        last_good: Optional[IterationRecord],
        failed: DesignParams,
        diagnostic: str,
    ) -> Proposal:
        failed_index = history[-1].index if history else None
        return self._ask(
            build_recovery_prompt(last_good, failed, diagnostic, self.space, seed=self.seed, failed_index=failed_index)
        )


def propose_llm(
    history: Sequence[IterationRecord],
    space: ParamSpace,
    targets: SpecTargets,
    mode: str,
    client: ChatClient,
) -> Proposal:
    return LLMAgent(space, targets, mode, client).propose(history)
