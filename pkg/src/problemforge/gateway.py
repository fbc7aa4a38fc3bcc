"""Chat-completion access for every stage: real HTTP backend, scripted mock backend,
on-disk response cache, retries with backoff, and a global in-flight limit."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import httpx
import yaml

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.6
DEFAULT_MAX_TOKENS = 2048
DEFAULT_IN_FLIGHT_LIMIT = 8


class RoleTag(str, Enum):
    CONCEPT_EXTRACT = "concept_extract"
    PROBLEM_GEN = "problem_gen"
    TEST_INPUT_GEN = "test_input_gen"
    SOLUTION_GEN = "solution_gen"
    TEACHER_DISTILL = "teacher_distill"


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


class BackendError(RuntimeError):
    """Non-retryable backend failure: auth, config, or unscripted mock prompt."""


class TransientBackendError(RuntimeError):
    """Retryable failure: rate limit, server error, timeout."""


@dataclass(frozen=True)
class CompletionRequest:
    role: RoleTag
    prompt_text: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    sample_index: int = 0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.sample_index < 0:
            raise ValueError(f"sample_index must be >= 0, got {self.sample_index}")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    finish_reason: FinishReason
    usage: dict
    cache_hit: bool = False

    def __post_init__(self):
        if (self.finish_reason is FinishReason.ERROR) != (self.text == ""):
            raise ValueError("finish_reason=error iff text is empty")

    @property
    def ok(self) -> bool:
        return self.finish_reason is not FinishReason.ERROR


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 4
    base_delay: float = 1.0
    max_delay: float = 120.0

    def delay(self, attempt: int) -> float:
        return min(self.base_delay * 2 ** (attempt - 1), self.max_delay)


class Backend:
    """One completion attempt; retries and caching live in the gateway."""

    def model_for(self, role: RoleTag) -> str:
        raise NotImplementedError

    def complete_once(self, request: CompletionRequest) -> tuple[str, FinishReason, dict]:
        raise NotImplementedError


def _usage(prompt_text: str, completion_text: str) -> dict:
    return {
        "prompt_tokens": len(prompt_text.split()),
        "completion_tokens": len(completion_text.split()),
    }


class MockBackend(Backend):
    """Deterministic backend driven by a YAML script.

    Script shape:
      defaults:            # fallback response text per role
        solution_gen: "..."
      rules:               # first match wins
        - role: solution_gen
          contains: "substring of prompt"     # optional
          prompt_sha256: "hex digest"         # optional, full prompt hash
          response: "..."                     # or responses: [indexed by sample_index]
          errors_before: 2                    # transient failures before succeeding

    `responses` is indexed by sample_index modulo its length, so M samples of one
    prompt get distinct texts without scripting every index.
    """

    def __init__(self, script: dict):
        self.defaults: dict = script.get("defaults", {}) or {}
        self.rules: list = script.get("rules", []) or []
        self.models: dict = script.get("models", {}) or {}
        self._attempts: dict[tuple[int, str], int] = {}
        self._lock = threading.Lock()
        for rule in self.rules:
            if "response" not in rule and "responses" not in rule:
                raise BackendError(f"mock rule missing response(s): {rule}")

    @classmethod
    def from_script_file(cls, path: str | Path) -> "MockBackend":
        with open(path, "r", encoding="utf-8") as fh:
            script = yaml.safe_load(fh) or {}
        return cls(script)

    def model_for(self, role: RoleTag) -> str:
        return self.models.get(role.value, f"mock-{role.value}")

    def _match(self, rule: dict, request: CompletionRequest) -> bool:
        if rule.get("role") is not None and rule["role"] != request.role.value:
            return False
        if rule.get("contains") is not None and rule["contains"] not in request.prompt_text:
            return False
        if rule.get("prompt_sha256") is not None:
            digest = hashlib.sha256(request.prompt_text.encode("utf-8")).hexdigest()
            if rule["prompt_sha256"] != digest:
                return False
        return True

    def complete_once(self, request: CompletionRequest) -> tuple[str, FinishReason, dict]:
        for rule_index, rule in enumerate(self.rules):
            if not self._match(rule, request):
                continue
            errors_before = int(rule.get("errors_before", 0))
            if errors_before:
                key = (rule_index, f"{request.sample_index}:{request.prompt_text}")
                with self._lock:
                    seen = self._attempts.get(key, 0)
                    self._attempts[key] = seen + 1
                if seen < errors_before:
                    raise TransientBackendError(
                        f"scripted transient error {seen + 1}/{errors_before}"
                    )
            if "responses" in rule:
                choices = rule["responses"]
                text = choices[request.sample_index % len(choices)]
            else:
                text = rule["response"]
            return str(text), FinishReason.STOP, _usage(request.prompt_text, str(text))
        if request.role.value in self.defaults:
            text = str(self.defaults[request.role.value])
            return text, FinishReason.STOP, _usage(request.prompt_text, text)
        raise BackendError(
            f"mock script has no rule or default for role={request.role.value} "
            f"prompt starting {request.prompt_text[:80]!r}"
        )


class HttpBackend(Backend):
    """OpenAI-style chat completions endpoint."""

    def __init__(
        self,
        base_url: str,
        api_key: str,
        models: dict[str, str],
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if not api_key:
            raise BackendError("backend API key is empty; set the configured environment variable")
        self.base_url = base_url.rstrip("/")
        self.models = models
        self._client = httpx.Client(
            timeout=timeout,
            headers={"Authorization": f"Bearer {api_key}"},
            transport=transport,
        )

    @classmethod
    def from_config(cls, cfg: dict) -> "HttpBackend":
        key_env = cfg.get("api_key_env", "LLM_API_KEY")
        return cls(
            base_url=cfg["base_url"],
            api_key=os.environ.get(key_env, ""),
            models=cfg.get("models", {}),
            timeout=float(cfg.get("timeout", 120.0)),
        )

    def model_for(self, role: RoleTag) -> str:
        model = self.models.get(role.value) or self.models.get("default")
        if not model:
            raise BackendError(f"no model configured for role {role.value}")
        return model

    def complete_once(self, request: CompletionRequest) -> tuple[str, FinishReason, dict]:
        payload = {
            "model": self.model_for(request.role),
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        try:
            response = self._client.post(f"{self.base_url}/chat/completions", json=payload)
        except httpx.TimeoutException as exc:
            raise TransientBackendError(f"request timeout: {exc}") from exc
        except httpx.HTTPError as exc:
            raise TransientBackendError(f"transport error: {exc}") from exc

        if response.status_code == 429 or response.status_code >= 500:
            raise TransientBackendError(f"backend returned {response.status_code}")
        if response.status_code in (401, 403):
            raise BackendError(f"authentication failed ({response.status_code})")
        if response.status_code != 200:
            raise BackendError(f"backend returned {response.status_code}: {response.text[:200]}")

        body = response.json()
        choice = body["choices"][0]
        text = choice["message"]["content"] or ""
        reason = FinishReason.LENGTH if choice.get("finish_reason") == "length" else FinishReason.STOP
        return text, reason, body.get("usage", {})


class Gateway:
    """Caching, retrying, concurrency-limited front door to one backend."""

    def __init__(
        self,
        backend: Backend,
        cache_dir: str | Path | None = None,
        retry_policy: RetryPolicy = RetryPolicy(),
        in_flight_limit: int = DEFAULT_IN_FLIGHT_LIMIT,
        sleep=time.sleep,
    ):
        if in_flight_limit < 1:
            raise ValueError("in_flight_limit must be >= 1")
        self.backend = backend
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.retry_policy = retry_policy
        self.in_flight_limit = in_flight_limit
        self._sleep = sleep
        self._limiter = threading.Semaphore(in_flight_limit)
        self._gauge_lock = threading.Lock()
        self._in_flight = 0
        self.max_in_flight_seen = 0
        self.retry_count = 0

    def cache_key(self, request: CompletionRequest) -> str:
        material = json.dumps(
            {
                "model": self.backend.model_for(request.role),
                "role": request.role.value,
                "prompt": request.prompt_text,
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
                "sample_index": request.sample_index,
            },
            sort_keys=True,
        )
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    def _cache_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def _cache_load(self, key: str) -> CompletionResult | None:
        if self.cache_dir is None:
            return None
        path = self._cache_path(key)
        if not path.exists():
            return None
        record = json.loads(path.read_text(encoding="utf-8"))
        return CompletionResult(
            text=record["text"],
            finish_reason=FinishReason(record["finish_reason"]),
            usage=record["usage"],
            cache_hit=True,
        )

    def _cache_store(self, key: str, result: CompletionResult) -> None:
        if self.cache_dir is None:
            return
        record = {
            "text": result.text,
            "finish_reason": result.finish_reason.value,
            "usage": result.usage,
        }
        path = self._cache_path(key)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(record, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        key = self.cache_key(request)
        cached = self._cache_load(key)
        if cached is not None:
            return cached

        with self._limiter:
            with self._gauge_lock:
                self._in_flight += 1
                self.max_in_flight_seen = max(self.max_in_flight_seen, self._in_flight)
            try:
                result = self._complete_with_retries(request)
            finally:
                with self._gauge_lock:
                    self._in_flight -= 1

        if result.ok:
            self._cache_store(key, result)
        return result

    def _complete_with_retries(self, request: CompletionRequest) -> CompletionResult:
        attempt = 0
        while True:
            try:
                text, reason, usage = self.backend.complete_once(request)
            except TransientBackendError as exc:
                attempt += 1
                with self._gauge_lock:
                    self.retry_count += 1
                if attempt > self.retry_policy.max_retries:
                    logger.error("retries exhausted for %s: %s", request.role.value, exc)
                    return CompletionResult(text="", finish_reason=FinishReason.ERROR, usage={})
                delay = self.retry_policy.delay(attempt)
                logger.warning(
                    "transient backend error (attempt %d/%d, retrying in %.1fs): %s",
                    attempt, self.retry_policy.max_retries, delay, exc,
                )
                self._sleep(delay)
                continue
            if text == "":
                return CompletionResult(text="", finish_reason=FinishReason.ERROR, usage=usage)
            return CompletionResult(text=text, finish_reason=reason, usage=usage)

    def complete_batch(self, requests: list[CompletionRequest]) -> list[CompletionResult]:
        """Results aligned with requests; a failed item becomes an error result, never an exception
        (except fatal BackendError, which aborts the run by design)."""
        if not requests:
            return []
        with ThreadPoolExecutor(max_workers=min(len(requests), self.in_flight_limit)) as pool:
            return list(pool.map(self.complete, requests))
