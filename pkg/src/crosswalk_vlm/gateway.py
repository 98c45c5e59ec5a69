"""Chat-completion client with retries, bounded parallelism and record/replay.

In ``replay`` mode responses come only from the transcript directory and no
HTTP client is ever used. ``record`` performs the live call and stores the
response under the bundle digest; ``live`` just calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import httpx

from .errors import (
    GatewayError,
    MalformedResponse,
    MissingCredential,
    ReplayMiss,
    RequestRejected,
    TransientExhausted,
)
from .prompts import PromptBundle

log = logging.getLogger(__name__)

LIVE, RECORD, REPLAY = "live", "record", "replay"
MODES = (LIVE, RECORD, REPLAY)


@dataclass(frozen=True)
class GatewayConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o"
    temperature: float = 0.0
    max_tokens: int = 1024
    api_key_env: str = "OPENAI_API_KEY"
    mode: str = REPLAY
    transcript_dir: Path | None = None
    max_parallel: int = 4
    max_attempts: int = 4
    backoff_base: float = 1.0
    timeout: float = 120.0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.mode in (RECORD, REPLAY) and self.transcript_dir is None:
            raise ValueError(f"{self.mode} mode requires a transcript directory")


def build_request(bundle: PromptBundle, cfg: GatewayConfig) -> dict:
    content: list[dict] = [{"type": "text", "text": bundle.template.user_preamble}]
    for payload in bundle.images:
        content.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{payload}"}})
    return {
        "model": cfg.model,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
        "messages": [
            {"role": "system", "content": bundle.template.system_text},
            {"role": "user", "content": content},
        ],
    }


def canonical_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _redact_images(request: dict, digests) -> dict:
    """Copy of ``request`` with image data URLs swapped for their PNG digests."""
    req = json.loads(json.dumps(request))
    it = iter(digests)
    for part in req["messages"][1]["content"]:
        if part.get("type") == "image_url":
            part["image_url"]["url"] = f"sha256:{next(it)}"
    return req


class TranscriptStore:
    """Flat directory of ``<digest>.json`` records, one per bundle digest."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def path(self, digest: str) -> Path:
        return self.root / f"{digest}.json"

    def get(self, digest: str) -> dict | None:
        p = self.path(digest)
        if not p.exists():
            return None
        return json.loads(p.read_text(encoding="utf-8"))

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*.json")) if self.root.exists() else 0

    def put(self, record: dict) -> None:
        digest = record["digest"]
        with self._guard:
            lock = self._locks.setdefault(digest, threading.Lock())
        with lock:
            self.root.mkdir(parents=True, exist_ok=True)
            tmp = self.path(digest).with_suffix(f".tmp{threading.get_ident()}")
            tmp.write_text(json.dumps(record, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
            os.replace(tmp, self.path(digest))


@dataclass
class BatchResult:
    sample_id: str
    digest: str
    response: str | None = None
    error: str | None = None
    error_type: str | None = None
    attempts: int = 0

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class Gateway:
    cfg: GatewayConfig
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = time.sleep
    env: dict | None = None
    requests_sent: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        self.store = TranscriptStore(self.cfg.transcript_dir) if self.cfg.transcript_dir else None
        self._slots = threading.BoundedSemaphore(self.cfg.max_parallel)
        self._count_lock = threading.Lock()
        self._client: httpx.Client | None = None
        self._client_lock = threading.Lock()

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None

    def __enter__(self) -> "Gateway":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _api_key(self) -> str:
        env = os.environ if self.env is None else self.env
        key = env.get(self.cfg.api_key_env)
        if not key:
            raise MissingCredential(f"environment variable {self.cfg.api_key_env} is not set")
        return key

    def _http(self) -> httpx.Client:
        with self._client_lock:
            if self._client is None:
                self._client = httpx.Client(transport=self.transport, timeout=self.cfg.timeout)
            return self._client

    def _post(self, body: bytes, key: str) -> tuple[str, int]:
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        client = self._http()
        last = ""
        for attempt in range(1, self.cfg.max_attempts + 1):
            retry_after = None
            with self._slots:
                with self._count_lock:
                    self.requests_sent += 1
                try:
                    resp = client.post(self.cfg.endpoint, content=body, headers=headers)
                except httpx.TransportError as exc:
                    last = f"{type(exc).__name__}: {exc}"
                    resp = None
            if resp is not None:
                if resp.status_code == 200:
                    return _extract_text(resp), attempt
                last = f"HTTP {resp.status_code}"
                if resp.status_code != 429 and resp.status_code < 500:
                    raise RequestRejected(f"{last}: {resp.text[:200]}")
                retry_after = _retry_after(resp)
            if attempt < self.cfg.max_attempts:
                delay = self.cfg.backoff_base * 2 ** (attempt - 1)
                if retry_after is not None:
                    delay = max(delay, retry_after)
                log.info("attempt %d failed (%s); retrying in %.1fs", attempt, last, delay)
                self.sleep(delay)
        raise TransientExhausted(f"gave up after {self.cfg.max_attempts} attempts ({last})", self.cfg.max_attempts)

    def _classify(self, bundle: PromptBundle) -> tuple[str, int]:
        digest = bundle.digest
        if self.cfg.mode == REPLAY:
            record = self.store.get(digest)
            if record is None:
                raise ReplayMiss(digest)
            return record["response"], 0

        key = self._api_key()
        request = build_request(bundle, self.cfg)
        body = canonical_bytes(request)
        text, attempts = self._post(body, key)
        if self.cfg.mode == RECORD:
            self.store.put(
                {
                    "digest": digest,
                    "model": self.cfg.model,
                    "request": _redact_images(request, bundle.image_sha256),
                    "request_sha256": hashlib.sha256(body).hexdigest(),
                    "response": text,
                    "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                }
            )
        return text, attempts

    def classify(self, bundle: PromptBundle) -> str:
        return self._classify(bundle)[0]

    def classify_batch(self, bundles: list[PromptBundle]) -> list[BatchResult]:
        """Classify concurrently; results keep input order and failures stay per-sample."""

        def one(bundle: PromptBundle) -> BatchResult:
            res = BatchResult(bundle.sample_id, bundle.digest)
            try:
                res.response, res.attempts = self._classify(bundle)
            except GatewayError as exc:
                res.error = str(exc)
                res.error_type = type(exc).__name__
                res.attempts = getattr(exc, "attempts", 0)
            return res

        if self.cfg.mode == REPLAY or self.cfg.max_parallel == 1:
            return [one(b) for b in bundles]
        with ThreadPoolExecutor(max_workers=self.cfg.max_parallel) as pool:
            return list(pool.map(one, bundles))


def _extract_text(resp: httpx.Response) -> str:
    try:
        doc = resp.json()
        text = doc["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"unexpected response shape: {exc!r}") from None
    if isinstance(text, list):
        text = "".join(p.get("text", "") for p in text if isinstance(p, dict))
    if not isinstance(text, str) or not text.strip():
        raise MalformedResponse("empty response body")
    return text


def _retry_after(resp: httpx.Response) -> float | None:
    value = resp.headers.get("retry-after")
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


def classify(bundle: PromptBundle, cfg: GatewayConfig, **kwargs) -> str:
    with Gateway(cfg, **kwargs) as gw:
        return gw.classify(bundle)


def classify_batch(bundles: list[PromptBundle], cfg: GatewayConfig, **kwargs) -> list[BatchResult]:
    with Gateway(cfg, **kwargs) as gw:
        return gw.classify_batch(bundles)
