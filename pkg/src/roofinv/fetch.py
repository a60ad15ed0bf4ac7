"""Cached, rate-limited execution of image acquisition plans.

The fetcher itself is injected (any plan -> bytes callable), so the
scheduler is testable without a network and provider-agnostic with one.
Pacing runs on an injectable clock; tests drive a virtual clock so the
token-bucket arithmetic is checked in zero wall time.
"""

from __future__ import annotations

import enum
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .imagery import ImagePlan

DEFAULT_RATE_PER_S = 10.0
DEFAULT_BURST = 10
DEFAULT_PARALLELISM = 8
DEFAULT_MAX_RETRIES = 3
DEFAULT_BACKOFF_S = 0.5

PROVIDER_KEY_ENV = "ROOFINV_PROVIDER_KEY"


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class VirtualClock:
    """Deterministic clock: sleep advances time instead of waiting."""

    def __init__(self, start: float = 0.0) -> None:
        self._t = start
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._t

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot sleep a negative duration")
        with self._lock:
            self._t += seconds


class TokenBucket:
    """Thread-safe token bucket; acquire blocks until a token is available."""

    def __init__(self, rate_per_s: float, burst: int, clock: Clock) -> None:
        if rate_per_s <= 0 or burst < 1:
            raise ValueError("rate must be positive and burst at least 1")
        self._rate = float(rate_per_s)
        self._capacity = float(burst)
        self._tokens = float(burst)
        self._clock = clock
        self._last = clock.now()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock.now()
                self._tokens = min(
                    self._capacity, self._tokens + (now - self._last) * self._rate
                )
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                # Floor the wait so it can never vanish when added to a
                # large clock value; a sub-ulp sleep would freeze virtual
                # time and spin this loop forever.
                wait = max((1.0 - self._tokens) / self._rate, 1e-6)
            self._clock.sleep(wait)


class DiskCache:
    """Content-addressed image store: ``<root>/<2 hex>/<key>.img``.

    Each payload gets a one-line JSON sidecar (uri, timestamp, length).
    Reads are lock-free; writes are serialized and go through a rename
    so readers never observe a partial file.
    """

    def __init__(self, root: str | Path, now_fn: Callable[[], float] = time.time) -> None:
        self.root = Path(root)
        self._now_fn = now_fn
        self._write_lock = threading.Lock()

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.img"

    def get(self, key: str) -> bytes | None:
        path = self.path_for(key)
        try:
            data = path.read_bytes()
        except OSError:
            return None
        return data or None  # an empty payload is never a valid hit

    def put(self, key: str, data: bytes, uri: str) -> None:
        if not data:
            raise ValueError("refusing to cache an empty payload")
        path = self.path_for(key)
        with self._write_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".img.tmp")
            tmp.write_bytes(data)
            tmp.replace(path)
            meta = {"uri": uri, "timestamp": self._now_fn(), "bytes": len(data)}
            path.with_suffix(".json").write_text(
                json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8"
            )


class FetchStatus(str, enum.Enum):
    FETCHED = "fetched"
    CACHED = "cached"
    FAILED = "failed"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class FetchOutcome:
    building_id: str
    status: FetchStatus
    payload: bytes | None
    reason: str | None
    retry_count: int

    def __post_init__(self) -> None:
        if self.status in (FetchStatus.FETCHED, FetchStatus.CACHED) and not self.payload:
            raise ValueError(f"{self.status} outcome requires a nonzero payload")
        if self.status is FetchStatus.FAILED and not self.reason:
            raise ValueError("failed outcome requires a reason")
        if self.retry_count < 0:
            raise ValueError("retry_count cannot be negative")


@dataclass(frozen=True)
class FetchLimits:
    rate_per_s: float = DEFAULT_RATE_PER_S
    burst: int = DEFAULT_BURST
    parallelism: int = DEFAULT_PARALLELISM
    max_retries: int = DEFAULT_MAX_RETRIES
    backoff_s: float = DEFAULT_BACKOFF_S


Fetcher = Callable[[ImagePlan], bytes]


def stub_fetcher(plan: ImagePlan) -> bytes:
    """Offline stand-in: deterministic nonzero bytes per plan."""
    return b"stub-image:" + plan.cache_key.encode("ascii")


def execute_fetch(
    plans: Sequence[ImagePlan],
    fetcher: Fetcher,
    cache: DiskCache,
    limits: FetchLimits = FetchLimits(),
    clock: Clock | None = None,
) -> list[FetchOutcome]:
    """Run a batch of plans; outcomes come back in input order.

    Cache hits cost no token and never touch the fetcher. Misses take a
    token per attempt (initial try plus up to max_retries retries, with
    exponential backoff between attempts). One plan failing never aborts
    the batch.
    """
    clock = clock or SystemClock()
    bucket = TokenBucket(limits.rate_per_s, limits.burst, clock)

    def fetch_one(plan: ImagePlan) -> FetchOutcome:
        hit = cache.get(plan.cache_key)
        if hit is not None:
            return FetchOutcome(plan.building_id, FetchStatus.CACHED, hit, None, 0)
        reason = "no attempt made"
        for attempt in range(limits.max_retries + 1):
            bucket.acquire()
            try:
                data = fetcher(plan)
                if not data:
                    raise ValueError("provider returned an empty payload")
            except Exception as exc:
                reason = str(exc) or type(exc).__name__
                if attempt < limits.max_retries:
                    clock.sleep(limits.backoff_s * (2.0**attempt))
                continue
            cache.put(plan.cache_key, data, plan.request_uri)
            return FetchOutcome(plan.building_id, FetchStatus.FETCHED, data, None, attempt)
        return FetchOutcome(
            plan.building_id, FetchStatus.FAILED, None, reason, limits.max_retries
        )

    if not plans:
        return []
    workers = max(1, min(limits.parallelism, len(plans)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fetch_one, plans))
