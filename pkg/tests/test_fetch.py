"""Token-bucket, disk-cache, and fetch-orchestration tests.

All timing assertions run against the virtual clock, so the suite never
sleeps for real.
"""

import json
import threading

import pytest

from conftest import record
from roofinv.fetch import (
    DiskCache,
    FetchLimits,
    FetchOutcome,
    FetchStatus,
    TokenBucket,
    VirtualClock,
    execute_fetch,
    stub_fetcher,
)
from roofinv.imagery import plan_image


def make_plans(n, size=224):
    return [
        plan_image(
            record(f"b{i:03d}", 35.0 + i * 1e-4, -78.0, building_area=150.0),
            image_size_px=size,
        )
        for i in range(n)
    ]


def test_virtual_clock_advances_on_sleep():
    clock = VirtualClock()
    assert clock.now() == 0.0
    clock.sleep(1.5)
    clock.sleep(0.25)
    assert clock.now() == pytest.approx(1.75)


def test_token_bucket_burst_then_steady_rate():
    clock = VirtualClock()
    bucket = TokenBucket(rate_per_s=10.0, burst=10, clock=clock)
    for _ in range(10):
        bucket.acquire()
    assert clock.now() == pytest.approx(0.0, abs=1e-9)
    # The 11th token waits for refill at the steady rate.
    bucket.acquire()
    assert clock.now() == pytest.approx(0.1, abs=1e-6)
    for _ in range(9):
        bucket.acquire()
    assert clock.now() == pytest.approx(1.0, abs=1e-6)


def test_token_bucket_respects_elapsed_idle_time():
    clock = VirtualClock()
    bucket = TokenBucket(rate_per_s=10.0, burst=5, clock=clock)
    for _ in range(5):
        bucket.acquire()
    clock.sleep(10.0)
    # Long idle refills to the cap, not beyond it.
    for _ in range(5):
        bucket.acquire()
    assert clock.now() == pytest.approx(10.0, abs=1e-6)
    bucket.acquire()
    assert clock.now() == pytest.approx(10.1, abs=1e-6)


def test_disk_cache_round_trip(tmp_path):
    cache = DiskCache(tmp_path / "cache", now_fn=lambda: 1234.5)
    assert cache.get("a" * 64) is None
    cache.put("a" * 64, b"payload", "map://x")
    assert cache.get("a" * 64) == b"payload"
    # Two-level fan-out keeps directories small.
    blob = tmp_path / "cache" / "aa" / ("a" * 64 + ".img")
    assert blob.read_bytes() == b"payload"
    sidecar = json.loads(blob.with_suffix(".json").read_text())
    assert sidecar == {"bytes": 7, "timestamp": 1234.5, "uri": "map://x"}


def test_disk_cache_rejects_empty_payload(tmp_path):
    cache = DiskCache(tmp_path / "cache")
    with pytest.raises(ValueError):
        cache.put("b" * 64, b"", "map://x")


def test_fetch_outcome_invariants():
    with pytest.raises(ValueError):
        FetchOutcome("b", FetchStatus.FETCHED, None, None, 0)
    with pytest.raises(ValueError):
        FetchOutcome("b", FetchStatus.FAILED, None, None, -1)


def test_execute_fetch_preserves_order_and_caches(tmp_path):
    plans = make_plans(8)
    cache = DiskCache(tmp_path / "cache")
    outcomes = execute_fetch(plans, stub_fetcher, cache, clock=VirtualClock())
    assert [o.building_id for o in outcomes] == [p.building_id for p in plans]
    assert all(o.status is FetchStatus.FETCHED for o in outcomes)
    assert all(o.retry_count == 0 for o in outcomes)
    assert outcomes[0].payload == b"stub-image:" + plans[0].cache_key.encode()

    # Second run: every plan is already cached, the fetcher is never called.
    def exploding(plan):
        raise AssertionError("fetcher must not run on a cache hit")

    again = execute_fetch(plans, exploding, cache, clock=VirtualClock())
    assert all(o.status is FetchStatus.CACHED for o in again)
    assert [o.payload for o in again] == [o.payload for o in outcomes]


def test_execute_fetch_retries_then_succeeds(tmp_path):
    attempts = {}
    lock = threading.Lock()

    def flaky(plan):
        with lock:
            attempts[plan.building_id] = attempts.get(plan.building_id, 0) + 1
            if attempts[plan.building_id] < 3:
                raise ConnectionError("transient")
        return b"late"

    clock = VirtualClock()
    outcomes = execute_fetch(
        make_plans(1), flaky, DiskCache(tmp_path / "cache"), clock=clock
    )
    assert outcomes[0].status is FetchStatus.FETCHED
    assert outcomes[0].retry_count == 2
    assert outcomes[0].payload == b"late"
    # Two backoffs: 0.5 s then 1.0 s.
    assert clock.now() == pytest.approx(1.5, abs=1e-6)


def test_execute_fetch_always_failing_stub(tmp_path):
    def broken(plan):
        raise ConnectionError("boom")

    limits = FetchLimits(max_retries=3)
    outcomes = execute_fetch(
        make_plans(3), broken, DiskCache(tmp_path / "cache"), limits, VirtualClock()
    )
    assert all(o.status is FetchStatus.FAILED for o in outcomes)
    assert all(o.retry_count == 3 for o in outcomes)
    assert all(o.reason == "boom" for o in outcomes)
    assert all(o.payload is None for o in outcomes)


def test_empty_payload_counts_as_failure(tmp_path):
    outcomes = execute_fetch(
        make_plans(1),
        lambda plan: b"",
        DiskCache(tmp_path / "cache"),
        FetchLimits(max_retries=1),
        VirtualClock(),
    )
    assert outcomes[0].status is FetchStatus.FAILED
    assert "empty" in outcomes[0].reason


def test_batch_survives_partial_failure(tmp_path):
    def picky(plan):
        if plan.building_id.endswith("1"):
            raise ConnectionError("nope")
        return b"ok"

    outcomes = execute_fetch(
        make_plans(4), picky, DiskCache(tmp_path / "cache"), FetchLimits(max_retries=1), VirtualClock()
    )
    statuses = [o.status for o in outcomes]
    assert statuses == [
        FetchStatus.FETCHED,
        FetchStatus.FAILED,
        FetchStatus.FETCHED,
        FetchStatus.FETCHED,
    ]


def test_hundred_plans_at_ten_per_second_take_nine_virtual_seconds(tmp_path):
    clock = VirtualClock()
    outcomes = execute_fetch(
        make_plans(100),
        stub_fetcher,
        DiskCache(tmp_path / "cache"),
        FetchLimits(rate_per_s=10.0, burst=10),
        clock,
    )
    assert all(o.status is FetchStatus.FETCHED for o in outcomes)
    # 10 burst tokens are free; the remaining 90 refill at 10/s.
    assert clock.now() >= 9.0 - 1e-6


def test_rate_never_exceeds_configured_budget(tmp_path):
    # Under any latency profile, n acquired tokens need at least
    # (n - burst) / rate seconds; check with a slow-ish stub too.
    clock = VirtualClock()

    def slow(plan):
        clock.sleep(0.01)
        return b"ok"

    limits = FetchLimits(rate_per_s=20.0, burst=5, parallelism=4)
    execute_fetch(make_plans(50), slow, DiskCache(tmp_path / "cache"), limits, clock)
    assert clock.now() >= (50 - 5) / 20.0 - 1e-6
