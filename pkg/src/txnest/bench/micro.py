"""Synthetic microbenchmark: every worker thread runs transactions of
random map operations followed by random queue operations against one
shared map and one shared queue, under a selectable nesting policy.

Policies: ``flat`` (no nesting), ``nest-all`` (map block and queue block
each run as a child transaction), ``nest-queue`` (only the queue block is
nested). Operation types and keys are drawn uniformly at random; each
transaction's script is fixed before the first attempt so retries replay
the same operations.
"""

from __future__ import annotations

import random
import sys
import threading
import time
from dataclasses import dataclass

from ..core import EMPTY, TransactionAborted, TransactionManager
from ..maps import TransactionalMap
from ..queues import TransactionalQueue
from .stats import RunStats

MICRO_POLICIES = ("flat", "nest-all", "nest-queue")


class AuditError(Exception):
    """A benchmark end-state or recorded-history check failed."""


@dataclass
class MicroConfig:
    threads: int
    tx_per_thread: int = 50_000
    map_ops_per_tx: int = 10
    queue_ops_per_tx: int = 2
    key_range: int = 50_000
    policy: str = "flat"
    seed: int = 1
    repetitions: int = 10
    child_retry_limit: int = 10
    record_history: bool = False
    # finer preemption than CPython's 5 ms default so lock windows actually
    # interleave at desk scale; None leaves the interpreter setting alone
    switch_interval: float | None = 1e-4
    # harness-level backoff after a parent abort (seconds, jittered); keeps
    # retry storms from monopolizing the interpreter while a lock holder is
    # preempted mid-commit. Applied identically under every policy.
    parent_backoff: float | None = 1e-3
    # exponential backoff between child retries: without it a retrying
    # child never yields the interpreter to the lock holder it waits for
    child_backoff: bool = True

    def validate(self) -> None:
        if self.threads < 1:
            raise ValueError("threads must be positive")
        if self.tx_per_thread < 1:
            raise ValueError("tx_per_thread must be positive")
        if self.map_ops_per_tx < 0 or self.queue_ops_per_tx < 0:
            raise ValueError("operation counts must be non-negative")
        if self.key_range < 1:
            raise ValueError("key_range must be positive")
        if self.policy not in MICRO_POLICIES:
            raise ValueError("policy must be one of %s" % (MICRO_POLICIES,))
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        if self.child_retry_limit < 1:
            raise ValueError("child_retry_limit must be positive")


def _derive_seed(seed: int, rep: int, thread: int) -> int:
    return (seed * 1_000_003 + rep * 8191 + thread) & 0xFFFFFFFF


def _tx_script(rng, cfg, unique_base):
    map_ops = []
    for _ in range(cfg.map_ops_per_tx):
        key = rng.randrange(cfg.key_range)
        pick = rng.randrange(3)
        if pick == 0:
            map_ops.append(("get", key, None))
        elif pick == 1:
            map_ops.append(("put", key, rng.randrange(1, 1 << 30)))
        else:
            map_ops.append(("remove", key, None))
    queue_ops = []
    for i in range(cfg.queue_ops_per_tx):
        if rng.randrange(2) == 0:
            queue_ops.append(("enq", unique_base + i))
        else:
            queue_ops.append(("deq", None))
    return map_ops, queue_ops


def _map_block(tmap, map_ops, nested):
    if nested:
        def block(tx):
            for op, key, val in map_ops:
                if op == "get":
                    tmap.n_get(tx, key)
                elif op == "put":
                    tmap.n_put(tx, key, val)
                else:
                    tmap.n_remove(tx, key)
    else:
        def block(tx):
            for op, key, val in map_ops:
                if op == "get":
                    tmap.get(tx, key)
                elif op == "put":
                    tmap.put(tx, key, val)
                else:
                    tmap.remove(tx, key)
    return block


def _queue_block(tq, queue_ops, nested):
    if nested:
        def block(tx):
            empties = 0
            for op, val in queue_ops:
                if op == "enq":
                    tq.n_enq(tx, val)
                elif tq.n_deq(tx) is EMPTY:
                    empties += 1
            return empties
    else:
        def block(tx):
            empties = 0
            for op, val in queue_ops:
                if op == "enq":
                    tq.enq(tx, val)
                elif tq.deq(tx) is EMPTY:
                    empties += 1
            return empties
    return block


class _Counters:
    __slots__ = ("committed", "parent_aborts", "child_aborts",
                 "child_retries", "empty_deqs", "t_start", "t_end")

    def __init__(self):
        self.committed = 0
        self.parent_aborts = 0
        self.child_aborts = 0
        self.child_retries = 0
        self.empty_deqs = 0
        self.t_start = 0.0
        self.t_end = 0.0


def _run_one_tx(mgr, cfg, run_map, run_queue, counters, counted, rng):
    policy = cfg.policy
    backoff = cfg.parent_backoff
    while True:
        tx = mgr.begin()
        empties = 0
        try:
            if policy == "flat":
                run_map(tx)
                empties = run_queue(tx)
            elif policy == "nest-queue":
                run_map(tx)
                empties = tx.run_child(run_queue)
            else:  # nest-all
                tx.run_child(run_map)
                empties = tx.run_child(run_queue)
        except TransactionAborted:
            if counted:
                counters.parent_aborts += 1
                counters.child_aborts += tx.total_child_aborts
                counters.child_retries += tx.total_child_restarts
            if backoff is not None:
                time.sleep(backoff * rng.random())
            continue
        committed = tx.commit()
        if counted:
            counters.child_aborts += tx.total_child_aborts
            counters.child_retries += tx.total_child_restarts
        if committed:
            if counted:
                counters.committed += 1
                counters.empty_deqs += empties
            return
        if counted:
            counters.parent_aborts += 1
        if backoff is not None:
            time.sleep(backoff * rng.random())


def _worker(mgr, tmap, tq, cfg, rep, thread_idx, barrier, counters):
    rng = random.Random(_derive_seed(cfg.seed, rep, thread_idx))
    unique = (thread_idx + 1) << 40
    nested = cfg.policy == "nest-all"
    q_nested = cfg.policy != "flat"

    def one_tx(counted):
        map_ops, queue_ops = _tx_script(rng, cfg, unique)
        run_map = _map_block(tmap, map_ops, nested)
        run_queue = _queue_block(tq, queue_ops, q_nested)
        _run_one_tx(mgr, cfg, run_map, run_queue, counters, counted, rng)

    warmup = max(1, round(0.05 * cfg.tx_per_thread))
    for _ in range(warmup):
        one_tx(False)
        unique += cfg.queue_ops_per_tx
    barrier.wait()
    counters.t_start = time.perf_counter()
    for _ in range(cfg.tx_per_thread):
        one_tx(True)
        unique += cfg.queue_ops_per_tx
    counters.t_end = time.perf_counter()


def _prefill(mgr, tmap, cfg, rng):
    keys = range(0, cfg.key_range, 2)  # half the key range exists up front
    chunk = []
    for key in keys:
        chunk.append((key, rng.randrange(1, 1 << 30)))
        if len(chunk) >= 500:
            _commit_chunk(mgr, tmap, chunk)
            chunk = []
    if chunk:
        _commit_chunk(mgr, tmap, chunk)


def _commit_chunk(mgr, tmap, chunk):
    def fill(tx):
        for key, val in chunk:
            tmap.put(tx, key, val)
    mgr.run(fill)


def run_micro(config: MicroConfig, history_sink: list | None = None) -> list[RunStats]:
    """Run the microbenchmark, one RunStats per repetition.

    With ``record_history`` set, each repetition is recorded and its
    history checked against the per-structure laws; a violation raises
    AuditError. Pass ``history_sink`` to also collect each repetition's
    CommittedHistory.
    """
    config.validate()
    old_interval = sys.getswitchinterval()
    if config.switch_interval is not None:
        sys.setswitchinterval(config.switch_interval)
    try:
        return [_run_rep(config, rep, history_sink)
                for rep in range(1, config.repetitions + 1)]
    finally:
        sys.setswitchinterval(old_interval)


def _run_rep(config: MicroConfig, rep: int, history_sink=None) -> RunStats:
    mgr = TransactionManager(child_retry_limit=config.child_retry_limit,
                             child_backoff=config.child_backoff)
    tmap = TransactionalMap(mgr, "bench-map")
    tq = TransactionalQueue(mgr, "bench-queue")
    _prefill(mgr, tmap, config, random.Random(_derive_seed(config.seed, rep, 10_007)))
    if config.record_history:
        mgr.start_recording()

    counters = [_Counters() for _ in range(config.threads)]
    barrier = threading.Barrier(config.threads)
    workers = [
        threading.Thread(
            target=_worker,
            args=(mgr, tmap, tq, config, rep, i, barrier, counters[i]),
            name="micro-%d" % i)
        for i in range(config.threads)
    ]
    for w in workers:
        w.start()
    for w in workers:
        w.join()

    if config.record_history:
        from ..checker import check_structure_laws
        history = mgr.stop_recording()
        verdict = check_structure_laws(history)
        if not verdict.ok:
            raise AuditError(str(verdict))
        if history_sink is not None:
            history_sink.append(history)

    wall = (max(c.t_end for c in counters) - min(c.t_start for c in counters))
    return RunStats(
        bench="micro",
        policy=config.policy,
        threads=config.threads,
        rep=rep,
        committed=sum(c.committed for c in counters),
        parent_aborts=sum(c.parent_aborts for c in counters),
        child_aborts=sum(c.child_aborts for c in counters),
        child_retries=sum(c.child_retries for c in counters),
        wall_seconds=wall,
        empty_deqs=sum(c.empty_deqs for c in counters),
    )
