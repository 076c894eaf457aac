"""Intrusion-detection pipeline benchmark.

Producer threads generate seeded packets, split them into MTU-size
fragments, and feed a shared fragment pool; they drive the workload and do
no other work. Each consumer transaction takes one fragment, parses its
header, finds or creates the packet's fragment map inside the shared
packet map (put-if-absent), stores the fragment, and, when it holds the
packet's last fragment, reassembles the payload, runs the synthetic
signature-matching loop, and appends the verdict to a log picked by packet
id. The put-if-absent block and the log append are the two nesting
candidates.

Statistics cover consumer transactions; producer retries caused by a full
pool are backpressure, identical under every policy, and excluded.
"""

from __future__ import annotations

import random
import sys
import threading
import time
import zlib
from collections import Counter
from dataclasses import dataclass, field

from ..core import TransactionAborted, TransactionManager
from ..logs import TransactionalLog
from ..maps import TransactionalMap
from ..pools import ProducerConsumerPool
from .micro import AuditError, _derive_seed
from .stats import RunStats

NIDS_POLICIES = ("flat", "nest-log", "nest-map", "nest-both")

_M64 = (1 << 64) - 1
_MIX = 0xFF51AFD7ED558CCD


@dataclass
class NidsConfig:
    producers: int = 1
    consumers: int = 4
    fragments_per_packet: int = 1
    packets: int = 1000
    policy: str = "flat"
    match_work: int = 1000
    log_count: int | None = None   # default: half the consumers
    pool_size: int = 64
    seed: int = 1
    child_retry_limit: int = 10
    record_history: bool = False
    # finer preemption than the micro benchmark: fairness between the few
    # producers and many consumers matters more than raw speed here
    switch_interval: float | None = 2e-5
    payload_size: int = 1400
    # consumer-side backoff after a parent abort (seconds, jittered); an
    # aborted consumer that immediately re-probes an empty pool starves the
    # producers of interpreter time. Applied identically under every policy.
    parent_backoff: float | None = 2e-3
    child_backoff: bool = True
    # slot probes per claim attempt for the fragment pool; short scans keep
    # starved consumers from hogging the interpreter between backoffs
    pool_probe_limit: int = 150

    def validate(self) -> None:
        if self.producers < 1 or self.consumers < 1:
            raise ValueError("producers and consumers must be positive")
        if self.fragments_per_packet < 1:
            raise ValueError("fragments_per_packet must be positive")
        if self.packets < 1:
            raise ValueError("packets must be positive")
        if self.policy not in NIDS_POLICIES:
            raise ValueError("policy must be one of %s" % (NIDS_POLICIES,))
        if self.match_work < 0:
            raise ValueError("match_work must be non-negative")
        if self.log_count is not None and self.log_count < 1:
            raise ValueError("log_count must be positive")
        if self.pool_size < 1:
            raise ValueError("pool_size must be positive")
        if self.payload_size < 64:
            raise ValueError("payload_size must cover the 64-byte header")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def effective_log_count(self) -> int:
        if self.log_count is not None:
            return self.log_count
        return max(1, self.consumers // 2)


class _Counter:
    __slots__ = ("value", "_mutex")

    def __init__(self):
        self.value = 0
        self._mutex = threading.Lock()

    def increment(self):
        with self._mutex:
            self.value += 1


@dataclass
class _ConsumerTally:
    committed: int = 0
    parent_aborts: int = 0
    child_aborts: int = 0
    child_retries: int = 0
    t_start: float = 0.0
    t_end: float = 0.0
    consumed: list = field(default_factory=list)   # (pid, idx) pairs
    created: list = field(default_factory=list)    # pids whose map this thread created
    logged: list = field(default_factory=list)     # pids this thread logged


def _header_checksum(payload: bytes) -> int:
    return zlib.crc32(payload[:64])


def _signature_match(digest: int, iterations: int) -> int:
    h = digest & _M64
    for i in range(iterations):
        h = ((h ^ (h >> 33)) * _MIX + i) & _M64
    return h & 1


def _lookup_or_create(tx, mgr, packet_map, pid, nested):
    if nested:
        fm = packet_map.n_get(tx, pid)
        if fm is None:
            fm = TransactionalMap(mgr)
            packet_map.n_put(tx, pid, fm)
            return fm, True
        return fm, False
    fm = packet_map.get(tx, pid)
    if fm is None:
        fm = TransactionalMap(mgr)
        packet_map.put(tx, pid, fm)
        return fm, True
    return fm, False


def _consume_one(tx, mgr, pool, packet_map, logs, cfg):
    frag = pool.consume(tx)
    pid, idx, count, payload = frag
    _header_checksum(payload)
    if cfg.policy in ("nest-map", "nest-both"):
        fm, created = tx.run_child(
            lambda t: _lookup_or_create(t, mgr, packet_map, pid, nested=True))
    else:
        fm, created = _lookup_or_create(tx, mgr, packet_map, pid, nested=False)
    fm.put(tx, idx, payload)
    parts = []
    for i in range(count):
        part = payload if i == idx else fm.get(tx, i)
        if part is None:
            break
        parts.append(part)
    logged = False
    if len(parts) == count:  # this transaction holds the last fragment
        digest = 0
        for part in parts:
            digest = zlib.crc32(part, digest)
        verdict = _signature_match(digest, cfg.match_work)
        log = logs[pid % len(logs)]
        if cfg.policy in ("nest-log", "nest-both"):
            tx.run_child(lambda t: log.n_append(t, (pid, verdict)))
        else:
            log.append(tx, (pid, verdict))
        logged = True
    return frag, created, logged


def _consumer(mgr, pool, packet_map, logs, cfg, total, done, barrier, tally,
              rng):
    backoff = cfg.parent_backoff
    barrier.wait()
    tally.t_start = time.perf_counter()
    while done.value < total:
        tx = mgr.begin()
        try:
            frag, created, logged = _consume_one(
                tx, mgr, pool, packet_map, logs, cfg)
        except TransactionAborted:
            tally.parent_aborts += 1
            tally.child_aborts += tx.total_child_aborts
            tally.child_retries += tx.total_child_restarts
            if backoff is not None:
                time.sleep(backoff * rng.random())
            continue
        committed = tx.commit()
        tally.child_aborts += tx.total_child_aborts
        tally.child_retries += tx.total_child_restarts
        if committed:
            tally.committed += 1
            done.increment()
            tally.consumed.append((frag[0], frag[1]))
            if created:
                tally.created.append(frag[0])
            if logged:
                tally.logged.append(frag[0])
        else:
            tally.parent_aborts += 1
            if backoff is not None:
                time.sleep(backoff * rng.random())
    tally.t_end = time.perf_counter()


def _producer(mgr, pool, cfg, rep, producer_idx, barrier):
    rng = random.Random(_derive_seed(cfg.seed, rep, 50_021 + producer_idx))
    count = cfg.fragments_per_packet
    barrier.wait()
    for pid in range(producer_idx, cfg.packets, cfg.producers):
        for idx in range(count):
            frag = (pid, idx, count, rng.randbytes(cfg.payload_size))
            while True:
                tx = mgr.begin()
                try:
                    pool.produce(tx, frag)
                except TransactionAborted:
                    time.sleep(2e-4)  # pool full; back off and retry
                    continue
                if tx.commit():
                    break


def run_nids(config: NidsConfig, rep: int = 1) -> RunStats:
    """Run the pipeline once and audit its end state: every fragment
    consumed exactly once, every packet's fragment map created exactly
    once, every packet logged exactly once."""
    config.validate()
    old_interval = sys.getswitchinterval()
    if config.switch_interval is not None:
        sys.setswitchinterval(config.switch_interval)
    try:
        return _run(config, rep)
    finally:
        sys.setswitchinterval(old_interval)


def _run(config: NidsConfig, rep: int) -> RunStats:
    mgr = TransactionManager(child_retry_limit=config.child_retry_limit,
                             child_backoff=config.child_backoff)
    pool = ProducerConsumerPool(mgr, config.pool_size, "fragment-pool",
                                probe_limit=config.pool_probe_limit)
    packet_map = TransactionalMap(mgr, "packet-map")
    logs = [TransactionalLog(mgr, "verdict-log-%d" % i)
            for i in range(config.effective_log_count)]
    if config.record_history:
        mgr.start_recording()

    total = config.packets * config.fragments_per_packet
    done = _Counter()
    barrier = threading.Barrier(config.producers + config.consumers)
    tallies = [_ConsumerTally() for _ in range(config.consumers)]
    threads = [
        threading.Thread(target=_producer,
                         args=(mgr, pool, config, rep, i, barrier),
                         name="producer-%d" % i)
        for i in range(config.producers)
    ] + [
        threading.Thread(target=_consumer,
                         args=(mgr, pool, packet_map, logs, config, total,
                               done, barrier, tallies[i],
                               random.Random(_derive_seed(
                                   config.seed, rep, 90_001 + i))),
                         name="consumer-%d" % i)
        for i in range(config.consumers)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    if config.record_history:
        from ..checker import check_structure_laws
        history = mgr.stop_recording()
        verdict = check_structure_laws(history)
        if not verdict.ok:
            raise AuditError(str(verdict))

    _audit(config, tallies, packet_map, logs, total)

    wall = (max(t.t_end for t in tallies) - min(t.t_start for t in tallies))
    return RunStats(
        bench="nids",
        policy=config.policy,
        threads=config.consumers,
        rep=rep,
        committed=sum(t.committed for t in tallies),
        parent_aborts=sum(t.parent_aborts for t in tallies),
        child_aborts=sum(t.child_aborts for t in tallies),
        child_retries=sum(t.child_retries for t in tallies),
        wall_seconds=wall,
    )


def _audit(config, tallies, packet_map, logs, total):
    problems = []
    consumed = [f for t in tallies for f in t.consumed]
    if len(consumed) != total:
        problems.append("consumed %d fragments, expected %d"
                        % (len(consumed), total))
    if len(set(consumed)) != len(consumed):
        problems.append("some fragment was consumed more than once")

    created = Counter(pid for t in tallies for pid in t.created)
    if len(created) != config.packets or any(n != 1 for n in created.values()):
        problems.append("fragment maps not created exactly once per packet")

    logged = Counter(pid for t in tallies for pid in t.logged)
    if len(logged) != config.packets or any(n != 1 for n in logged.values()):
        problems.append("packets not logged exactly once")

    entries = [entry for log in logs for entry in log.snapshot()]
    if len(entries) != config.packets:
        problems.append("log entries %d != packets %d"
                        % (len(entries), config.packets))
    elif len({pid for pid, _ in entries}) != config.packets:
        problems.append("duplicate packet ids across logs")

    maps = packet_map.snapshot()
    if len(maps) != config.packets:
        problems.append("packet map holds %d entries, expected %d"
                        % (len(maps), config.packets))
    else:
        short = [pid for pid, fm in maps.items()
                 if len(fm.snapshot()) != config.fragments_per_packet]
        if short:
            problems.append("incomplete fragment maps for packets %s"
                            % short[:5])

    if problems:
        raise AuditError("; ".join(problems))
