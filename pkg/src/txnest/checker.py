"""History recording and brute-force serializability checking.

Committed transactions are recorded as contiguous event sequences, each
stamped with a commit-point index sampled while the committing transaction
still holds its locks. The checker replays candidate serial orders on
independent single-threaded reference structures (plain dict / list
implementations that share no code with the library) and accepts a history
iff some order reproduces every recorded result. The commit-point order is
tried first since lock-based commitment makes it the expected witness;
exhaustive permutation search is a fallback bounded by a window size.
"""

from __future__ import annotations

import itertools
import threading
from collections import Counter
from dataclasses import dataclass, field

from .core import EMPTY


@dataclass
class HistoryEvent:
    tx_id: int
    structure: str
    op: str
    args: tuple
    result: object = None
    order: int | None = None  # commit-point index, shared by a tx's events

    def line(self) -> str:
        return "%s\t%s\t%s\t%r\t%r" % (
            self.tx_id, self.structure, self.op, self.args, self.result)


@dataclass
class TxRecord:
    tx_id: int
    order: int
    events: list
    committed: bool = True

    def structures(self):
        return {ev.structure for ev in self.events}


@dataclass
class CommittedHistory:
    """Recorded run: per-transaction event sequences plus the structures'
    initial states (and, when available, their final states and kinds)."""

    committed: list = field(default_factory=list)
    aborted: list = field(default_factory=list)
    initial: dict = field(default_factory=dict)   # name -> state
    finals: dict | None = None                    # name -> state
    kinds: dict = field(default_factory=dict)     # name -> kind

    @classmethod
    def from_events(cls, events, kinds, initial=None, finals=None):
        """Group a flat event list into per-transaction records, ordered by
        explicit event order when present, else by first appearance."""
        records = {}
        for ev in events:
            rec = records.get(ev.tx_id)
            if rec is None:
                order = ev.order if ev.order is not None else len(records)
                rec = records[ev.tx_id] = TxRecord(ev.tx_id, order, [])
            rec.events.append(ev)
        committed = sorted(records.values(), key=lambda r: r.order)
        return cls(committed=committed, initial=dict(initial or {}),
                   finals=finals, kinds=dict(kinds))


class HistoryRecorder:
    """Accumulates per-transaction events; safe to feed from any thread.

    Event buffers live on the transaction descriptors themselves, so a
    transaction's events are contiguous by construction; only the commit
    counter is shared.
    """

    def __init__(self, record_aborted: bool = False):
        self.enabled = True
        self.record_aborted = record_aborted
        self._mutex = threading.Lock()
        self._next_order = 0
        self._committed = []
        self._aborted = []
        self._initial = {}
        self._finals = None
        self._kinds = {}

    def record_op(self, tx, structure, op, args, result) -> None:
        if not self.enabled:
            return
        tx._events.append(HistoryEvent(tx.id, structure.name, op, args, result))

    def record(self, event: HistoryEvent) -> None:
        """Low-level append for hand-built histories."""
        if not self.enabled:
            return
        with self._mutex:
            if event.order is None:
                self._next_order += 1
                event.order = self._next_order
        self._committed.append(TxRecord(event.tx_id, event.order, [event]))

    def commit_tx(self, tx) -> None:
        if not self.enabled:
            return
        with self._mutex:
            self._next_order += 1
            order = self._next_order
        events = tx._events
        tx._events = []
        for ev in events:
            ev.order = order
        self._committed.append(TxRecord(tx.id, order, events))

    def abort_tx(self, tx) -> None:
        if not self.enabled:
            return
        events = tx._events
        tx._events = []
        if not self.record_aborted:
            return
        with self._mutex:
            self._next_order += 1
            order = self._next_order
        self._aborted.append(TxRecord(tx.id, order, events, committed=False))

    def capture_initial(self, structures) -> None:
        for s in structures:
            self._initial[s.name] = s.snapshot()
            self._kinds[s.name] = s.kind

    def capture_finals(self, structures) -> None:
        self._finals = {}
        for s in structures:
            self._finals[s.name] = s.snapshot()
            self._kinds[s.name] = s.kind

    def history(self) -> CommittedHistory:
        committed = sorted(self._committed, key=lambda r: r.order)
        aborted = sorted(self._aborted, key=lambda r: r.order)
        return CommittedHistory(committed=committed, aborted=aborted,
                                initial=self._initial, finals=self._finals,
                                kinds=self._kinds)


# -- reference structures (textbook single-threaded; no library code) -----

class _RefMap:
    def __init__(self, state=None):
        self.data = dict(state or {})

    def apply(self, op, args, result):
        if op == "get":
            return self.data.get(args[0]) == result
        if op == "put":
            self.data[args[0]] = args[1]
            return True
        if op == "remove":
            self.data.pop(args[0], None)
            return True
        return False

    def state(self):
        return self.data


class _RefQueue:
    def __init__(self, state=None):
        self.items = list(state or [])

    def apply(self, op, args, result):
        if op == "enq":
            self.items.append(args[0])
            return True
        if op == "deq":
            expect = self.items.pop(0) if self.items else EMPTY
            return expect == result or expect is result
        return False

    def state(self):
        return self.items


class _RefStack:
    def __init__(self, state=None):
        self.items = list(state or [])

    def apply(self, op, args, result):
        if op == "push":
            self.items.append(args[0])
            return True
        if op == "pop":
            expect = self.items.pop() if self.items else EMPTY
            return expect == result or expect is result
        return False

    def state(self):
        return self.items


class _RefLog:
    def __init__(self, state=None):
        self.items = list(state or [])

    def apply(self, op, args, result):
        if op == "append":
            self.items.append(args[0])
            return True
        if op == "read":
            i = args[0]
            expect = self.items[i] if 0 <= i < len(self.items) else EMPTY
            return expect == result or expect is result
        return False

    def state(self):
        return self.items


class _RefPool:
    """Unordered: a consume may deliver any available value."""

    def __init__(self, state=None):
        self.available = list(state or [])

    def apply(self, op, args, result):
        if op == "produce":
            self.available.append(args[0])
            return True
        if op == "consume":
            if result in self.available:
                self.available.remove(result)
                return True
            return False
        return False

    def matches_final(self, final):
        return sorted(self.available, key=repr) == sorted(final, key=repr)

    def state(self):
        return self.available


_REF_KINDS = {
    "map": _RefMap,
    "queue": _RefQueue,
    "stack": _RefStack,
    "log": _RefLog,
    "pool": _RefPool,
}


@dataclass
class Verdict:
    ok: bool
    kind: str                      # "ok" | "counterexample" | "inconclusive"
    reason: str = ""
    witness: list | None = None    # tx ids in a serialization order found
    violation: HistoryEvent | None = None
    window: list | None = None     # tx ids of an overflowing conflict window
    violations: list = field(default_factory=list)

    def __str__(self):
        if self.ok:
            return "ok"
        if self.kind == "inconclusive":
            return "inconclusive: %s (window: %s)" % (self.reason, self.window)
        lines = ["%s: %s" % (self.kind, self.reason)]
        if self.violation is not None:
            lines.append("violating operation: " + self.violation.line())
        lines.extend(self.violations)
        return "\n".join(lines)


def dump_events(records) -> str:
    """One event per line: txId, structure, op, args, result."""
    return "\n".join(ev.line() for rec in records for ev in rec.events)


def _make_refs(history, names):
    refs = {}
    for name in names:
        kind = history.kinds.get(name, "map")
        refs[name] = _REF_KINDS[kind](history.initial.get(name))
    return refs


def _replay(history, records, order):
    """Replay records in the given order; return (ok, violating_event)."""
    names = set()
    for rec in records:
        names |= rec.structures()
    refs = _make_refs(history, names)
    for idx in order:
        for ev in records[idx].events:
            if not refs[ev.structure].apply(ev.op, ev.args, ev.result):
                return False, ev
    if history.finals is not None:
        for name, ref in refs.items():
            final = history.finals.get(name)
            if final is None:
                continue
            if hasattr(ref, "matches_final"):
                if not ref.matches_final(final):
                    return False, None
            elif ref.state() != final:
                return False, None
    return True, None


def _components(records):
    """Group records into connected components by shared structures;
    disjoint components impose no mutual ordering constraints."""
    by_structure = {}
    for i, rec in enumerate(records):
        for s in rec.structures():
            by_structure.setdefault(s, []).append(i)
    parent = list(range(len(records)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for members in by_structure.values():
        root = find(members[0])
        for m in members[1:]:
            parent[find(m)] = root
    groups = {}
    for i in range(len(records)):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def check_serializable(history: CommittedHistory, max_window: int = 8) -> Verdict:
    """Accept iff every structure-sharing component of the committed
    transactions replays consistently in some serial order. Components
    larger than ``max_window`` that fail the commit-order fast path are
    reported inconclusive rather than searched."""
    records = history.committed
    witness = []
    for component in _components(records):
        component.sort(key=lambda i: records[i].order)
        ok, bad = _replay(history, records, component)
        if ok:
            witness.extend(records[i].tx_id for i in component)
            continue
        if len(component) > max_window:
            return Verdict(
                ok=False, kind="inconclusive",
                reason="conflict window of %d transactions exceeds "
                       "brute-force bound %d" % (len(component), max_window),
                window=[records[i].tx_id for i in component])
        found = None
        for perm in itertools.permutations(component):
            ok, _ = _replay(history, records, perm)
            if ok:
                found = perm
                break
        if found is None:
            return Verdict(
                ok=False, kind="counterexample",
                reason="no serialization of %d transactions reproduces the "
                       "recorded results" % len(component),
                violation=bad,
                window=[records[i].tx_id for i in component])
        witness.extend(records[i].tx_id for i in found)
    return Verdict(ok=True, kind="ok", witness=witness)


def check_structure_laws(history: CommittedHistory) -> Verdict:
    """Cheap per-structure laws, no permutation search: queue and stack
    no-loss/no-duplication, pool at-most-once consumption, log prefix
    immutability and per-transaction append contiguity."""
    violations = []
    per_structure = {}
    for rec in history.committed:
        for ev in rec.events:
            per_structure.setdefault(ev.structure, []).append(ev)

    for name, events in per_structure.items():
        kind = history.kinds.get(name)
        initial = history.initial.get(name) or []
        final = (history.finals or {}).get(name)
        if kind == "queue":
            _check_conservation(name, events, "enq", "deq", initial, violations)
        elif kind == "stack":
            _check_conservation(name, events, "push", "pop", initial, violations)
        elif kind == "pool":
            _check_conservation(name, events, "produce", "consume", initial,
                                violations)
        elif kind == "log":
            _check_log_laws(name, events, initial, final, history, violations)
    if violations:
        return Verdict(ok=False, kind="counterexample",
                       reason="structure law violations",
                       violations=violations)
    return Verdict(ok=True, kind="ok")


def _check_conservation(name, events, add_op, take_op, initial, violations):
    try:
        added = Counter(initial)
        added.update(ev.args[0] for ev in events if ev.op == add_op)
        for ev in events:
            if ev.op == take_op and ev.result is not EMPTY:
                if added[ev.result] > 0:
                    added[ev.result] -= 1
                else:
                    violations.append(
                        "%s: %s of value %r not matched by a prior %s "
                        "(lost, duplicated, or invented)"
                        % (name, take_op, ev.result, add_op))
    except TypeError:
        # unhashable payloads: fall back to list-based multiset
        added = list(initial)
        added.extend(ev.args[0] for ev in events if ev.op == add_op)
        for ev in events:
            if ev.op == take_op and ev.result is not EMPTY:
                if ev.result in added:
                    added.remove(ev.result)
                else:
                    violations.append(
                        "%s: %s of value %r without a matching %s"
                        % (name, take_op, ev.result, add_op))


def _check_log_laws(name, events, initial, final, history, violations):
    reads = {}
    for ev in events:
        if ev.op == "read" and ev.result is not EMPTY:
            i = ev.args[0]
            if i in reads and reads[i] != ev.result:
                violations.append(
                    "%s: committed reads of index %d disagree (%r vs %r)"
                    % (name, i, reads[i], ev.result))
            reads[i] = ev.result
    if final is not None:
        for i, value in reads.items():
            if i >= len(final) or final[i] != value:
                violations.append(
                    "%s: prefix immutability broken at index %d" % (name, i))
        blocks = {}
        for ev in events:
            if ev.op == "append":
                blocks.setdefault(ev.tx_id, []).append(ev.args[0])
        tail = list(final[len(initial):])
        if not _tiles(tail, list(blocks.values())):
            violations.append(
                "%s: appended values are not contiguous per transaction"
                % name)


def _tiles(tail, blocks):
    """True iff ``tail`` is a concatenation of the given blocks (each used
    exactly once). Backtracking; histories are desk-scale."""
    if not tail:
        return not blocks
    for i, block in enumerate(blocks):
        n = len(block)
        if tail[:n] == block:
            if _tiles(tail[n:], blocks[:i] + blocks[i + 1:]):
                return True
    return False
