"""Transaction lifecycle: the global version clock, versioned lock words,
and the parent/child protocol shared by every transactional structure.

A transaction runs at parent level and may open at most one child level at
a time. Child operations stay in child-local state; committing a child
migrates that state into the parent, while aborting a child discards it,
refreshes the transaction's clock snapshot, and either restarts the child
or escalates to a full abort.
"""

from __future__ import annotations

import threading
import time
from enum import Enum


class TransactionError(Exception):
    """Base class for transactional control-flow signals."""


class TransactionAborted(TransactionError):
    """The whole transaction aborted; begin a new one and re-run."""


class ChildRestarted(TransactionError):
    """The child aborted but the parent is still consistent; re-run only
    the child block. ``Transaction.run_child`` handles this internally."""


class TransactionUsageError(RuntimeError):
    """API misuse: wrong nesting level, re-entrancy, or a finished handle."""


class _Empty:
    __slots__ = ()

    def __repr__(self):
        return "<empty>"

    def __bool__(self):
        return False


#: Returned by dequeue/pop/read-past-the-end instead of a value.
EMPTY = _Empty()


class Level(Enum):
    PARENT = "parent"
    CHILD = "child"


class Status(Enum):
    ACTIVE = "active"
    COMMITTED = "committed"
    ABORTED = "aborted"


class GlobalVersionClock:
    """Shared monotonic counter. Only commits that wrote to at least one
    object advance it; read-only commits leave it unchanged."""

    __slots__ = ("_mutex", "_value")

    def __init__(self):
        self._mutex = threading.Lock()
        self._value = 0

    def read(self) -> int:
        return self._value

    def advance(self) -> int:
        with self._mutex:
            self._value += 1
            return self._value


class VersionedLock:
    """Per-object lock word pairing an owner with the version stamp of the
    last committed writer.

    The (owner, version) pair is swapped as one reference so readers can
    sample both with a single load; transitions go through a mutex.
    """

    __slots__ = ("_mutex", "_word", "acquire_count")

    def __init__(self):
        self._mutex = threading.Lock()
        self._word = (None, 0)
        self.acquire_count = 0  # test hook, counts successful fresh acquisitions

    @property
    def owner(self):
        return self._word[0]

    @property
    def version(self) -> int:
        return self._word[1]

    def sample(self):
        """One atomic load of (owner, version)."""
        return self._word

    def try_acquire(self, owner) -> bool:
        with self._mutex:
            cur, version = self._word
            if cur is None:
                self._word = (owner, version)
                self.acquire_count += 1
                return True
            return cur == owner

    def stamp(self, owner, version: int) -> None:
        """Set the version while holding the lock; readers racing this see
        the locked owner and conflict instead of a torn stamp."""
        with self._mutex:
            cur, _ = self._word
            if cur != owner:
                raise TransactionUsageError("stamping a lock that is not held")
            self._word = (owner, version)

    def release(self, owner) -> None:
        with self._mutex:
            cur, version = self._word
            if cur == owner:
                self._word = (None, version)


class TransactionalStructure:
    """Contract every transactional structure implements so the transaction
    core can drive commit and abort across all objects a transaction touched.

    ``validate(tx, level)`` checks the read-set recorded at the given level
    against ``tx.vc`` without locking anything. ``migrate(tx)`` folds
    child-local state into parent-local state. ``lock_for_commit`` acquires
    whatever locks publishing needs, ``commit_apply`` publishes parent-local
    state under those locks, and ``release_local`` discards local state at
    one level. None of these are called by user code directly.
    """

    kind = "structure"

    def __init__(self, manager: "TransactionManager", name: str | None = None):
        self.manager = manager
        self.name = name if name is not None else manager._auto_name(self.kind)
        manager._register_structure(self)

    def validate(self, tx: "Transaction", level: Level) -> bool:
        raise NotImplementedError

    def migrate(self, tx: "Transaction") -> None:
        raise NotImplementedError

    def lock_for_commit(self, tx: "Transaction") -> bool:
        raise NotImplementedError

    def is_dirty(self, tx: "Transaction") -> bool:
        raise NotImplementedError

    def commit_apply(self, tx: "Transaction", stamp: int) -> None:
        raise NotImplementedError

    def release_local(self, tx: "Transaction", level: Level) -> None:
        raise NotImplementedError

    def snapshot(self):
        """Quiescent-state dump for tests and the history checker."""
        raise NotImplementedError


class Transaction:
    """Per-thread transaction descriptor.

    Single-thread affine: created, used, and finished on one thread. All
    cross-thread coordination happens through the shared clock, lock words,
    and slot states of the structures themselves.
    """

    __slots__ = (
        "manager", "id", "vc", "level", "status",
        "parent_objects", "child_objects",
        "parent_locks", "child_locks",
        "child_retry_count", "child_retry_limit",
        "commit_stamp", "total_child_aborts", "total_child_restarts",
        "_states", "_events", "_child_event_mark", "_rec",
    )

    def __init__(self, manager, tx_id, vc, child_retry_limit):
        self.manager = manager
        self.id = tx_id
        self.vc = vc
        self.level = Level.PARENT
        self.status = Status.ACTIVE
        self.parent_objects = set()
        self.child_objects = set()
        self.parent_locks = set()
        self.child_locks = set()
        self.child_retry_count = 0
        self.child_retry_limit = child_retry_limit
        self.commit_stamp = None
        self.total_child_aborts = 0
        self.total_child_restarts = 0
        self._states = {}
        self._events = []
        self._child_event_mark = None
        self._rec = manager.recorder

    # -- bookkeeping used by the structures ------------------------------

    def _check_active(self):
        if self.status is not Status.ACTIVE:
            raise TransactionUsageError(
                "transaction already %s" % self.status.value)

    def _require_parent(self, op):
        self._check_active()
        if self.level is not Level.PARENT:
            raise TransactionUsageError(
                "%s is a parent-level operation; a child is active" % op)

    def _require_child(self, op):
        self._check_active()
        if self.level is not Level.CHILD:
            raise TransactionUsageError(
                "%s is a child-level operation; begin a child first" % op)

    def register(self, structure) -> None:
        """Record first access to a structure at the current level."""
        self._check_active()
        if structure.manager is not self.manager:
            raise TransactionUsageError(
                "structure belongs to a different transaction manager")
        if self.level is Level.CHILD:
            self.child_objects.add(structure)
        else:
            self.parent_objects.add(structure)

    def state_for(self, structure, factory):
        state = self._states.get(structure)
        if state is None:
            state = self._states[structure] = factory()
        return state

    def _acquire_parent(self, lock: VersionedLock) -> bool:
        if lock in self.parent_locks or lock in self.child_locks:
            return True
        if lock.try_acquire(self.id):
            self.parent_locks.add(lock)
            return True
        return False

    def acquire_lock(self, lock: VersionedLock) -> None:
        """Level-aware pessimistic acquisition.

        At parent level a foreign owner aborts the whole transaction; at
        child level it enters the child-abort path. A lock already held by
        this transaction at either level is left where it is, so a child
        observes its parent's ownership without re-acquiring.
        """
        self._check_active()
        if lock in self.parent_locks or lock in self.child_locks:
            return
        if self.level is Level.PARENT:
            if lock.try_acquire(self.id):
                self.parent_locks.add(lock)
                return
            self.abort("lock held by another transaction")
        else:
            if lock.try_acquire(self.id):
                self.child_locks.add(lock)
                return
            self.abort_child()

    def record(self, structure, op, args, result) -> None:
        if self._rec is not None:
            self._rec.record_op(self, structure, op, args, result)

    # -- lifecycle --------------------------------------------------------

    def begin_child(self) -> None:
        self._require_parent("begin_child")
        # single nesting level only
        self.level = Level.CHILD
        self.child_retry_count = 0
        if self._rec is not None:
            self._child_event_mark = len(self._events)

    def commit_child(self) -> None:
        """Validate the child's reads at the parent's clock, then migrate
        child state and lock ownership into the parent. No write-set
        locking happens here."""
        self._require_child("commit_child")
        for obj in self.child_objects:
            if not obj.validate(self, Level.CHILD):
                self.abort_child()  # raises
        for obj in self.child_objects:
            obj.migrate(self)
        self.parent_objects |= self.child_objects
        self.child_objects.clear()
        self.parent_locks |= self.child_locks
        self.child_locks.clear()
        self.level = Level.PARENT
        self._child_event_mark = None

    def abort_child(self):
        """Discard the child, then decide its fate: restart it under a
        refreshed clock snapshot, or abort the parent if the parent's reads
        no longer hold (early abort) or the retry budget is spent.

        Raises ChildRestarted or TransactionAborted; never returns.
        """
        self._require_child("abort_child")
        self.total_child_aborts += 1
        for lock in self.child_locks:
            lock.release(self.id)
        self.child_locks.clear()
        for obj in self.child_objects:
            obj.release_local(self, Level.CHILD)
        self.child_objects.clear()
        self.vc = self.manager.clock.read()
        for obj in self.parent_objects:
            if not obj.validate(self, Level.PARENT):
                self._abort_parent()
                raise TransactionAborted(
                    "parent reads invalid at refreshed clock")
        if self.child_retry_count < self.child_retry_limit:
            self.child_retry_count += 1
            self.total_child_restarts += 1
            if self._rec is not None and self._child_event_mark is not None:
                del self._events[self._child_event_mark:]
            if self.manager.child_backoff:
                time.sleep(min(1e-5 * (2 ** self.child_retry_count), 1e-2))
            raise ChildRestarted("child retry %d" % self.child_retry_count)
        self._abort_parent()
        raise TransactionAborted("child retry limit reached")

    def run_child(self, fn):
        """Retry-loop helper: run ``fn(tx)`` as a child transaction,
        restarting it on child aborts until it commits or escalates."""
        self.begin_child()
        while True:
            try:
                result = fn(self)
                self.commit_child()
                return result
            except ChildRestarted:
                continue
            except TransactionAborted:
                raise
            except BaseException:
                self._abandon_child()
                raise

    def _abandon_child(self):
        # non-transactional unwind: drop child state, stay active at parent
        if self.status is Status.ACTIVE and self.level is Level.CHILD:
            for lock in self.child_locks:
                lock.release(self.id)
            self.child_locks.clear()
            for obj in self.child_objects:
                obj.release_local(self, Level.CHILD)
            self.child_objects.clear()
            self.level = Level.PARENT
            self._child_event_mark = None

    def commit(self) -> bool:
        """Lock every write-set, revalidate every read-set, advance the
        clock if anything was written, publish, and release.

        Returns True on commit. A lock or validation failure aborts and
        returns False; that is a retriable outcome, not a fault.
        """
        self._require_parent("commit")
        objs = self.parent_objects
        for obj in objs:
            if not obj.lock_for_commit(self):
                self._abort_parent()
                return False
        for obj in objs:
            if not obj.validate(self, Level.PARENT):
                self._abort_parent()
                return False
        dirty = [obj for obj in objs if obj.is_dirty(self)]
        if dirty:
            stamp = self.manager.clock.advance()
            self.commit_stamp = stamp
            for obj in dirty:
                obj.commit_apply(self, stamp)
        if self._rec is not None:
            # sampled before locks are released: commit-point order agrees
            # with every lock epoch this transaction participated in
            self._rec.commit_tx(self)
        for lock in self.parent_locks:
            lock.release(self.id)
        self.parent_locks.clear()
        for obj in objs:
            obj.release_local(self, Level.PARENT)
        self.parent_objects = set()
        self._states.clear()
        self.status = Status.COMMITTED
        self.manager._finish(self)
        return True

    def abort(self, reason: str = "aborted by caller"):
        """Abort the whole transaction and raise TransactionAborted."""
        self._check_active()
        self._abort_parent()
        raise TransactionAborted(reason)

    def _abort_parent(self):
        for lock in self.child_locks:
            lock.release(self.id)
        self.child_locks.clear()
        for obj in self.child_objects:
            obj.release_local(self, Level.CHILD)
        self.child_objects.clear()
        for lock in self.parent_locks:
            lock.release(self.id)
        self.parent_locks.clear()
        for obj in self.parent_objects:
            obj.release_local(self, Level.PARENT)
        self.parent_objects = set()
        self._states.clear()
        self.level = Level.PARENT
        self.status = Status.ABORTED
        if self._rec is not None:
            self._rec.abort_tx(self)
        self.manager._finish(self)


class TransactionManager:
    """Factory and retry driver for transactions sharing one version clock.

    Structures are bound to a manager at construction; transactions from a
    different manager are rejected on first access.
    """

    def __init__(self, child_retry_limit: int = 10, child_backoff: bool = False):
        if child_retry_limit < 1:
            raise ValueError("child_retry_limit must be positive")
        self.clock = GlobalVersionClock()
        self.child_retry_limit = child_retry_limit
        self.child_backoff = child_backoff
        self.recorder = None
        self.structures = []
        self._mutex = threading.Lock()
        self._next_id = 1
        self._name_counts = {}
        self._tls = threading.local()

    def _register_structure(self, structure):
        with self._mutex:
            self.structures.append(structure)

    def _auto_name(self, kind):
        with self._mutex:
            n = self._name_counts.get(kind, 0) + 1
            self._name_counts[kind] = n
        return "%s-%d" % (kind, n)

    def begin(self, child_retry_limit: int | None = None) -> Transaction:
        """Start a parent-level transaction with a fresh clock snapshot."""
        cur = getattr(self._tls, "tx", None)
        if cur is not None and cur.status is Status.ACTIVE:
            raise TransactionUsageError(
                "thread already has an active transaction")
        with self._mutex:
            tx_id = self._next_id
            self._next_id += 1
        limit = self.child_retry_limit if child_retry_limit is None else child_retry_limit
        tx = Transaction(self, tx_id, self.clock.read(), limit)
        self._tls.tx = tx
        return tx

    def _finish(self, tx):
        if getattr(self._tls, "tx", None) is tx:
            self._tls.tx = None

    def current(self) -> Transaction | None:
        tx = getattr(self._tls, "tx", None)
        if tx is not None and tx.status is Status.ACTIVE:
            return tx
        return None

    def run(self, fn, max_attempts: int | None = None):
        """Execute ``fn(tx)`` inside a transaction, retrying on aborts.

        The closure must tolerate re-execution. Exceptions other than the
        abort signal propagate after cleanup.
        """
        attempts = 0
        while True:
            attempts += 1
            tx = self.begin()
            try:
                result = fn(tx)
            except TransactionAborted:
                if max_attempts is not None and attempts >= max_attempts:
                    raise
                continue
            except BaseException:
                if tx.status is Status.ACTIVE:
                    tx._abort_parent()
                raise
            if tx.commit():
                return result
            if max_attempts is not None and attempts >= max_attempts:
                raise TransactionAborted("gave up after %d attempts" % attempts)

    def start_recording(self, record_aborted: bool = False):
        """Attach a history recorder capturing committed operation events.

        Call while the system is quiescent so initial snapshots are stable.
        """
        from .checker import HistoryRecorder

        rec = HistoryRecorder(record_aborted=record_aborted)
        rec.capture_initial(list(self.structures))
        self.recorder = rec
        return rec

    def stop_recording(self):
        """Detach the recorder and return the CommittedHistory."""
        rec = self.recorder
        if rec is None:
            raise TransactionUsageError("recording is not active")
        self.recorder = None
        rec.capture_finals(list(self.structures))
        return rec.history()
