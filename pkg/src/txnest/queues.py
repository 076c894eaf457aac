"""Transactional FIFO queue: optimistic enqueue (commit-time lock) and
pessimistic dequeue (whole-queue lock at first dequeue, physical removal
deferred to commit).

A dequeue walks three tiers: shared nodes are consumed logically via a
cursor and stay in place until commit; parent-pending nodes come next; a
child finally dequeues destructively from its own pending list.
"""

from __future__ import annotations

from .core import EMPTY, Level, TransactionalStructure, VersionedLock


class _QueueState:
    __slots__ = ("parent_pending", "child_pending", "shared_taken",
                 "parent_taken", "deq_done", "child_mark")

    def __init__(self):
        self.parent_pending = []
        self.child_pending = []
        self.shared_taken = 0      # shared nodes logically consumed by this tx
        self.parent_taken = 0      # parent-pending nodes logically consumed by the child
        self.deq_done = False
        self.child_mark = None     # (shared_taken, deq_done) at child entry


class TransactionalQueue(TransactionalStructure):
    """FIFO queue safe for concurrent transactions via a single lock."""

    kind = "queue"

    def __init__(self, manager, name=None):
        super().__init__(manager, name)
        self._shared = []
        self._lock = VersionedLock()

    # -- operations -------------------------------------------------------

    def enq(self, tx, value) -> None:
        tx._require_parent("enq")
        state = self._touch(tx)
        state.parent_pending.append(value)
        tx.record(self, "enq", (value,), None)

    def deq(self, tx):
        """Lock the queue immediately; return the next value without
        physically removing shared nodes until commit. EMPTY when both the
        shared queue and this transaction's pending values are exhausted."""
        tx._require_parent("deq")
        state = self._touch(tx)
        tx.acquire_lock(self._lock)
        state.deq_done = True
        shared = self._shared
        if state.shared_taken < len(shared):
            value = shared[state.shared_taken]
            state.shared_taken += 1
        elif state.parent_pending:
            value = state.parent_pending.pop(0)
        else:
            value = EMPTY
        tx.record(self, "deq", (), value)
        return value

    def n_enq(self, tx, value) -> None:
        tx._require_child("n_enq")
        state = self._touch(tx)
        state.child_pending.append(value)
        tx.record(self, "enq", (value,), None)

    def n_deq(self, tx):
        tx._require_child("n_deq")
        state = self._touch(tx)
        tx.acquire_lock(self._lock)
        state.deq_done = True
        shared = self._shared
        if state.shared_taken < len(shared):
            value = shared[state.shared_taken]    # stays in the shared queue
            state.shared_taken += 1
        elif state.parent_taken < len(state.parent_pending):
            value = state.parent_pending[state.parent_taken]  # stays pending
            state.parent_taken += 1
        elif state.child_pending:
            value = state.child_pending.pop(0)
        else:
            value = EMPTY
        tx.record(self, "deq", (), value)
        return value

    def _touch(self, tx):
        tx.register(self)
        state = tx.state_for(self, _QueueState)
        if tx.level is Level.CHILD and state.child_mark is None:
            state.child_mark = (state.shared_taken, state.deq_done)
        return state

    # -- transactional contract -------------------------------------------

    def validate(self, tx, level) -> bool:
        # dequeues hold the lock and enqueues read nothing
        return True

    def migrate(self, tx) -> None:
        state = tx._states[self]
        if state.parent_taken:
            del state.parent_pending[:state.parent_taken]
            state.parent_taken = 0
        state.parent_pending.extend(state.child_pending)
        state.child_pending = []
        state.child_mark = None

    def lock_for_commit(self, tx) -> bool:
        state = tx._states.get(self)
        if state is None:
            return True
        if state.parent_pending or state.shared_taken:
            return tx._acquire_parent(self._lock)
        return True

    def is_dirty(self, tx) -> bool:
        state = tx._states.get(self)
        return bool(state and (state.parent_pending or state.shared_taken))

    def commit_apply(self, tx, stamp) -> None:
        state = tx._states[self]
        shared = self._shared
        if state.shared_taken:
            del shared[:state.shared_taken]
            state.shared_taken = 0
        if state.parent_pending:
            shared.extend(state.parent_pending)
            state.parent_pending = []
        self._lock.stamp(tx.id, stamp)

    def release_local(self, tx, level) -> None:
        state = tx._states.get(self)
        if state is None:
            return
        if level is Level.CHILD:
            if state.child_mark is not None:
                state.shared_taken, state.deq_done = state.child_mark
                state.child_mark = None
            state.parent_taken = 0
            state.child_pending = []
        else:
            state.parent_pending = []
            state.shared_taken = 0
            state.parent_taken = 0
            state.deq_done = False

    # -- test hooks ---------------------------------------------------------

    def snapshot(self) -> list:
        return list(self._shared)
