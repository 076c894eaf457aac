"""Transactional LIFO stack with mixed concurrency control: operations are
optimistic while every prefix of the transaction has at least as many
pushes as pops at its level, because each pop then finds a locally pushed
value. The first pop that must read shared state takes the whole-stack
lock and from then on the transaction is pessimistic on this stack.
"""

from __future__ import annotations

from .core import EMPTY, Level, TransactionalStructure, VersionedLock


class _StackState:
    __slots__ = ("parent_items", "child_items", "shared_taken",
                 "parent_taken", "child_mark")

    def __init__(self):
        self.parent_items = []     # local pushes, top at the end
        self.child_items = []
        self.shared_taken = 0      # shared nodes logically popped (from the top)
        self.parent_taken = 0      # parent items logically popped by the child
        self.child_mark = None


class TransactionalStack(TransactionalStructure):

    kind = "stack"

    def __init__(self, manager, name=None):
        super().__init__(manager, name)
        self._shared = []          # top at the end
        self._lock = VersionedLock()

    # -- operations -------------------------------------------------------

    def push(self, tx, value) -> None:
        tx._require_parent("push")
        state = self._touch(tx)
        state.parent_items.append(value)
        tx.record(self, "push", (value,), None)

    def pop(self, tx):
        tx._require_parent("pop")
        state = self._touch(tx)
        if state.parent_items:
            value = state.parent_items.pop()
        else:
            tx.acquire_lock(self._lock)
            shared = self._shared
            if state.shared_taken < len(shared):
                state.shared_taken += 1
                value = shared[-state.shared_taken]  # no physical pop yet
            else:
                value = EMPTY
        tx.record(self, "pop", (), value)
        return value

    def n_push(self, tx, value) -> None:
        tx._require_child("n_push")
        state = self._touch(tx)
        state.child_items.append(value)
        tx.record(self, "push", (value,), None)

    def n_pop(self, tx):
        tx._require_child("n_pop")
        state = self._touch(tx)
        if state.child_items:
            value = state.child_items.pop()
        elif state.parent_taken < len(state.parent_items):
            state.parent_taken += 1
            value = state.parent_items[-state.parent_taken]  # stays local
        else:
            tx.acquire_lock(self._lock)
            shared = self._shared
            if state.shared_taken < len(shared):
                state.shared_taken += 1
                value = shared[-state.shared_taken]
            else:
                value = EMPTY
        tx.record(self, "pop", (), value)
        return value

    def _touch(self, tx):
        tx.register(self)
        state = tx.state_for(self, _StackState)
        if tx.level is Level.CHILD and state.child_mark is None:
            state.child_mark = state.shared_taken
        return state

    # -- transactional contract -------------------------------------------

    def validate(self, tx, level) -> bool:
        # same argument as the queue: shared reads imply the lock is held
        return True

    def migrate(self, tx) -> None:
        state = tx._states[self]
        if state.parent_taken:
            del state.parent_items[-state.parent_taken:]
            state.parent_taken = 0
        state.parent_items.extend(state.child_items)
        state.child_items = []
        state.child_mark = None

    def lock_for_commit(self, tx) -> bool:
        state = tx._states.get(self)
        if state is None:
            return True
        if state.parent_items or state.shared_taken:
            return tx._acquire_parent(self._lock)
        return True

    def is_dirty(self, tx) -> bool:
        state = tx._states.get(self)
        return bool(state and (state.parent_items or state.shared_taken))

    def commit_apply(self, tx, stamp) -> None:
        state = tx._states[self]
        shared = self._shared
        if state.shared_taken:
            del shared[-state.shared_taken:]
            state.shared_taken = 0
        if state.parent_items:
            shared.extend(state.parent_items)
            state.parent_items = []
        self._lock.stamp(tx.id, stamp)

    def release_local(self, tx, level) -> None:
        state = tx._states.get(self)
        if state is None:
            return
        if level is Level.CHILD:
            if state.child_mark is not None:
                state.shared_taken = state.child_mark
                state.child_mark = None
            state.parent_taken = 0
            state.child_items = []
        else:
            state.parent_items = []
            state.shared_taken = 0
            state.parent_taken = 0

    # -- test hooks ---------------------------------------------------------

    def snapshot(self) -> list:
        return list(self._shared)

    @property
    def lock_acquisitions(self) -> int:
        return self._lock.acquire_count
