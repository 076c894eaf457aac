"""Append-only transactional log. Indexed reads of the immutable prefix
are optimistic and lock-free; appends lock the log eagerly because only
one of any set of interleaving appenders can commit.

Each transaction captures the shared length at its first log access. A
read past that point sets a read-after-end flag; at validation time the
flag plus any growth of the shared log means the transaction observed an
end that no longer exists, so it aborts. Flags are kept per level and
OR-ed into the parent on child commit so a child abort cannot poison the
parent's validation.
"""

from __future__ import annotations

from .core import EMPTY, Level, TransactionalStructure, VersionedLock


class _LogState:
    __slots__ = ("parent_appends", "child_appends", "parent_read_after_end",
                 "child_read_after_end", "init_len", "init_len_level")

    def __init__(self):
        self.parent_appends = []
        self.child_appends = []
        self.parent_read_after_end = False
        self.child_read_after_end = False
        self.init_len = None
        self.init_len_level = None


class TransactionalLog(TransactionalStructure):

    kind = "log"

    def __init__(self, manager, name=None):
        super().__init__(manager, name)
        self._shared = []
        self._lock = VersionedLock()

    # -- operations -------------------------------------------------------

    def append(self, tx, value) -> None:
        tx._require_parent("append")
        state = self._touch(tx)
        tx.acquire_lock(self._lock)
        state.parent_appends.append(value)
        tx.record(self, "append", (value,), None)

    def read(self, tx, i):
        """Value at index ``i`` in this transaction's view of the log:
        the shared prefix captured at first access, then this
        transaction's own pending appends. EMPTY past the end."""
        tx._require_parent("read")
        state = self._touch(tx)
        value = self._read_at(state, i, nested=False)
        tx.record(self, "read", (i,), value)
        return value

    def n_append(self, tx, value) -> None:
        tx._require_child("n_append")
        state = self._touch(tx)
        tx.acquire_lock(self._lock)
        state.child_appends.append(value)
        tx.record(self, "append", (value,), None)

    def n_read(self, tx, i):
        tx._require_child("n_read")
        state = self._touch(tx)
        value = self._read_at(state, i, nested=True)
        tx.record(self, "read", (i,), value)
        return value

    def _read_at(self, state, i, nested):
        if i < 0:
            raise ValueError("log index must be non-negative")
        if i < state.init_len:
            return self._shared[i]
        if nested:
            state.child_read_after_end = True
        else:
            state.parent_read_after_end = True
        j = i - state.init_len
        if j < len(state.parent_appends):
            return state.parent_appends[j]
        if nested:
            j -= len(state.parent_appends)
            if j < len(state.child_appends):
                return state.child_appends[j]
        return EMPTY

    def _touch(self, tx):
        tx.register(self)
        state = tx.state_for(self, _LogState)
        if state.init_len is None:
            state.init_len = len(self._shared)
            state.init_len_level = tx.level
        return state

    # -- transactional contract -------------------------------------------

    def validate(self, tx, level) -> bool:
        state = tx._states.get(self)
        if state is None:
            return True
        flag = (state.child_read_after_end if level is Level.CHILD
                else state.parent_read_after_end)
        if flag and len(self._shared) > state.init_len:
            return False
        return True

    def migrate(self, tx) -> None:
        state = tx._states[self]
        state.parent_appends.extend(state.child_appends)
        state.child_appends = []
        state.parent_read_after_end |= state.child_read_after_end
        state.child_read_after_end = False
        if state.init_len_level is Level.CHILD:
            state.init_len_level = Level.PARENT

    def lock_for_commit(self, tx) -> bool:
        state = tx._states.get(self)
        if state is None or not state.parent_appends:
            return True
        return tx._acquire_parent(self._lock)

    def is_dirty(self, tx) -> bool:
        state = tx._states.get(self)
        return bool(state and state.parent_appends)

    def commit_apply(self, tx, stamp) -> None:
        state = tx._states[self]
        self._shared.extend(state.parent_appends)
        state.parent_appends = []
        self._lock.stamp(tx.id, stamp)

    def release_local(self, tx, level) -> None:
        state = tx._states.get(self)
        if state is None:
            return
        if level is Level.CHILD:
            state.child_appends = []
            state.child_read_after_end = False
            if state.init_len_level is Level.CHILD:
                state.init_len = None
                state.init_len_level = None
        else:
            state.parent_appends = []
            state.parent_read_after_end = False
            state.init_len = None
            state.init_len_level = None

    # -- test hooks ---------------------------------------------------------

    def snapshot(self) -> list:
        return list(self._shared)

    def __len__(self):
        return len(self._shared)
