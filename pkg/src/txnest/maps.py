"""Transactional ordered map: optimistic reads with per-entry version
validation, write-sets applied at commit time, and nested child sets that
migrate into the parent on child commit.

Deletion is logical: removed keys keep their index entry and turn into
tombstones, so no safe-reclamation machinery is needed.
"""

from __future__ import annotations

import random
import threading

from .core import Level, TransactionalStructure, VersionedLock


class _Tombstone:
    __slots__ = ()

    def __repr__(self):
        return "<absent>"


_ABSENT = _Tombstone()   # shared entry value for deleted / never-committed keys
_REMOVE = _Tombstone()   # write-set marker for pending removals


class _Entry:
    """Shared per-key cell. ``value`` changes only while ``lock`` is held
    by a committing writer; readers double-sample the lock around the value
    read to get a consistent (value, version) pair."""

    __slots__ = ("key", "value", "lock")

    def __init__(self, key):
        self.key = key
        self.value = _ABSENT
        self.lock = VersionedLock()


class _SkiplistIndex:
    """Ordered index of entries. Lookups are lock-free; structural inserts
    run under a mutex and link fully-initialized nodes bottom-up, so a
    concurrent reader sees either the old or the new link, never a torn
    node. Nodes are never unlinked."""

    MAX_LEVEL = 20

    __slots__ = ("_head", "_top", "_mutex", "_rng", "_size")

    class _Node:
        __slots__ = ("key", "entry", "nexts")

        def __init__(self, key, entry, height):
            self.key = key
            self.entry = entry
            self.nexts = [None] * height

    def __init__(self):
        self._head = self._Node(None, None, self.MAX_LEVEL)
        self._top = 1
        self._mutex = threading.Lock()
        self._rng = random.Random(0x5EED)
        self._size = 0

    def find(self, key):
        node = self._head
        for lvl in range(self._top - 1, -1, -1):
            nxt = node.nexts[lvl]
            while nxt is not None and nxt.key < key:
                node = nxt
                nxt = node.nexts[lvl]
        nxt = node.nexts[0]
        if nxt is not None and nxt.key == key:
            return nxt.entry
        return None

    def get_or_create(self, key):
        with self._mutex:
            preds = [None] * self.MAX_LEVEL
            node = self._head
            for lvl in range(self._top - 1, -1, -1):
                nxt = node.nexts[lvl]
                while nxt is not None and nxt.key < key:
                    node = nxt
                    nxt = node.nexts[lvl]
                preds[lvl] = node
            nxt = node.nexts[0]
            if nxt is not None and nxt.key == key:
                return nxt.entry
            height = 1
            while height < self.MAX_LEVEL and self._rng.getrandbits(1):
                height += 1
            if height > self._top:
                for lvl in range(self._top, height):
                    preds[lvl] = self._head
                self._top = height
            entry = _Entry(key)
            new = self._Node(key, entry, height)
            for lvl in range(height):
                new.nexts[lvl] = preds[lvl].nexts[lvl]
            for lvl in range(height):
                preds[lvl].nexts[lvl] = new
            self._size += 1
            return entry

    def items(self):
        node = self._head.nexts[0]
        while node is not None:
            yield node.key, node.entry
            node = node.nexts[0]


class _MapState:
    """Per-transaction view: read-sets keep the entry observed per key
    (None when the key had no entry yet), write-sets map key to a pending
    value or the remove marker. Child sets shadow parent sets."""

    __slots__ = ("parent_reads", "parent_writes", "child_reads",
                 "child_writes", "locked_entries")

    def __init__(self):
        self.parent_reads = {}
        self.parent_writes = {}
        self.child_reads = {}
        self.child_writes = {}
        self.locked_entries = None


class TransactionalMap(TransactionalStructure):
    """Map with read-your-writes semantics inside a transaction and
    first-committer-wins conflict resolution across transactions.

    Absent keys read as None; payloads must therefore not be None.
    """

    kind = "map"

    def __init__(self, manager, name=None):
        super().__init__(manager, name)
        self._index = _SkiplistIndex()

    # -- operations -------------------------------------------------------

    def get(self, tx, key):
        tx._require_parent("get")
        state = self._touch(tx)
        if key in state.parent_writes:
            self._observe(state.parent_reads, key)
            pending = state.parent_writes[key]
            result = None if pending is _REMOVE else pending
        else:
            result = self._shared_read(tx, state.parent_reads, key, Level.PARENT)
        tx.record(self, "get", (key,), result)
        return result

    def put(self, tx, key, value) -> None:
        tx._require_parent("put")
        state = self._touch(tx)
        state.parent_writes[key] = value
        tx.record(self, "put", (key, value), None)

    def remove(self, tx, key) -> None:
        tx._require_parent("remove")
        state = self._touch(tx)
        state.parent_writes[key] = _REMOVE
        tx.record(self, "remove", (key,), None)

    def n_get(self, tx, key):
        tx._require_child("n_get")
        state = self._touch(tx)
        if key in state.child_writes:
            self._observe(state.child_reads, key)
            pending = state.child_writes[key]
            result = None if pending is _REMOVE else pending
        elif key in state.parent_writes:
            self._observe(state.child_reads, key)
            pending = state.parent_writes[key]
            result = None if pending is _REMOVE else pending
        else:
            result = self._shared_read(tx, state.child_reads, key, Level.CHILD)
        tx.record(self, "get", (key,), result)
        return result

    def n_put(self, tx, key, value) -> None:
        tx._require_child("n_put")
        state = self._touch(tx)
        state.child_writes[key] = value
        tx.record(self, "put", (key, value), None)

    def n_remove(self, tx, key) -> None:
        tx._require_child("n_remove")
        state = self._touch(tx)
        state.child_writes[key] = _REMOVE
        tx.record(self, "remove", (key,), None)

    def _touch(self, tx):
        tx.register(self)
        return tx.state_for(self, _MapState)

    def _observe(self, reads, key):
        """Record the key in the read-set with its currently visible
        version, without the read-time gate; used when the value itself is
        served from a write-set."""
        if key not in reads:
            entry = self._index.find(key)
            reads[key] = (entry, entry.lock.version if entry is not None else 0)

    def _shared_read(self, tx, reads, key, level):
        """Read a shared entry at the transaction's logical time and record
        the observed version. A locked (by someone else) or too-new entry
        is a conflict: the transaction must not observe it (opacity), so
        the appropriate level aborts."""
        known = reads.get(key)
        if known is None:
            entry = self._index.find(key)
            if entry is None:
                reads[key] = (None, 0)
                return None
        else:
            entry = known[0]
            if entry is None:
                return None  # observed absent; stays absent in this view
        word = entry.lock.sample()
        value = entry.value
        word2 = entry.lock.sample()
        owner, version = word2
        if word == word2 and version <= tx.vc and \
                (owner is None or owner == tx.id):
            if known is None:
                reads[key] = (entry, version)
            return None if value is _ABSENT else value
        if level is Level.CHILD:
            tx.abort_child()
        tx.abort("read conflict on map key %r" % (key,))

    # -- transactional contract -------------------------------------------

    def validate(self, tx, level) -> bool:
        """A read-set is valid while every observation still stands: the
        entry's version is unchanged since the read (absent keys are still
        absent or never committed) and nobody else holds its lock."""
        state = tx._states.get(self)
        if state is None:
            return True
        reads = state.child_reads if level is Level.CHILD else state.parent_reads
        find = self._index.find
        tid = tx.id
        for key, (entry, observed) in reads.items():
            if entry is None:
                entry = find(key)
                if entry is None:
                    continue
                reads[key] = (entry, observed)
            owner, version = entry.lock.sample()
            if version != observed:
                return False
            if owner is not None and owner != tid:
                return False
        return True

    def migrate(self, tx) -> None:
        state = tx._states[self]
        state.parent_writes.update(state.child_writes)
        # keep the parent's (earlier) observation on key collisions
        for key, obs in state.child_reads.items():
            state.parent_reads.setdefault(key, obs)
        state.child_writes = {}
        state.child_reads = {}

    def lock_for_commit(self, tx) -> bool:
        state = tx._states.get(self)
        if state is None or not state.parent_writes:
            return True
        locked = state.locked_entries = {}
        for key in state.parent_writes:
            entry = self._index.get_or_create(key)
            if not tx._acquire_parent(entry.lock):
                return False
            locked[key] = entry
        return True

    def is_dirty(self, tx) -> bool:
        state = tx._states.get(self)
        return bool(state and state.parent_writes)

    def commit_apply(self, tx, stamp) -> None:
        state = tx._states[self]
        for key, pending in state.parent_writes.items():
            entry = state.locked_entries[key]
            entry.value = _ABSENT if pending is _REMOVE else pending
            entry.lock.stamp(tx.id, stamp)

    def release_local(self, tx, level) -> None:
        state = tx._states.get(self)
        if state is None:
            return
        if level is Level.CHILD:
            state.child_reads = {}
            state.child_writes = {}
        else:
            state.parent_reads = {}
            state.parent_writes = {}
            state.locked_entries = None

    # -- test hooks --------------------------------------------------------

    def snapshot(self) -> dict:
        return {key: entry.value for key, entry in self._index.items()
                if entry.value is not _ABSENT}

    def _entry(self, key):
        return self._index.find(key)
