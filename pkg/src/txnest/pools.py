"""Bounded transactional producer-consumer pool.

Each of the K slots carries its own atomic state: FREE, LOCKED (in use by
an ongoing transaction), or READY (holds a consumable value). Produce and
consume are pessimistic at slot granularity: they claim a slot by CAS and
keep it locked until commit. A consume that matches a produce of the same
transaction cancels it instead, releasing the slot immediately; the value
never becomes visible to other threads, so no coordination is needed.
"""

from __future__ import annotations

import threading

from .core import Level, TransactionalStructure

FREE = "free"
LOCKED = "locked"
READY = "ready"


class Slot:
    """Pool cell; all state changes go through a CAS."""

    __slots__ = ("index", "state", "value", "_mutex")

    def __init__(self, index):
        self.index = index
        self.state = FREE
        self.value = None
        self._mutex = threading.Lock()

    def cas(self, expect, new, observer=None) -> bool:
        with self._mutex:
            if self.state != expect:
                return False
            self.state = new
            if observer is not None:
                observer(self.index, expect, new)
            return True

    def __repr__(self):
        return "Slot(%d, %s)" % (self.index, self.state)


class _PoolState:
    __slots__ = ("parent_produced", "parent_consumed", "child_produced",
                 "child_consumed", "child_consumed_parent")

    def __init__(self):
        self.parent_produced = []
        self.parent_consumed = []
        self.child_produced = []
        self.child_consumed = []
        self.child_consumed_parent = []


class ProducerConsumerPool(TransactionalStructure):
    """Pool of ``capacity`` slots; no global lock, no ordering guarantee.

    ``probe_limit`` bounds the slot scan in get_free_slot/get_ready_slot;
    exhausting it aborts at the caller's nesting level so a saturated pool
    surfaces as a retriable abort instead of an unbounded wait.
    """

    kind = "pool"

    def __init__(self, manager, capacity: int, name=None, probe_limit: int = 1000):
        if capacity < 1:
            raise ValueError("pool capacity must be positive")
        super().__init__(manager, name)
        self.capacity = capacity
        self.slots = [Slot(i) for i in range(capacity)]
        self.probe_limit = probe_limit
        self.transition_observer = None  # test hook: fn(index, old, new)

    # -- slot claiming ------------------------------------------------------

    def get_free_slot(self, tx) -> Slot:
        return self._claim(tx, FREE)

    def get_ready_slot(self, tx) -> Slot:
        return self._claim(tx, READY)

    def _claim(self, tx, want) -> Slot:
        slots = self.slots
        k = self.capacity
        observer = self.transition_observer
        start = hash(tx.id) % k
        for probe in range(self.probe_limit):
            slot = slots[(start + probe) % k]
            if slot.state == want and slot.cas(want, LOCKED, observer):
                return slot
        if tx.level is Level.CHILD:
            tx.abort_child()
        tx.abort("no %s slot after %d probes" % (want, self.probe_limit))

    def _unlock(self, slot, new):
        if not slot.cas(LOCKED, new, self.transition_observer):
            raise AssertionError("slot %d not locked by releasing transaction"
                                 % slot.index)

    # -- operations -------------------------------------------------------

    def produce(self, tx, value) -> None:
        tx._require_parent("produce")
        state = self._touch(tx)
        slot = self.get_free_slot(tx)
        slot.value = value
        state.parent_produced.append(slot)
        tx.record(self, "produce", (value,), None)

    def consume(self, tx, consumer=None):
        """Deliver a produced value. A value produced earlier in this same
        transaction is consumed first and its slot cancelled back to FREE;
        otherwise a READY slot is claimed and stays locked until commit."""
        tx._require_parent("consume")
        state = self._touch(tx)
        if state.parent_produced:
            slot = state.parent_produced.pop()
            value = slot.value
            if consumer is not None:
                consumer(value)
            self._unlock(slot, FREE)  # cancellation
        else:
            slot = self.get_ready_slot(tx)
            value = slot.value
            if consumer is not None:
                consumer(value)
            state.parent_consumed.append(slot)
        tx.record(self, "consume", (), value)
        return value

    def n_produce(self, tx, value) -> None:
        tx._require_child("n_produce")
        state = self._touch(tx)
        slot = self.get_free_slot(tx)
        slot.value = value
        state.child_produced.append(slot)
        tx.record(self, "produce", (value,), None)

    def n_consume(self, tx, consumer=None):
        """Child-level consume: child-produced slots cancel first, then
        parent-produced values are claimed without changing slot state
        (deferred to child commit), then a shared READY slot."""
        tx._require_child("n_consume")
        state = self._touch(tx)
        slot = None
        if state.child_produced:
            slot = state.child_produced.pop()
            value = slot.value
            if consumer is not None:
                consumer(value)
            self._unlock(slot, FREE)  # cancellation inside the child
        else:
            claimed = state.child_consumed_parent
            for candidate in state.parent_produced:
                if candidate not in claimed:
                    slot = candidate
                    break
            if slot is not None:
                value = slot.value
                if consumer is not None:
                    consumer(value)
                claimed.append(slot)
            else:
                slot = self.get_ready_slot(tx)
                value = slot.value
                if consumer is not None:
                    consumer(value)
                state.child_consumed.append(slot)
        tx.record(self, "consume", (), value)
        return value

    def _touch(self, tx):
        tx.register(self)
        return tx.state_for(self, _PoolState)

    # -- transactional contract -------------------------------------------

    def validate(self, tx, level) -> bool:
        # slot access is pessimistic; nothing speculative to re-check
        return True

    def migrate(self, tx) -> None:
        state = tx._states[self]
        state.parent_consumed.extend(state.child_consumed)
        state.child_consumed = []
        state.parent_produced.extend(state.child_produced)
        state.child_produced = []
        for slot in state.child_consumed_parent:
            state.parent_produced.remove(slot)
            self._unlock(slot, FREE)
        state.child_consumed_parent = []

    def lock_for_commit(self, tx) -> bool:
        return True  # claimed slots are already locked

    def is_dirty(self, tx) -> bool:
        state = tx._states.get(self)
        return bool(state and (state.parent_produced or state.parent_consumed))

    def commit_apply(self, tx, stamp) -> None:
        state = tx._states[self]
        for slot in state.parent_produced:
            self._unlock(slot, READY)
        state.parent_produced = []
        for slot in state.parent_consumed:
            slot.value = None
            self._unlock(slot, FREE)
        state.parent_consumed = []

    def release_local(self, tx, level) -> None:
        """Abort path: every slot reverts to its previous state. Slots a
        child consumed from its parent stay locked; they still belong to
        the parent's produced set."""
        state = tx._states.get(self)
        if state is None:
            return
        if level is Level.CHILD:
            for slot in state.child_produced:
                slot.value = None
                self._unlock(slot, FREE)
            state.child_produced = []
            for slot in state.child_consumed:
                self._unlock(slot, READY)
            state.child_consumed = []
            state.child_consumed_parent = []
        else:
            for slot in state.parent_produced:
                slot.value = None
                self._unlock(slot, FREE)
            state.parent_produced = []
            for slot in state.parent_consumed:
                self._unlock(slot, READY)
            state.parent_consumed = []

    # -- test hooks ---------------------------------------------------------

    def snapshot(self) -> list:
        """Values currently consumable, in slot order."""
        return [slot.value for slot in self.slots if slot.state == READY]

    def state_counts(self) -> dict:
        counts = {FREE: 0, LOCKED: 0, READY: 0}
        for slot in self.slots:
            counts[slot.state] += 1
        return counts
