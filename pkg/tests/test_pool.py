"""Producer-consumer pool: slot state machine, cancellation, liveness."""

import threading

import pytest

from txnest import (
    FREE,
    LOCKED,
    READY,
    ChildRestarted,
    TransactionAborted,
    TransactionManager,
    ProducerConsumerPool,
)

def fresh(capacity=4, **kwargs):
    mgr = TransactionManager()
    return mgr, ProducerConsumerPool(mgr, capacity, **kwargs)


class TestSlotClaiming:
    def test_get_free_slot_locks_one(self):
        mgr, pool = fresh()
        tx = mgr.begin()
        slot = pool.get_free_slot(tx)
        assert slot.state == LOCKED
        assert pool.state_counts()[LOCKED] == 1

    def test_saturated_pool_aborts_after_bounded_probes(self):
        mgr, pool = fresh(capacity=2, probe_limit=50)
        for slot in pool.slots:
            assert slot.cas(FREE, LOCKED)
        tx = mgr.begin()
        pool._touch(tx)
        with pytest.raises(TransactionAborted):
            pool.get_free_slot(tx)

    def test_race_on_last_free_slot_has_one_winner(self):
        mgr, pool = fresh(capacity=3, probe_limit=20)
        assert pool.slots[0].cas(FREE, LOCKED)
        assert pool.slots[1].cas(FREE, LOCKED)
        outcomes = []
        barrier = threading.Barrier(2)

        def racer():
            tx = mgr.begin()
            pool._touch(tx)
            barrier.wait()
            try:
                pool.get_free_slot(tx)
                outcomes.append("won")
            except TransactionAborted:
                outcomes.append("lost")

        threads = [threading.Thread(target=racer) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(30)
        assert sorted(outcomes) == ["lost", "won"]


class TestParentOps:
    def test_same_transaction_produce_consume_cancels(self):
        mgr, pool = fresh()
        seen = []
        tx = mgr.begin()
        pool.produce(tx, "v")
        assert pool.state_counts()[LOCKED] == 1
        assert pool.consume(tx, seen.append) == "v"
        assert seen == ["v"]
        assert pool.state_counts() == {FREE: 4, LOCKED: 0, READY: 0}
        assert tx.commit()
        assert pool.state_counts()[READY] == 0  # never became shared-visible

    def test_consume_claims_ready_slot(self):
        mgr, pool = fresh()
        mgr.run(lambda tx: pool.produce(tx, "v"))
        assert pool.state_counts()[READY] == 1
        tx = mgr.begin()
        assert pool.consume(tx) == "v"
        assert pool.state_counts()[LOCKED] == 1
        assert tx.commit()
        assert pool.state_counts() == {FREE: 4, LOCKED: 0, READY: 0}

    def test_commit_publishes_unconsumed_produce_as_ready(self):
        mgr, pool = fresh()
        mgr.run(lambda tx: pool.produce(tx, "v"))
        states = [s.state for s in pool.slots if s.state == READY]
        assert states == [READY]


class TestNestedOps:
    def test_child_cancellation(self):
        mgr, pool = fresh()
        tx = mgr.begin()
        tx.begin_child()
        pool.n_produce(tx, "v")
        assert pool.n_consume(tx) == "v"
        assert pool.state_counts() == {FREE: 4, LOCKED: 0, READY: 0}

    def test_child_claims_parent_produce_without_state_change(self):
        mgr, pool = fresh()
        tx = mgr.begin()
        pool.produce(tx, "v")
        tx.begin_child()
        assert pool.n_consume(tx) == "v"
        state = tx._states[pool]
        assert state.child_consumed_parent and state.parent_produced
        assert pool.state_counts()[LOCKED] == 1  # deferred to child commit
        tx.commit_child()
        assert tx._states[pool].parent_produced == []
        assert pool.state_counts() == {FREE: 4, LOCKED: 0, READY: 0}

    def test_child_falls_back_to_ready_slot(self):
        mgr, pool = fresh()
        mgr.run(lambda tx: pool.produce(tx, "shared"))
        tx = mgr.begin()
        tx.begin_child()
        assert pool.n_consume(tx) == "shared"
        assert tx._states[pool].child_consumed
        tx.commit_child()
        assert tx.commit()
        assert pool.state_counts() == {FREE: 4, LOCKED: 0, READY: 0}

    def test_saturated_pool_aborts_child(self):
        mgr, pool = fresh(capacity=1, probe_limit=10)
        assert pool.slots[0].cas(FREE, LOCKED)
        tx = mgr.begin()
        tx.begin_child()
        with pytest.raises(ChildRestarted):
            pool.n_produce(tx, "v")

    def test_child_abort_reverts_child_slots_only(self):
        mgr, pool = fresh()
        mgr.run(lambda tx: pool.produce(tx, "ready-one"))
        tx = mgr.begin()
        pool.produce(tx, "parent-v")
        tx.begin_child()
        pool.n_produce(tx, "child-v")
        assert pool.n_consume(tx) == "child-v"       # cancellation
        assert pool.n_consume(tx) == "parent-v"      # claim from parent
        assert pool.n_consume(tx) == "ready-one"     # claim from shared
        with pytest.raises(ChildRestarted):
            tx.abort_child()
        counts = pool.state_counts()
        assert counts[READY] == 1   # shared claim reverted
        assert counts[LOCKED] == 1  # parent's produce still locked
        assert tx._states[pool].parent_produced != []


class TestCommitAbort:
    def test_commit_flips_produced_and_consumed(self):
        mgr, pool = fresh()
        mgr.run(lambda tx: pool.produce(tx, "a"))

        def body(tx):
            pool.produce(tx, "b")
            assert pool.consume(tx) == "b"  # cancellation, not "a"
            assert pool.consume(tx) == "a"
        mgr.run(body)
        assert pool.state_counts() == {FREE: 4, LOCKED: 0, READY: 0}

    def test_abort_reverts_consumed_to_ready(self):
        mgr, pool = fresh()
        mgr.run(lambda tx: pool.produce(tx, "a"))
        tx = mgr.begin()
        assert pool.consume(tx) == "a"
        with pytest.raises(TransactionAborted):
            tx.abort("forced")
        assert pool.state_counts()[READY] == 1
        assert mgr.run(lambda t: pool.consume(t)) == "a"

    def test_abort_reverts_produced_to_free(self):
        mgr, pool = fresh()
        tx = mgr.begin()
        pool.produce(tx, "a")
        with pytest.raises(TransactionAborted):
            tx.abort("forced")
        assert pool.state_counts() == {FREE: 4, LOCKED: 0, READY: 0}

    def test_validate_always_true(self):
        from txnest import Level
        mgr, pool = fresh()
        tx = mgr.begin()
        assert pool.validate(tx, Level.PARENT)
        pool.produce(tx, "a")
        assert pool.validate(tx, Level.PARENT)
        pool.consume(tx)
        assert pool.validate(tx, Level.PARENT)


class TestLiveness:
    def test_k_plus_one_produce_consume_pairs_commit(self):
        mgr, pool = fresh(capacity=4)

        def body(tx):
            for i in range(5):  # K+1 pairs on a pool of K slots
                pool.produce(tx, i)
                assert pool.consume(tx) == i
        mgr.run(body)
        assert pool.state_counts() == {FREE: 4, LOCKED: 0, READY: 0}

    def test_one_ready_slot_many_consumers_delivers_once(self):
        mgr, pool = fresh(capacity=4, probe_limit=40)
        mgr.run(lambda tx: pool.produce(tx, "only"))
        delivered = []
        barrier = threading.Barrier(8)

        def consumer():
            barrier.wait()
            tx = mgr.begin()
            try:
                value = pool.consume(tx)
            except TransactionAborted:
                return
            if tx.commit():
                delivered.append(value)

        threads = [threading.Thread(target=consumer) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(30)
        assert delivered == ["only"]


class TestStateMachine:
    def test_no_illegal_transition_observed(self):
        legal = {
            (FREE, LOCKED), (LOCKED, READY), (LOCKED, FREE), (READY, LOCKED),
        }
        mgr, pool = fresh(capacity=4, probe_limit=500)
        transitions = []
        pool.transition_observer = lambda i, old, new: transitions.append((old, new))

        def worker(ident):
            for i in range(60):
                def body(tx):
                    pool.produce(tx, (ident, i))
                    if i % 3 != 0:
                        pool.consume(tx)
                try:
                    mgr.run(body, max_attempts=200)
                except TransactionAborted:
                    pass
                if i % 7 == 0:
                    try:
                        mgr.run(lambda tx: pool.consume(tx), max_attempts=5)
                    except TransactionAborted:
                        pass

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(60)
        assert transitions
        assert set(transitions) <= legal
