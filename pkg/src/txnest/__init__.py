"""Transactional data structures with closed-nested transactions.

Transactions over a shared map, queue, stack, log, and producer-consumer
pool, validated against a global version clock. A child transaction forms
a checkpoint inside its parent: child aborts retry only the child block
while the parent's work survives, without weakening atomicity or isolation.

Typical use::

    from txnest import TransactionManager, TransactionalMap

    mgr = TransactionManager()
    prices = TransactionalMap(mgr)

    def transfer(tx):
        v = prices.get(tx, "a")
        tx.run_child(lambda t: prices.n_put(t, "b", v))

    mgr.run(transfer)
"""

from .core import (
    EMPTY,
    ChildRestarted,
    GlobalVersionClock,
    Level,
    Status,
    Transaction,
    TransactionAborted,
    TransactionError,
    TransactionManager,
    TransactionUsageError,
    TransactionalStructure,
    VersionedLock,
)
from .checker import (
    CommittedHistory,
    HistoryEvent,
    HistoryRecorder,
    TxRecord,
    Verdict,
    check_serializable,
    check_structure_laws,
    dump_events,
)
from .logs import TransactionalLog
from .maps import TransactionalMap
from .pools import FREE, LOCKED, READY, ProducerConsumerPool, Slot
from .queues import TransactionalQueue
from .stacks import TransactionalStack

__version__ = "0.1.0"

__all__ = [
    "EMPTY",
    "ChildRestarted",
    "CommittedHistory",
    "FREE",
    "GlobalVersionClock",
    "HistoryEvent",
    "HistoryRecorder",
    "LOCKED",
    "Level",
    "ProducerConsumerPool",
    "READY",
    "Slot",
    "Status",
    "Transaction",
    "TransactionAborted",
    "TransactionError",
    "TransactionManager",
    "TransactionUsageError",
    "TransactionalLog",
    "TransactionalMap",
    "TransactionalQueue",
    "TransactionalStack",
    "TransactionalStructure",
    "TxRecord",
    "Verdict",
    "VersionedLock",
    "check_serializable",
    "check_structure_laws",
    "dump_events",
]
