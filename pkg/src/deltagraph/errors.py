"""Exceptions raised by the engine."""


class DeltaGraphError(Exception):
    pass


class TransactionConflict(DeltaGraphError):
    """Write-write conflict; the transaction has been aborted."""


class TransactionStateError(DeltaGraphError):
    """Operation on a transaction that is no longer active."""


class VertexNotFound(DeltaGraphError, KeyError):
    pass


class StorageExhausted(DeltaGraphError):
    """A block would need more than 32-bit addressable bytes."""


class StaleTransactionId(DeltaGraphError):
    """A delta carries a transaction id whose table slot was reused."""


class UseAfterFree(DeltaGraphError):
    """A reclaimed (poisoned) block was dereferenced."""


class NegativeWeight(DeltaGraphError, ValueError):
    pass
