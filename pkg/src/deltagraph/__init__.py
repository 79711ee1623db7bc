"""Main-memory transactional graph store with multi-version delta storage."""

from .analytics import build_snapshot, pagerank, sssp
from .engine import INSERTED, UPDATED, Engine, EngineConfig, ReadOnlyTransaction, Transaction
from .errors import (
    DeltaGraphError,
    NegativeWeight,
    StaleTransactionId,
    StorageExhausted,
    TransactionConflict,
    TransactionStateError,
    UseAfterFree,
    VertexNotFound,
)
from .kernels import compiled_available, get_backend
from .layout import decode_weight, encode_weight

__version__ = "0.1.0"

__all__ = [
    "INSERTED",
    "UPDATED",
    "DeltaGraphError",
    "Engine",
    "EngineConfig",
    "NegativeWeight",
    "ReadOnlyTransaction",
    "StaleTransactionId",
    "StorageExhausted",
    "Transaction",
    "TransactionConflict",
    "TransactionStateError",
    "UseAfterFree",
    "VertexNotFound",
    "build_snapshot",
    "compiled_available",
    "decode_weight",
    "encode_weight",
    "get_backend",
    "pagerank",
    "sssp",
]
