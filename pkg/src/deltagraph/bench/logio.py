"""Edge-list and update-log reading, writing, ordering and generation."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SYNTHETIC_MARKER = "# deltagraph synthetic update log"

OP_INSERT = 0
OP_DELETE = 1

MODES = ("shuffled", "ordered")


class LogParseError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


@dataclass
class UpdateLog:
    """Records as parallel arrays; vertex ids are dense, starting at 1.

    ``weight`` is NaN where the input gave none. ``original_ids[i]`` is the
    input id mapped to dense id ``i + 1``.
    """

    op: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    original_ids: list[int] = field(default_factory=list)
    synthetic: bool = False

    def __len__(self) -> int:
        return len(self.op)

    @property
    def vertex_count(self) -> int:
        return len(self.original_ids)

    def take(self, order) -> "UpdateLog":
        order = np.asarray(order, dtype=np.int64)
        return UpdateLog(
            self.op[order], self.src[order], self.dst[order], self.weight[order],
            self.original_ids, self.synthetic,
        )

    def slice(self, lo: int, hi: int) -> "UpdateLog":
        return self.take(np.arange(lo, hi))

    def edge_keys(self) -> np.ndarray:
        """Canonical undirected edge id of every record."""
        a = np.minimum(self.src, self.dst)
        b = np.maximum(self.src, self.dst)
        return a * (self.vertex_count + 1) + b

    def mapping_digest(self) -> str:
        h = hashlib.sha256()
        for i, orig in enumerate(self.original_ids, 1):
            h.update(f"{orig}->{i}\n".encode())
        return h.hexdigest()


def parse_log(path) -> UpdateLog:
    """Parse ``[i|d] src dst [weight]`` lines; ``#`` starts a comment line."""
    path = Path(path)
    ops, srcs, dsts, ws = [], [], [], []
    remap: dict[int, int] = {}
    synthetic = False
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                synthetic = synthetic or s.startswith(SYNTHETIC_MARKER)
                continue
            parts = s.split()
            op = OP_INSERT
            if parts[0] in ("i", "d"):
                op = OP_DELETE if parts[0] == "d" else OP_INSERT
                parts = parts[1:]
            if len(parts) not in (2, 3):
                raise LogParseError(path, lineno, f"expected 'src dst [weight]', got {s!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else math.nan
            except ValueError as exc:
                raise LogParseError(path, lineno, str(exc)) from None
            if u < 0 or v < 0:
                raise LogParseError(path, lineno, "vertex ids must be non-negative")
            ops.append(op)
            srcs.append(remap.setdefault(u, len(remap) + 1))
            dsts.append(remap.setdefault(v, len(remap) + 1))
            ws.append(w)
    return UpdateLog(
        np.asarray(ops, dtype=np.int8),
        np.asarray(srcs, dtype=np.int64),
        np.asarray(dsts, dtype=np.int64),
        np.asarray(ws, dtype=np.float64),
        list(remap),
        synthetic,
    )


def order_log(log: UpdateLog, mode: str, seed: int = 0) -> UpdateLog:
    """Arrange records for ``mode``.

    ``ordered`` keeps file order for real data and groups synthetic logs by
    source. ``shuffled`` is a seeded permutation that keeps the records of any
    one edge in their original relative order, so deletes still follow the
    inserts they target.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    n = len(log)
    if mode == "ordered":
        if log.synthetic:
            return log.take(np.argsort(log.src, kind="stable"))
        return log
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    keys = log.edge_keys()
    pos = np.arange(n)
    slots = np.lexsort((pos, keys[perm]))
    originals = np.lexsort((pos, keys))
    order = np.empty(n, dtype=np.int64)
    order[slots] = originals
    return log.take(order)


def load_edge_list(path, mode: str = "shuffled", seed: int = 0) -> UpdateLog:
    return order_log(parse_log(path), mode, seed)


def generate_log(vertices: int, records: int, zipf: float = 1.2, delete_ratio: float = 0.1, seed: int = 0):
    """Synthesize a hub-skewed update log.

    One endpoint follows a power law over vertex ranks (the hub is written as
    the source), the other is uniform. Deletes pick a uniformly random live
    edge and reuse its orientation. Returns ``(op, src, dst, weight)`` arrays
    over raw ids ``0..vertices-1``.
    """
    if vertices < 2:
        raise ValueError("need at least two vertices")
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, vertices + 1, dtype=np.float64)
    p = ranks ** -zipf
    p /= p.sum()
    names = rng.permutation(vertices)
    hubs = names[rng.choice(vertices, size=records, p=p)]
    others = rng.integers(0, vertices, size=records)
    weights = np.round(rng.random(records) * 10.0, 3)
    coin = rng.random(records)
    picks = rng.random(records)
    op = np.zeros(records, dtype=np.int8)
    src = np.empty(records, dtype=np.int64)
    dst = np.empty(records, dtype=np.int64)
    orient: dict[tuple[int, int], tuple[int, int]] = {}
    live: list[tuple[int, int]] = []
    where: dict[tuple[int, int], int] = {}
    for i in range(records):
        if live and coin[i] < delete_ratio:
            j = int(picks[i] * len(live))
            key = live[j]
            last = live.pop()
            if j < len(live):
                live[j] = last
                where[last] = j
            del where[key]
            op[i] = OP_DELETE
            src[i], dst[i] = orient[key]
            continue
        u, v = int(hubs[i]), int(others[i])
        key = (u, v) if u <= v else (v, u)
        u, v = orient.setdefault(key, (u, v))
        if key not in where:
            where[key] = len(live)
            live.append(key)
        src[i], dst[i] = u, v
    return op, src, dst, weights


def write_log(path, op, src, dst, weight) -> None:
    with Path(path).open("w") as fh:
        fh.write(SYNTHETIC_MARKER + "\n")
        tag = np.where(np.asarray(op) == OP_DELETE, "d", "i")
        for t, u, v, w in zip(tag, src, dst, weight):
            if t == "d":
                fh.write(f"d {u} {v}\n")
            else:
                fh.write(f"i {u} {v} {w:g}\n")
