"""LZ78 prefix tree with per-node symbol counts and its Dirichlet-smoothed SPA.

Every observed symbol increments the count at the current node before the
traversal moves: into the existing child, or, when the child is new, back to
the root. Because of that rule the set of symbols counted at a node is exactly
the set of its children, so a node's count for ``a`` is stored once, on the
child reached through ``a`` (``edge_count``).
"""
from __future__ import annotations

import math
import struct
import time
from array import array
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MODEL_MAGIC = b"LZSP"
MODEL_VERSION = 1
ROOT_PARENT = 0xFFFFFFFFFFFFFFFF
ROOT_SYMBOL = 0xFF

_HEADER = struct.Struct("<4sBHQ")
_NODE = struct.Struct("<QBH")
_ENTRY = struct.Struct("<BQ")


class SpaError(Exception):
    """Base class for model errors."""


class InvalidAlphabetError(SpaError):
    pass


class InvalidSymbolError(SpaError):
    pass


class UnknownNodeError(SpaError):
    pass


class FrozenTreeError(SpaError):
    pass


class ModelFormatError(SpaError):
    """Raised when a model byte stream cannot be decoded."""


class BadMagicError(ModelFormatError):
    pass


class UnsupportedVersionError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


class CorruptModelError(ModelFormatError):
    pass


@dataclass(frozen=True)
class SpaParams:
    gamma: float = 5e-5

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be a positive finite number, got {self.gamma}")


@dataclass
class TrainStats:
    node_count: int = 1
    total_symbols: int = 0
    num_sequences: int = 0
    phrases: int = 0
    wall_time_s: float = 0.0
    max_depth: int = 0
    depth_histogram: list[int] = field(default_factory=list)
    serialized_bytes: int = 0

    def to_dict(self) -> dict:
        return {
            "node_count": self.node_count,
            "total_symbols": self.total_symbols,
            "num_sequences": self.num_sequences,
            "phrases": self.phrases,
            "wall_time_s": self.wall_time_s,
            "max_depth": self.max_depth,
            "depth_histogram": list(self.depth_histogram),
            "serialized_bytes": self.serialized_bytes,
        }


class LzTree:
    """LZ78 prefix tree over the alphabet ``{0, ..., alphabet_size - 1}``.

    Node 0 is the root. Nodes are numbered in creation order, which makes
    training deterministic and the serialized form reproducible.
    """

    def __init__(self, alphabet_size: int):
        if not isinstance(alphabet_size, (int, np.integer)) or alphabet_size < 2:
            raise InvalidAlphabetError(f"alphabet size must be >= 2, got {alphabet_size!r}")
        if alphabet_size > 256:
            raise InvalidAlphabetError("symbols are stored as single bytes; alphabet size must be <= 256")
        self.alphabet_size = int(alphabet_size)
        self.num_sequences_trained = 0
        self.train_time_s = 0.0
        self.frozen = False
        self._parent = array("q", [-1])
        self._symbol = array("h", [-1])
        self._edge_count = array("q", [0])
        self._total = array("q", [0])
        self._depth = array("q", [0])
        self._child: dict[int, int] = {}
        self._index = None

    # -- size / structure -------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self._parent)

    @property
    def total_symbols_trained(self) -> int:
        return sum(self._total)

    def child(self, node: int, symbol: int) -> int | None:
        return self._child.get(node * self.alphabet_size + symbol)

    def depth(self, node: int) -> int:
        return self._depth[node]

    def max_depth(self) -> int:
        return max(self._depth)

    def node_total(self, node: int) -> int:
        self._check_node(node)
        return self._total[node]

    def counts(self, node: int) -> dict[int, int]:
        """Sparse symbol -> count map observed at ``node``."""
        syms, cnts = self.children_arrays(node)
        return dict(zip(syms.tolist(), cnts.tolist()))

    def children_arrays(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        """Symbols observed at ``node`` (ascending) and their counts."""
        self._check_node(node)
        off, syms, kids, ecount = self._ensure_index()
        lo, hi = off[node], off[node + 1]
        return syms[lo:hi], ecount[kids[lo:hi]]

    def is_leaf(self, node: int) -> bool:
        return self._total[node] == 0

    def path(self, node: int) -> list[int]:
        """Symbols on the path from the root to ``node``."""
        self._check_node(node)
        out = []
        while node != 0:
            out.append(self._symbol[node])
            node = self._parent[node]
        return out[::-1]

    def walk(self, symbols: Iterable[int]) -> int:
        """Node reached by replaying ``symbols`` with the training traversal rule,
        without touching any counts."""
        A = self.alphabet_size
        child = self._child
        z = 0
        for s in symbols:
            c = child.get(z * A + s)
            z = 0 if c is None else c
        return z

    def _check_node(self, node: int) -> None:
        if not (0 <= node < len(self._parent)):
            raise UnknownNodeError(f"no node with id {node}")

    # -- training ---------------------------------------------------------

    def train_on_sequence(self, seq: Sequence[int]) -> TrainStats:
        """Parse one sequence into the tree, starting from the root.

        Returns the stats delta for this sequence. An out-of-alphabet symbol
        raises before anything is modified.
        """
        if self.frozen:
            raise FrozenTreeError("tree is frozen; no further training allowed")
        toks = _as_token_list(seq, self.alphabet_size)
        t0 = time.perf_counter()
        nodes_before = len(self._parent)
        A = self.alphabet_size
        child = self._child
        parent, symbol, ecount, total, depth = (
            self._parent, self._symbol, self._edge_count, self._total, self._depth)
        z = 0
        for s in toks:
            key = z * A + s
            c = child.get(key)
            total[z] += 1
            if c is None:
                child[key] = len(parent)
                parent.append(z)
                symbol.append(s)
                ecount.append(1)
                total.append(0)
                depth.append(depth[z] + 1)
                z = 0
            else:
                ecount[c] += 1
                z = c
        created = len(self._parent) - nodes_before
        dt = time.perf_counter() - t0
        self.train_time_s += dt
        if toks:
            self.num_sequences_trained += 1
            self._index = None
        return TrainStats(
            node_count=created,
            total_symbols=len(toks),
            num_sequences=1 if toks else 0,
            phrases=created + (1 if z != 0 else 0),
            wall_time_s=dt,
        )

    def train(self, sequences: Iterable[Sequence[int]]) -> TrainStats:
        for seq in sequences:
            self.train_on_sequence(seq)
        return tree_stats(self)

    def freeze(self) -> "LzTree":
        self._ensure_index()
        self.frozen = True
        return self

    def _ensure_index(self):
        """CSR view of the children: offsets, child symbols, child ids, edge counts."""
        if self._index is None:
            n = len(self._parent)
            parent = np.frombuffer(self._parent, dtype=np.int64)[1:]
            symbol = np.frombuffer(self._symbol, dtype=np.int16)[1:]
            order = np.lexsort((symbol, parent))
            kids = (order + 1).astype(np.int64)
            counts = np.bincount(parent, minlength=n) if n > 1 else np.zeros(n, np.int64)
            off = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(counts, out=off[1:])
            syms = symbol[order].astype(np.int64)
            ecount = np.frombuffer(self._edge_count, dtype=np.int64).copy()
            self._index = (off, syms, kids, ecount)
        return self._index

    # -- equality -----------------------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, LzTree):
            return NotImplemented
        return (
            self.alphabet_size == other.alphabet_size
            and self._parent == other._parent
            and self._symbol == other._symbol
            and self._edge_count == other._edge_count
            and self._total == other._total
        )

    __hash__ = None

    def __repr__(self):
        return f"LzTree(alphabet_size={self.alphabet_size}, nodes={self.node_count})"


def _as_token_list(seq, alphabet_size: int) -> list[int]:
    arr = np.asarray(seq)
    if arr.size == 0:
        return []
    if arr.ndim != 1 or not np.issubdtype(arr.dtype, np.integer):
        raise InvalidSymbolError("sequence must be a 1-D array of integer symbols")
    lo, hi = int(arr.min()), int(arr.max())
    if lo < 0 or hi >= alphabet_size:
        bad = lo if lo < 0 else hi
        raise InvalidSymbolError(f"symbol {bad} outside alphabet of size {alphabet_size}")
    return arr.tolist()


def new_tree(alphabet_size: int) -> LzTree:
    return LzTree(alphabet_size)


def spa_distribution(tree: LzTree, node: int, params: SpaParams) -> np.ndarray:
    """q(a) = (N(a) + gamma) / (sum_a' N(a') + gamma * A) at ``node``."""
    syms, cnts = tree.children_arrays(node)
    A = tree.alphabet_size
    q = np.full(A, params.gamma, dtype=np.float64)
    q[syms] += cnts
    q /= tree._total[node] + params.gamma * A
    return q


def log_loss(tree: LzTree, seq: Sequence[int], params: SpaParams) -> float:
    """Per-symbol negative log-likelihood in nats, traversing a frozen view of
    the tree (same move / return-to-root rule as training, counts untouched)."""
    toks = _as_token_list(seq, tree.alphabet_size)
    if not toks:
        raise ValueError("log loss of an empty sequence is undefined")
    A = tree.alphabet_size
    g = params.gamma
    child, total, ecount = tree._child, tree._total, tree._edge_count
    z = 0
    nll = 0.0
    for s in toks:
        c = child.get(z * A + s)
        n_a = 0 if c is None else ecount[c]
        nll -= math.log((n_a + g) / (total[z] + g * A))
        z = 0 if c is None else c
    return nll / len(toks)


def corpus_log_loss(tree: LzTree, sequences: Iterable[Sequence[int]], params: SpaParams) -> float:
    """Symbol-weighted mean log loss over several sequences (root reset per sequence)."""
    nll, n = 0.0, 0
    for seq in sequences:
        k = len(seq)
        if k:
            nll += log_loss(tree, seq, params) * k
            n += k
    if n == 0:
        raise ValueError("no symbols to score")
    return nll / n


def tree_stats(tree: LzTree) -> TrainStats:
    depth = np.frombuffer(tree._depth, dtype=np.int64)
    hist = np.bincount(depth).tolist()
    return TrainStats(
        node_count=tree.node_count,
        total_symbols=int(np.frombuffer(tree._total, dtype=np.int64).sum()),
        num_sequences=tree.num_sequences_trained,
        phrases=tree.node_count - 1,
        wall_time_s=tree.train_time_s,
        max_depth=len(hist) - 1,
        depth_histogram=hist,
        serialized_bytes=serialized_size(tree),
    )


# -- model file -------------------------------------------------------------

def serialized_size(tree: LzTree) -> int:
    n = tree.node_count
    return _HEADER.size + n * _NODE.size + (n - 1) * _ENTRY.size


_NODE_DT = np.dtype([("parent", "<u8"), ("symbol", "u1"), ("entries", "<u2")])
_ENTRY_DT = np.dtype([("symbol", "u1"), ("count", "<u8")])


def serialize_model(tree: LzTree) -> bytes:
    off, syms, kids, ecount = tree._ensure_index()
    n = tree.node_count
    n_entries = np.diff(off)
    if n_entries.size and n_entries.max() > 0xFFFF:
        raise SpaError("node has more entries than the format allows")

    nodes = np.empty(n, dtype=_NODE_DT)
    parent = np.frombuffer(tree._parent, dtype=np.int64)
    nodes["parent"] = parent.astype(np.uint64)
    nodes["parent"][0] = ROOT_PARENT
    nodes["symbol"] = np.frombuffer(tree._symbol, dtype=np.int16).astype(np.uint8)
    nodes["symbol"][0] = ROOT_SYMBOL
    nodes["entries"] = n_entries
    entries = np.empty(len(kids), dtype=_ENTRY_DT)
    entries["symbol"] = syms
    entries["count"] = ecount[kids]

    node_bytes = nodes.view(np.uint8).reshape(n, _NODE.size)
    entry_bytes = entries.view(np.uint8).reshape(-1, _ENTRY.size)

    # byte offset of each node record in the body
    starts = np.arange(n, dtype=np.int64) * _NODE.size + off[:-1] * _ENTRY.size
    body = np.empty(n * _NODE.size + len(kids) * _ENTRY.size, dtype=np.uint8)
    body[(starts[:, None] + np.arange(_NODE.size)).ravel()] = node_bytes.ravel()
    if len(kids):
        owner = np.repeat(np.arange(n), n_entries)
        rank = np.arange(len(kids)) - off[owner]
        e_starts = starts[owner] + _NODE.size + rank * _ENTRY.size
        body[(e_starts[:, None] + np.arange(_ENTRY.size)).ravel()] = entry_bytes.ravel()
    header = _HEADER.pack(MODEL_MAGIC, MODEL_VERSION, tree.alphabet_size, n)
    return header + body.tobytes()


def deserialize_model(data: bytes) -> LzTree:
    """Decode a model file; the returned tree is frozen."""
    data = bytes(data)
    if len(data) < 4 or data[:4] != MODEL_MAGIC:
        raise BadMagicError("not a model file (bad magic)")
    if len(data) < _HEADER.size:
        raise TruncatedModelError("model header truncated")
    _, version, A, n = _HEADER.unpack_from(data, 0)
    if version != MODEL_VERSION:
        raise UnsupportedVersionError(f"unsupported model version {version}")
    if n < 1:
        raise CorruptModelError("model must contain the root node")
    if A < 2 or A > 256:
        raise CorruptModelError(f"bad alphabet size {A}")
    tree = LzTree(A)
    min_len = _HEADER.size + n * _NODE.size
    if len(data) < min_len:
        raise TruncatedModelError("model body truncated")

    parent = np.empty(n, dtype=np.int64)
    symbol = np.empty(n, dtype=np.int16)
    entry_owner, entry_sym, entry_cnt = [], [], []
    pos = _HEADER.size
    unpack_node, unpack_entry = _NODE.unpack_from, _ENTRY.unpack_from
    size = len(data)
    for i in range(n):
        if pos + _NODE.size > size:
            raise TruncatedModelError(f"model truncated at node {i}")
        p, s, k = unpack_node(data, pos)
        pos += _NODE.size
        parent[i] = -1 if p == ROOT_PARENT else p
        symbol[i] = -1 if i == 0 else s
        end = pos + k * _ENTRY.size
        if end > size:
            raise TruncatedModelError(f"model truncated in entries of node {i}")
        if k:
            ents = np.frombuffer(data, dtype=_ENTRY_DT, count=k, offset=pos)
            entry_owner.append(np.full(k, i, dtype=np.int64))
            entry_sym.append(ents["symbol"].astype(np.int64))
            entry_cnt.append(ents["count"].astype(np.int64))
        pos = end
    if pos != size:
        raise CorruptModelError("trailing bytes after last node")

    if n > 1:
        p = parent[1:]
        if p.min() < 0 or (p >= np.arange(1, n)).any():
            raise CorruptModelError("parent ids must precede their children")
        if symbol[1:].max() >= A:
            raise CorruptModelError("incoming symbol outside alphabet")
    owner = np.concatenate(entry_owner) if entry_owner else np.zeros(0, np.int64)
    esym = np.concatenate(entry_sym) if entry_sym else np.zeros(0, np.int64)
    ecnt = np.concatenate(entry_cnt) if entry_cnt else np.zeros(0, np.int64)

    # entries must mirror the children one-to-one, sorted by symbol
    order = np.lexsort((symbol[1:], parent[1:]))
    if len(owner) != n - 1 or not (
        np.array_equal(owner, parent[1:][order]) and np.array_equal(esym, symbol[1:][order])
    ):
        raise CorruptModelError("count entries do not match the children of each node")
    if len(ecnt) and ecnt.min() < 1:
        raise CorruptModelError("counts must be positive")

    edge = np.zeros(n, dtype=np.int64)
    edge[order + 1] = ecnt
    total = np.bincount(owner, weights=None if not len(ecnt) else ecnt, minlength=n).astype(np.int64)
    depth = np.zeros(n, dtype=np.int64)
    if n > 1:
        # parents precede children, so this settles after max-depth rounds
        while True:
            nxt = depth.copy()
            nxt[1:] = depth[parent[1:]] + 1
            if np.array_equal(nxt, depth):
                break
            depth = nxt

    tree._parent = array("q", parent.tobytes())
    tree._symbol = array("h", symbol.tobytes())
    tree._edge_count = array("q", edge.tobytes())
    tree._total = array("q", total.tobytes())
    tree._depth = array("q", depth.tobytes())
    keys = (parent[1:] * A + symbol[1:]).tolist()
    tree._child = dict(zip(keys, range(1, n)))
    if len(tree._child) != n - 1:
        raise CorruptModelError("duplicate child edges")
    return tree.freeze()
