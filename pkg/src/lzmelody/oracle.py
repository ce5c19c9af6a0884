"""Brute-force references and synthetic sources for checking the LZ78 SPA.

Nothing here shares code with the tree implementation in :mod:`lzmelody.spa`
beyond reading its public traversal API in :func:`exact_model_distribution`;
:func:`brute_force_spa` replays training over plain tuples.
"""
from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import TokenCorpus
from .spa import LzTree, SpaParams, spa_distribution


class EnumerationBudgetError(Exception):
    pass


@dataclass
class SyntheticSource:
    """An i.i.d. or first-order Markov source emitting length-``seq_len`` sequences.

    For ``kind="iid"`` ``table`` is a probability vector. For ``kind="markov"``
    it is a row-stochastic transition matrix and ``initial`` the distribution
    of the first symbol (the stationary distribution when omitted).
    """

    kind: str
    table: np.ndarray
    seq_len: int
    initial: np.ndarray | None = None

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.float64)
        if self.kind not in ("iid", "markov"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.seq_len < 1:
            raise ValueError("seq_len must be >= 1")
        if (self.table < 0).any():
            raise ValueError("probabilities must be nonnegative")
        if self.kind == "iid":
            if self.table.ndim != 1 or abs(self.table.sum() - 1.0) > 1e-12:
                raise ValueError("iid table must be a probability vector summing to 1")
        else:
            A = self.table.shape[0]
            if self.table.shape != (A, A):
                raise ValueError("markov table must be square")
            if np.abs(self.table.sum(axis=1) - 1.0).max() > 1e-12:
                raise ValueError("transition rows must sum to 1")
            if self.initial is None:
                self.initial = stationary_distribution(self.table)
            self.initial = np.asarray(self.initial, dtype=np.float64)
            if self.initial.shape != (A,) or abs(self.initial.sum() - 1.0) > 1e-12:
                raise ValueError("initial distribution must sum to 1")

    @property
    def alphabet_size(self) -> int:
        return self.table.shape[0]

    def sequence_probability(self, seq: Sequence[int]) -> float:
        if self.kind == "iid":
            return float(np.prod(self.table[list(seq)]))
        p = self.initial[seq[0]]
        for a, b in zip(seq, seq[1:]):
            p *= self.table[a, b]
        return float(p)

    def entropy_rate(self) -> float:
        """Per-symbol entropy (nats) of the stationary process."""
        if self.kind == "iid":
            return _entropy(self.table)
        pi = stationary_distribution(self.table)
        return float(sum(pi[i] * _entropy(row) for i, row in enumerate(self.table)))

    def block_entropy(self) -> float:
        """Entropy rate of one length-``seq_len`` block divided by its length."""
        if self.kind == "iid":
            return _entropy(self.table)
        h, dist = _entropy(self.initial), self.initial.copy()
        row_h = np.array([_entropy(r) for r in self.table])
        for _ in range(self.seq_len - 1):
            h += float(dist @ row_h)
            dist = dist @ self.table
        return h / self.seq_len


def _entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eig(P.T)
    i = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(v[:, i])
    pi = np.abs(pi) / np.abs(pi).sum()
    return pi


def sample_source(source: SyntheticSource, m: int, seed: int) -> TokenCorpus:
    """Draw ``m`` independent length-n sequences, reproducibly from ``seed``."""
    rng = np.random.default_rng(seed)
    n, A = source.seq_len, source.alphabet_size
    if source.kind == "iid":
        cdf = np.cumsum(source.table)
        cdf[-1] = 1.0
        toks = np.searchsorted(cdf, rng.random((m, n)), side="right")
    else:
        cdf = np.cumsum(source.table, axis=1)
        cdf[:, -1] = 1.0
        init_cdf = np.cumsum(source.initial)
        init_cdf[-1] = 1.0
        toks = np.empty((m, n), dtype=np.int64)
        u = rng.random((m, n))
        toks[:, 0] = np.searchsorted(init_cdf, u[:, 0], side="right")
        # row r of the shifted table spans [r, r + 1], so one sorted search
        # over the flattened table samples every row at once
        flat = (cdf + np.arange(A)[:, None]).ravel()
        for t in range(1, n):
            prev = toks[:, t - 1]
            toks[:, t] = np.searchsorted(flat, prev + u[:, t], side="right") - prev * A
    toks = np.minimum(toks, A - 1).astype(np.uint8)
    return TokenCorpus(alphabet_size=A, seq_len=n, tokens=toks)


def melody_source(seq_len: int = 256, alphabet_size: int = 90) -> SyntheticSource:
    """Fixed first-order Markov melody over the piano-roll alphabet.

    Pitches are the C-major scale from C4 to C5 (tokens 41..53 with the
    default pitch offset). Notes are followed mostly by continuations, melodic
    motion is stepwise-biased, and rests never precede a continuation.
    """
    scale = [41, 43, 45, 46, 48, 50, 52, 53]
    P = np.zeros((alphabet_size, alphabet_size))
    # rest: stay silent or start on a scale tone, tonic-weighted
    w = np.array([2.0 if tok in (41, 48, 53) else 1.0 for tok in scale])
    P[0, 0] = 0.55
    P[0, scale] = 0.45 * w / w.sum()
    # continuation
    P[1, 1] = 0.6
    P[1, 0] = 0.1
    for tok in scale:
        P[1, tok] = 0.3 / len(scale)
    # pitch onsets: sustain, rest, or step/leap to another scale tone
    for i, tok in enumerate(scale):
        P[tok, 1] = 0.65
        P[tok, 0] = 0.05
        w = np.array([1.0 / (1 + abs(i - j)) ** 2 if j != i else 0.15 for j in range(len(scale))])
        w = 0.30 * w / w.sum()
        for j, other in enumerate(scale):
            P[tok, other] += w[j]
    # unused symbols fall back to rest so the matrix stays row-stochastic
    for a in range(alphabet_size):
        if P[a].sum() == 0:
            P[a, 0] = 1.0
    P /= P.sum(axis=1, keepdims=True)
    init = np.zeros(alphabet_size)
    init[0] = 0.5
    init[scale] = 0.5 / len(scale)
    return SyntheticSource("markov", P, seq_len, initial=init)


# -- reference parsers ------------------------------------------------------

def reference_lz78_parse(seq: Sequence[int]) -> list[tuple[int, ...]]:
    """Classic LZ78 incremental parse; the last phrase may be incomplete."""
    phrases: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    cur: tuple[int, ...] = ()
    for s in seq:
        cur = cur + (int(s),)
        if cur not in seen:
            seen.add(cur)
            phrases.append(cur)
            cur = ()
    if cur:
        phrases.append(cur)
    return phrases


def _replay_counts(training: Iterable[Sequence[int]]):
    dictionary: set[tuple[int, ...]] = set()
    counts: dict[tuple[tuple[int, ...], int], int] = {}
    for seq in training:
        ctx: tuple[int, ...] = ()
        for s in seq:
            s = int(s)
            counts[(ctx, s)] = counts.get((ctx, s), 0) + 1
            nxt = ctx + (s,)
            if nxt in dictionary:
                ctx = nxt
            else:
                dictionary.add(nxt)
                ctx = ()
    return dictionary, counts


def _context_phrase(dictionary, context: Sequence[int]) -> tuple[int, ...]:
    ctx: tuple[int, ...] = ()
    for s in context:
        nxt = ctx + (int(s),)
        ctx = nxt if nxt in dictionary else ()
    return ctx


def brute_force_spa(training: Iterable[Sequence[int]], context: Sequence[int],
                    symbol: int, gamma: float, alphabet_size: int) -> float:
    """Probability of ``symbol`` after ``context`` by recounting from scratch.

    The LZ78 state after ``context`` is the phrase prefix it ends in; its
    counts are tallied by replaying the training set over tuple phrases.
    """
    dictionary, counts = _replay_counts(training)
    ctx = _context_phrase(dictionary, context)
    n_a = counts.get((ctx, symbol), 0)
    n_tot = sum(counts.get((ctx, b), 0) for b in range(alphabet_size))
    return (n_a + gamma) / (n_tot + gamma * alphabet_size)


# -- exact distributions ----------------------------------------------------

@dataclass
class ExactDistribution:
    """Probability of every length-n sequence, indexed in lexicographic order."""

    alphabet_size: int
    seq_len: int
    probs: np.ndarray

    def __getitem__(self, seq: Sequence[int]) -> float:
        idx = 0
        for s in seq:
            idx = idx * self.alphabet_size + int(s)
        return float(self.probs[idx])

    def total(self) -> float:
        return math.fsum(self.probs.tolist())


MAX_ENUMERATION = 1_000_000


def _check_budget(A: int, n: int) -> None:
    if A ** n > MAX_ENUMERATION:
        raise EnumerationBudgetError(f"{A}^{n} sequences exceed the enumeration budget of {MAX_ENUMERATION}")


def exact_model_distribution(tree: LzTree, gamma: float, n: int) -> ExactDistribution:
    """Q(y) = prod_t q(y_t | traversal state) for every y in A^n, depth-first."""
    A = tree.alphabet_size
    _check_budget(A, n)
    params = SpaParams(gamma)
    probs = np.empty(A ** n, dtype=np.float64)
    dist_cache: dict[int, np.ndarray] = {}

    def dist(node):
        d = dist_cache.get(node)
        if d is None:
            d = dist_cache[node] = spa_distribution(tree, node, params)
        return d

    def rec(node, depth, prefix_p, idx):
        q = dist(node)
        if depth == n - 1:
            probs[idx * A: idx * A + A] = prefix_p * q
            return
        for a in range(A):
            c = tree.child(node, a)
            rec(0 if c is None else c, depth + 1, prefix_p * q[a], idx * A + a)

    if n == 0:
        probs = np.ones(1)
    else:
        rec(0, 0, 1.0, 0)
    return ExactDistribution(A, n, probs)


def exact_source_distribution(source: SyntheticSource) -> ExactDistribution:
    A, n = source.alphabet_size, source.seq_len
    _check_budget(A, n)
    probs = np.array([source.sequence_probability(y)
                      for y in itertools.product(range(A), repeat=n)])
    return ExactDistribution(A, n, probs)


def exact_kl(p: ExactDistribution, q: ExactDistribution) -> float:
    """D(p || q) in nats over a shared enumeration universe."""
    if (p.alphabet_size, p.seq_len) != (q.alphabet_size, q.seq_len):
        raise ValueError("distributions are over different universes")
    mask = p.probs > 0
    if (q.probs[mask] <= 0).any():
        return math.inf
    pp, qq = p.probs[mask], q.probs[mask]
    return max(0.0, math.fsum((pp * np.log(pp / qq)).tolist()))


def convergence_experiment(source: SyntheticSource, m_list: Sequence[int], gamma: float,
                           seed: int = 0) -> list[dict]:
    """Exact D(P || Q^m) for growing m, training one tree on nested prefixes
    of a single sample of ``max(m_list)`` sequences."""
    m_sorted = sorted(int(m) for m in m_list)
    if not m_sorted or m_sorted[0] < 0:
        raise ValueError("m values must be nonnegative")
    corpus = sample_source(source, m_sorted[-1], seed)
    truth = exact_source_distribution(source)
    tree = LzTree(source.alphabet_size)
    rows, trained = [], 0
    for m in m_sorted:
        t0 = time.perf_counter()
        for row in corpus.tokens[trained:m]:
            tree.train_on_sequence(row)
        trained = m
        kl = exact_kl(truth, exact_model_distribution(tree, gamma, source.seq_len))
        rows.append({"m": m, "kl_nats": kl, "wall_time_s": time.perf_counter() - t0})
    return rows


def write_convergence_csv(rows: list[dict], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["m", "kl_nats", "wall_time_s"])
    for r in rows:
        w.writerow([r["m"], repr(float(r["kl_nats"])), f"{r['wall_time_s']:.6f}"])


def parse_source_spec(spec: str) -> SyntheticSource:
    """Parse ``iid:0.7,0.3;n=4`` or ``markov:0.9,0.1/0.2,0.8;n=4[;init=0.5,0.5]``.

    ``melody`` (optionally ``melody;n=256``) selects :func:`melody_source`.
    """
    head, *opts = [part.strip() for part in spec.split(";")]
    kv = {}
    for o in opts:
        if "=" not in o:
            raise ValueError(f"bad source option {o!r}")
        k, v = o.split("=", 1)
        kv[k.strip()] = v.strip()
    n = int(kv.get("n", 0))
    kind, _, body = head.partition(":")
    if kind == "melody":
        return melody_source(seq_len=n or 256)
    if not n:
        raise ValueError("source string needs a sequence length, e.g. ';n=4'")
    if kind == "iid":
        return SyntheticSource("iid", [float(x) for x in body.split(",")], n)
    if kind == "markov":
        rows = [[float(x) for x in r.split(",")] for r in body.split("/")]
        init = [float(x) for x in kv["init"].split(",")] if "init" in kv else None
        return SyntheticSource("markov", rows, n, initial=init)
    raise ValueError(f"unknown source kind {kind!r}")
