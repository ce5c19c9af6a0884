"""Sampling token sequences from a trained LZ78 tree."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .spa import LzTree
from .tokens import CONTINUATION, REST

MAX_RESEED_DEPTH = 256


class CannotSeedError(Exception):
    pass


@dataclass(frozen=True)
class GenParams:
    gamma: float = 5e-5
    top_k: int = 8
    temperature: float = 0.8
    min_context: int = 64
    seq_len: int = 256
    master_seed: int = 0

    def validate(self, alphabet_size: int) -> None:
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be positive")
        if not 1 <= self.top_k <= alphabet_size:
            raise ValueError(f"top_k must be in [1, {alphabet_size}]")
        if not self.temperature >= 0:
            raise ValueError("temperature must be >= 0")
        if self.seq_len < 1:
            raise ValueError("seq_len must be >= 1")
        if not 0 <= self.min_context < self.seq_len:
            raise ValueError("min_context must satisfy 0 <= min_context < seq_len")


def apply_top_k_temperature(dist, k: int, temperature: float) -> np.ndarray:
    """Keep the ``k`` most probable symbols, then sharpen/flatten by ``1/T``.

    Ties at the cutoff go to the smaller symbol id. ``T == 0`` is argmax and
    ``T == inf`` is uniform over the kept symbols with nonzero mass.
    """
    p = np.asarray(dist, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if p.ndim != 1 or (p < 0).any() or not np.isfinite(p).all():
        raise ValueError("distribution must be a finite nonnegative vector")
    if not p.sum() > 0:
        raise ValueError("distribution has no mass")
    order = np.argsort(-p, kind="stable")
    out = np.zeros_like(p)
    if temperature == 0:
        out[order[0]] = 1.0
        return out
    keep = order[:k]
    keep = keep[p[keep] > 0]
    if math.isinf(temperature):
        out[keep] = 1.0
    else:
        logp = np.log(p[keep])
        with np.errstate(over="ignore"):  # tiny T: scaled log-ratios go to -inf, weights to 0
            w = np.exp((logp - logp.max()) / temperature)
        out[keep] = w
    return out / out.sum()


def postprocess(seq) -> np.ndarray:
    """Rewrite every continuation that follows a rest into a rest.

    Rewrites cascade: in ``[0, 1, 1]`` both continuations become rests.
    """
    out = np.array(seq, copy=True)
    for t in range(1, len(out)):
        if out[t] == CONTINUATION and out[t - 1] == REST:
            out[t] = REST
    return out


def sample_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])


class _Sampler:
    """Per-tree state shared by every sample: children lookup, depth bound and
    a cache of filtered next-symbol distributions."""

    def __init__(self, tree: LzTree, params: GenParams):
        params.validate(tree.alphabet_size)
        self.tree = tree
        self.params = params
        self.A = tree.alphabet_size
        self.off, self.syms, self.kids, self.ecount = tree._ensure_index()
        self.root_children = self.syms[self.off[0]:self.off[1]].tolist()
        if not self.root_children:
            raise CannotSeedError("tree has no root children to seed from")
        self.max_depth = min(tree.max_depth(), MAX_RESEED_DEPTH)
        self._cache: dict[int, tuple[list[int], list[float]]] = {}

    def has_children(self, node: int) -> bool:
        return self.off[node + 1] > self.off[node]

    def filtered(self, node: int) -> tuple[list[int], list[float]]:
        """Kept symbols and cumulative weights of the top-K / temperature
        filtered SPA at ``node``; same result as
        ``apply_top_k_temperature(spa_distribution(...))`` without the dense pass."""
        hit = self._cache.get(node)
        if hit is not None:
            return hit
        p, A = self.params, self.A
        lo, hi = self.off[node], self.off[node + 1]
        syms = self.syms[lo:hi].tolist()
        cnts = self.ecount[self.kids[lo:hi]].tolist()
        # probability order: larger count first, then smaller symbol;
        # unseen symbols (mass gamma only) follow in ascending id
        ranked = sorted(zip(cnts, syms), key=lambda cs: (-cs[0], cs[1]))
        kept = [(c + p.gamma, s) for c, s in ranked[:p.top_k]]
        if len(kept) < p.top_k:
            seen = set(syms)
            for s in range(A):
                if len(kept) == p.top_k:
                    break
                if s not in seen:
                    kept.append((p.gamma, s))
        if p.temperature == 0:
            kept = kept[:1]
            weights = [1.0]
        elif math.isinf(p.temperature):
            weights = [1.0] * len(kept)
        else:
            top = math.log(kept[0][0])
            weights = [math.exp((math.log(m) - top) / p.temperature) for m, _ in kept]
        cum, acc = [], 0.0
        for w in weights:
            acc += w
            cum.append(acc)
        out = ([s for _, s in kept], cum)
        self._cache[node] = out
        return out

    def sample(self, index: int) -> np.ndarray:
        p = self.params
        rng = sample_rng(p.master_seed, index)
        child, A = self.tree._child, self.A
        has_children, max_depth = self.has_children, self.max_depth
        seed = self.root_children[int(rng.integers(len(self.root_children)))]
        uniforms = rng.random(p.seq_len).tolist()
        out = [seed]
        # every suffix of ``out`` that is a root path, longest first: (start, node)
        matches = [(0, child[seed])]
        node = matches[0][1] if has_children(matches[0][1]) else 0
        for t in range(1, p.seq_len):
            syms, cum = self.filtered(node)
            x = uniforms[t] * cum[-1]
            j = 0
            while j < len(cum) - 1 and cum[j] <= x:
                j += 1
            a = syms[j]
            out.append(a)
            nxt = child.get(node * A + a)
            advanced = []
            for start, z in matches:
                c = child.get(z * A + a)
                if c is not None and t + 1 - start <= max_depth:
                    advanced.append((start, c))
            c = child.get(a)
            if c is not None:
                advanced.append((t, c))
            matches = advanced
            if nxt is not None and has_children(nxt):
                node = nxt
            else:
                # return-to-root: resume from the longest matching suffix with
                # observed successors; longest-first order means any suffix of
                # length >= min(min_context, t + 1) that qualifies is preferred
                node = next((z for _, z in matches if has_children(z)), 0)
        return np.array(out, dtype=np.uint8)


def sample_sequence(tree: LzTree, params: GenParams, index: int) -> np.ndarray:
    """One raw sample (before post-processing), determined by (tree, params, index)."""
    return _Sampler(tree, params).sample(index)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("LZMIDI_THREADS", "1")))
    except ValueError:
        return 1


def batch_generate(tree: LzTree, params: GenParams, n: int, start_index: int = 0,
                   threads: int | None = None) -> list[np.ndarray]:
    """``n`` post-processed samples for indices ``start_index .. start_index + n - 1``."""
    if n <= 0:
        return []
    sampler = _Sampler(tree, params)
    indices = range(start_index, start_index + n)
    workers = thread_count() if threads is None else max(1, threads)

    def one(i):
        return postprocess(sampler.sample(i))

    if workers == 1:
        return [one(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, indices))
