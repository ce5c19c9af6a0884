"""Seeded random search over (gamma, top-K, temperature) minimizing WD."""
from __future__ import annotations

import itertools
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import TokenCorpus
from .generate import GenParams, batch_generate
from .metrics import pitch_values, wasserstein_1d
from .spa import LzTree

DEFAULT_GAMMAS = (1e-5, 5e-5, 1e-4, 1e-3, 1e-2)
DEFAULT_TOP_KS = (4, 8, 16, 90)
DEFAULT_TEMPERATURES = (0.5, 0.8, 1.0, 1.5)


@dataclass(frozen=True)
class SearchSpace:
    gamma_choices: tuple[float, ...] = DEFAULT_GAMMAS
    top_k_choices: tuple[int, ...] = DEFAULT_TOP_KS
    temperature_choices: tuple[float, ...] = DEFAULT_TEMPERATURES

    def configurations(self) -> list[tuple[float, int, float]]:
        if not (self.gamma_choices and self.top_k_choices and self.temperature_choices):
            raise ValueError("every search dimension needs at least one choice")
        return list(itertools.product(self.gamma_choices, self.top_k_choices, self.temperature_choices))

    def __len__(self):
        return len(self.gamma_choices) * len(self.top_k_choices) * len(self.temperature_choices)


@dataclass
class TrialResult:
    trial: int
    gamma: float
    top_k: int
    temperature: float
    objective: float
    samples: int
    wall_time_s: float

    def to_json(self) -> str:
        d = asdict(self)
        if not np.isfinite(d["objective"]):
            d["objective"] = None
        return json.dumps(d)


def draw_configurations(space: SearchSpace, trials: int, master_seed: int) -> list[tuple[float, int, float]]:
    """Uniform draws without replacement; the grid is reshuffled once exhausted."""
    configs = space.configurations()
    rng = np.random.default_rng([int(master_seed) & 0xFFFFFFFFFFFFFFFF, 0x7E57])
    out = []
    while len(out) < trials:
        out.extend(configs[i] for i in rng.permutation(len(configs)))
    return out[:trials]


def score(generated, reference) -> float:
    gp, rp = pitch_values(generated), pitch_values(reference)
    if gp.size == 0 or rp.size == 0:
        return float("inf")
    return wasserstein_1d(gp, rp)


def run_search(tree: LzTree, space: SearchSpace, reference: TokenCorpus, trials: int,
               samples_per_trial: int, master_seed: int, min_context: int = 64,
               seq_len: int = 256) -> list[TrialResult]:
    """Evaluate ``trials`` configurations; results sorted by WD, ties by trial number."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    results = []
    for i, (gamma, k, temp) in enumerate(draw_configurations(space, trials, master_seed)):
        t0 = time.perf_counter()
        params = GenParams(gamma=gamma, top_k=min(k, tree.alphabet_size), temperature=temp,
                           min_context=min_context, seq_len=seq_len,
                           master_seed=(int(master_seed) * 1_000_003 + i) & 0xFFFFFFFFFFFFFFFF)
        gen = batch_generate(tree, params, samples_per_trial)
        results.append(TrialResult(i, gamma, params.top_k, temp, score(gen, reference.tokens),
                                   samples_per_trial, time.perf_counter() - t0))
    results.sort(key=lambda r: (r.objective, r.trial))
    return results


def summary(results: list[TrialResult]) -> dict:
    best = results[0]
    return {
        "best": {"gamma": best.gamma, "top_k": best.top_k, "temperature": best.temperature,
                 "objective": best.objective if np.isfinite(best.objective) else None,
                 "trial": best.trial},
        "trials": len(results),
    }
