import json

import pytest

from lzmelody.generate import GenParams, batch_generate
from lzmelody.metrics import pitch_values, wasserstein_1d
from lzmelody.tuner import SearchSpace, draw_configurations, run_search, summary

SMALL = SearchSpace(gamma_choices=(1e-4, 1e-2), top_k_choices=(4, 90), temperature_choices=(0.8,))


def test_default_grid_contains_reference_configuration():
    space = SearchSpace()
    assert (5e-5, 8, 0.8) in space.configurations()
    assert len(space) == 80


def test_empty_dimension_rejected():
    with pytest.raises(ValueError):
        SearchSpace(gamma_choices=()).configurations()


def test_draws_without_replacement_then_reshuffle():
    draws = draw_configurations(SMALL, 10, 3)
    assert sorted(draws[:4]) == sorted(SMALL.configurations())
    assert sorted(draws[4:8]) == sorted(SMALL.configurations())
    assert draws == draw_configurations(SMALL, 10, 3)


def test_single_configuration(small_melody_model):
    tree, train, _ = small_melody_model
    space = SearchSpace((5e-5,), (8,), (0.8,))
    (r,) = run_search(tree, space, train.head(200), trials=1, samples_per_trial=5, master_seed=0)
    assert (r.gamma, r.top_k, r.temperature, r.samples) == (5e-5, 8, 0.8, 5)


def test_covers_space_and_is_reproducible(small_melody_model):
    tree, train, _ = small_melody_model
    ref = train.head(300)
    a = run_search(tree, SMALL, ref, trials=4, samples_per_trial=8, master_seed=9)
    b = run_search(tree, SMALL, ref, trials=4, samples_per_trial=8, master_seed=9)
    assert sorted((r.gamma, r.top_k, r.temperature) for r in a) == sorted(SMALL.configurations())
    strip = lambda rs: [(r.trial, r.gamma, r.top_k, r.temperature, r.objective) for r in rs]
    assert strip(a) == strip(b)
    assert sorted(r.trial for r in a) == [0, 1, 2, 3]
    assert [r.objective for r in a] == sorted(r.objective for r in a)


def test_objective_matches_direct_recomputation(small_melody_model):
    tree, train, _ = small_melody_model
    ref = train.head(300)
    results = run_search(tree, SMALL, ref, trials=2, samples_per_trial=6, master_seed=4)
    for r in results:
        params = GenParams(gamma=r.gamma, top_k=r.top_k, temperature=r.temperature,
                           master_seed=(4 * 1_000_003 + r.trial))
        gen = batch_generate(tree, params, 6)
        assert r.objective == wasserstein_1d(pitch_values(gen), pitch_values(ref.tokens))


def test_summary_and_json(small_melody_model):
    tree, train, _ = small_melody_model
    results = run_search(tree, SMALL, train.head(100), trials=2, samples_per_trial=3, master_seed=1)
    best = summary(results)["best"]
    assert best["trial"] == results[0].trial
    assert json.loads(results[0].to_json())["objective"] == results[0].objective


def test_zero_trials_rejected(small_melody_model):
    with pytest.raises(ValueError):
        run_search(small_melody_model[0], SMALL, small_melody_model[1], trials=0,
                   samples_per_trial=1, master_seed=0)
