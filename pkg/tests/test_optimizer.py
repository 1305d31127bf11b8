import itertools
import random
from fractions import Fraction

import pytest

from minobs.finite import ModelError
from minobs.modelfile import parse_model_text
from minobs.optimizer import (CandidateStore, CostFunction, ReuseCache, Solver, Step,
                              cheapest_winning, exhaustive, find_reusable, midpoint_scores,
                              optimize, pick_candidate, prune, validate_nonredundant)

from support import random_model

CALM = """\
model calm
process P
  location A initial
end
predicate safe : P.A
safety safe
"""


def unit_store(names=("a", "b", "c")):
    preds = ("safe",) + tuple(names)
    return CandidateStore(preds, "safe", CostFunction({p: 1 for p in preds}, free=["safe"]))


def subsets(store):
    return {store.sets(m) for m in store.members}


def test_cost_function():
    cost = CostFunction({"s": 5, "a": Fraction(1, 2), "b": 2}, free=["s"])
    assert cost({"s", "a", "b"}) == Fraction(5, 2)
    with pytest.raises(ModelError):
        CostFunction({"a": -1})


def test_store_starts_with_all_sets_containing_safety():
    store = unit_store()
    assert len(store) == 8
    assert all("safe" in s for s in subsets(store))
    with pytest.raises(ModelError):
        CandidateStore(["a"], "safe", CostFunction({"a": 1}))
    with pytest.raises(ModelError, match="cap"):
        CandidateStore(["safe", "a", "b"], "safe", CostFunction({"safe": 0, "a": 1, "b": 1}), max_obs=2)


def test_single_member_store():
    store = unit_store()
    store.members = {store.mask({"a"})}
    for h in ("cheap-first", "expensive-first", "random", "midpoint"):
        assert store.sets(pick_candidate(store, h, random.Random(1))) == {"safe", "a"}
    store.members = set()
    with pytest.raises(ValueError):
        pick_candidate(store, "cheap-first")


def test_cheap_and_expensive_first():
    store = unit_store()
    assert store.sets(pick_candidate(store, "cheap-first")) == {"safe"}
    assert store.sets(pick_candidate(store, "expensive-first")) == {"safe", "a", "b", "c"}
    # lexicographic tie-break among the three singletons
    store.members.discard(0)
    assert store.sets(pick_candidate(store, "cheap-first")) == {"safe", "a"}


def test_midpoint_matches_enumeration():
    store = unit_store()
    sets = subsets(store)
    cost = store.cost.total
    want = {}
    for s in sets:
        costly = sum(1 for c in sets if cost(c) >= cost(s))
        below = sum(1 for c in sets if c <= s)
        want[s] = min(costly, below)
    scores = midpoint_scores(store)
    assert {store.sets(m): v for m, v in scores.items()} == want
    best = max(want.values())
    picked = store.sets(pick_candidate(store, "midpoint"))
    assert want[picked] == best
    assert picked == min((s for s in sets if want[s] == best), key=lambda s: tuple(sorted(s)))


def test_random_pick_is_seeded():
    picks = [pick_candidate(unit_store(), "random", random.Random(7)) for _ in range(3)]
    assert len(set(picks)) == 1


def test_prune_examples():
    store = unit_store()
    prune(store, 0, True)
    assert len(store) == 0
    store = unit_store()
    prune(store, store.mask({"a", "b", "c"}), False)
    assert len(store) == 0
    store = unit_store()
    before = subsets(store)
    prune(store, store.mask({"a", "b"}), False)
    gone = before - subsets(store)
    assert gone == {frozenset({"safe"} | set(c)) for r in range(3)
                    for c in itertools.combinations("ab", r)}


def test_prune_win_keeps_only_cheaper():
    store = unit_store()
    prune(store, store.mask({"a", "b"}), True)
    assert all(store.cost_of(m) < 2 for m in store.members)
    assert len(store) == 4


def test_validate_nonredundant():
    cost = CostFunction({"s": 0, "a": 1, "b": 1})
    assert validate_nonredundant([], cost)
    assert not validate_nonredundant([Step(("a", "s"), False), Step(("s",), True)], cost)
    assert not validate_nonredundant([Step(("a", "s"), True), Step(("b", "s"), False)], cost)
    assert validate_nonredundant([Step(("a", "b", "s"), True), Step(("a", "s"), False),
                                  Step(("b", "s"), True)], cost)


class FakeGame:
    complete = True


def test_find_reusable():
    cache = ReuseCache()
    assert find_reusable(cache, {"s"}) is None
    full, mid = FakeGame(), FakeGame()
    cache.add({"s", "a", "b"}, full)
    assert find_reusable(cache, {"s", "a"})[1] is full
    cache.add({"s", "a"}, mid)
    assert find_reusable(cache, {"s"})[1] is mid
    assert find_reusable(cache, {"s", "a", "b"}) is None
    partial = FakeGame()
    partial.complete = False
    cache.add({"s", "b"}, partial)
    assert len(cache) == 2


def test_trivial_model_wins_blind():
    m = parse_model_text(CALM)
    best, record = optimize(m)
    assert best == {"safe"} and len(record) == 1


@pytest.mark.parametrize("heuristic", ["cheap-first", "expensive-first", "random", "midpoint"])
def test_optimal_on_random_models(heuristic):
    for seed in range(12):
        m = random_model(seed)
        cost = CostFunction.of_model(m)
        want = cheapest_winning(exhaustive(m), cost)
        for reuse in (False, True):
            best, record = optimize(m, heuristic=heuristic, reuse=reuse, seed=seed)
            assert (best is None) == (want is None)
            if best is not None:
                assert cost(best) == cost(want)
            assert validate_nonredundant(record, cost)
            assert len(record) <= 1 << (len(m.predicates) - 1)


def test_reuse_counts_on_random_models():
    for seed in range(12):
        m = random_model(seed)
        _, cheap = optimize(m, heuristic="cheap-first", reuse=True)
        assert cheap.reused == 0
        _, rich = optimize(m, heuristic="expensive-first", reuse=True, reuse_requires_full=True)
        assert rich.from_scratch == 1


def test_nested_solve_uses_finest_cached_game():
    m = random_model(3)
    solver = Solver(m)
    cache = ReuseCache()
    full = frozenset(m.predicates)
    step, kg = solver.solve(full, cache, early_stop=False)
    assert step.reused_from is None and kg.complete
    step2, _ = solver.solve({m.safety}, cache)
    assert step2.reused_from == tuple(sorted(full))
    assert step2.verdict == solver.solve({m.safety})[0].verdict


def test_unknown_inputs():
    m = random_model(1)
    with pytest.raises(ValueError):
        optimize(m, heuristic="greedy")
    with pytest.raises(ModelError):
        optimize(m, obs_set={"safe", "nope"})
    with pytest.raises(ValueError):
        Solver(m, oracle="bdd")


def test_parallel_gives_the_same_best():
    m = random_model(5)
    cost = CostFunction.of_model(m)
    best, _ = optimize(m, heuristic="cheap-first", reuse=False)
    par, record = optimize(m, heuristic="cheap-first", reuse=False, jobs=2)
    assert (best is None) == (par is None)
    if best is not None:
        assert cost(best) == cost(par)
    assert validate_nonredundant(record, cost)
    with pytest.raises(ValueError):
        optimize(m, reuse=True, jobs=2)
