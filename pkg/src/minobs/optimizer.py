"""Cost-optimal observation sets: lattice search with pruning and game reuse.

Candidates are bitmasks over the non-safety predicates (sorted by id); the
safety predicate is free and part of every candidate.
"""
from __future__ import annotations

import random
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from .finite import FiniteGame, ModelError
from .knowledge import KnowledgeGame, NestedGame, build_knowledge_game, solve
from .model import TGAModel

HEURISTICS = ("cheap-first", "expensive-first", "random", "midpoint")
DEFAULT_MAX_OBS = 16


class CostFunction:
    """Additive cost: ``total(obs)`` is the sum of per-predicate costs."""

    def __init__(self, costs: Dict[str, Fraction], free: Iterable[str] = ()):
        self.costs = {k: Fraction(v) for k, v in costs.items()}
        for k in free:
            self.costs[k] = Fraction(0)
        bad = [k for k, v in self.costs.items() if v < 0]
        if bad:
            raise ModelError(f"negative cost for {sorted(bad)}")

    @classmethod
    def of_model(cls, model: TGAModel) -> "CostFunction":
        return cls({p.id: p.cost for p in model.predicates.values()}, free=[model.safety])

    def total(self, obs) -> Fraction:
        return sum((self.costs[p] for p in obs), Fraction(0))

    __call__ = total


class CandidateStore:
    """Explicit set of unexplored observation sets."""

    def __init__(self, preds, safety: str, cost: CostFunction, max_obs: int = DEFAULT_MAX_OBS):
        preds = sorted(set(preds))
        if safety not in preds:
            raise ModelError(f"safety predicate {safety!r} must be in the observable set")
        if len(preds) > max_obs:
            raise ModelError(f"{len(preds)} observable predicates exceed the cap of {max_obs}")
        self.safety = safety
        self.cost = cost
        self.others = [p for p in preds if p != safety]
        self.members = set(range(1 << len(self.others)))
        n = len(self.others)
        self._costs = [self._mask_cost(m) for m in range(1 << n)]
        self._keys = [tuple(sorted(self.sets(m))) for m in range(1 << n)]

    def _mask_cost(self, mask) -> Fraction:
        return self.cost.total(self.sets(mask))

    def sets(self, mask) -> FrozenSet[str]:
        return frozenset([self.safety] + [p for i, p in enumerate(self.others) if mask >> i & 1])

    def mask(self, obs) -> int:
        out = 0
        for i, p in enumerate(self.others):
            if p in obs:
                out |= 1 << i
        return out

    def cost_of(self, mask) -> Fraction:
        return self._costs[mask]

    def key(self, mask) -> tuple:
        return self._keys[mask]

    def __len__(self):
        return len(self.members)

    def __contains__(self, obs):
        return self.mask(obs) in self.members

    def sorted_members(self) -> List[int]:
        return sorted(self.members, key=self.key)


def pick_candidate(store: CandidateStore, heuristic: str, rng: Optional[random.Random] = None,
                   exclude=frozenset()) -> int:
    """Next mask to explore; ties go to the lexicographically smallest id tuple."""
    pool = [m for m in store.sorted_members() if m not in exclude]
    if not pool:
        raise ValueError("no candidate left")
    if heuristic == "cheap-first":
        return min(pool, key=lambda m: store.cost_of(m))
    if heuristic == "expensive-first":
        return max(pool, key=lambda m: store.cost_of(m))
    if heuristic == "random":
        rng = rng or random.Random(0)
        return pool[rng.randrange(len(pool))]
    if heuristic == "midpoint":
        scores = midpoint_scores(store)
        best = max(scores[m] for m in pool)
        return next(m for m in pool if scores[m] == best)
    raise ValueError(f"unknown heuristic {heuristic!r}")


def midpoint_scores(store: CandidateStore) -> Dict[int, int]:
    """``min(#members costing at least obs, #members below obs)`` for every member."""
    n = len(store.others)
    present = np.zeros(1 << n, dtype=np.int64)
    members = np.fromiter(store.members, dtype=np.int64, count=len(store.members))
    present[members] = 1
    # sum over subsets, one bit at a time
    below = present.copy()
    idx = np.arange(1 << n)
    for i in range(n):
        has = (idx >> i) & 1 == 1
        below[has] += below[idx[has] ^ (1 << i)]
    costs = sorted(store.cost_of(m) for m in store.members)
    out = {}
    for m in store.members:
        c = store.cost_of(m)
        # members with cost >= c: bisect on the exact rationals
        lo, hi = 0, len(costs)
        while lo < hi:
            mid = (lo + hi) // 2
            if costs[mid] < c:
                lo = mid + 1
            else:
                hi = mid
        out[m] = min(len(costs) - lo, int(below[m]))
    return out


def prune(store: CandidateStore, mask: int, verdict: bool) -> CandidateStore:
    """Remove what a verdict on ``mask`` settles; ``mask`` itself always goes."""
    if verdict:
        c = store.cost_of(mask)
        store.members = {m for m in store.members if store.cost_of(m) < c}
    else:
        store.members = {m for m in store.members if m & ~mask}
    store.members.discard(mask)
    return store


@dataclass
class Step:
    obs: Tuple[str, ...]
    verdict: bool
    reused_from: Optional[Tuple[str, ...]] = None
    beliefs: int = 0
    states: int = 0
    complete: bool = True
    duration: float = 0.0

    @property
    def reused(self) -> bool:
        return self.reused_from is not None


@dataclass
class SolutionRecord:
    steps: List[Step] = field(default_factory=list)

    def __iter__(self):
        return iter(self.steps)

    def __len__(self):
        return len(self.steps)

    def append(self, step: Step):
        self.steps.append(step)

    @property
    def from_scratch(self) -> int:
        return sum(1 for s in self.steps if not s.reused)

    @property
    def reused(self) -> int:
        return sum(1 for s in self.steps if s.reused)


def validate_nonredundant(seq, cost) -> bool:
    """Every query avoids what earlier verdicts already settled."""
    steps = list(seq)
    for i, si in enumerate(steps):
        oi = frozenset(si.obs)
        ci = cost(oi)
        for sj in steps[:i]:
            oj = frozenset(sj.obs)
            if sj.verdict:
                if not cost(oj) > ci:
                    return False
            elif oi <= oj:
                return False
    return True


class ReuseCache:
    """Fully built knowledge games keyed by their observation sets, in insertion order."""

    def __init__(self):
        self.entries: List[Tuple[FrozenSet[str], KnowledgeGame]] = []

    def add(self, obs, kg: KnowledgeGame):
        if not kg.complete:
            return
        obs = frozenset(obs)
        self.entries = [(o, g) for o, g in self.entries if o != obs]
        self.entries.append((obs, kg))

    def __len__(self):
        return len(self.entries)


def find_reusable(cache: ReuseCache, obs) -> Optional[Tuple[FrozenSet[str], KnowledgeGame]]:
    """Smallest strict superset of ``obs`` in the cache, most recent first on ties."""
    obs = frozenset(obs)
    best = None
    for o, kg in reversed(cache.entries):
        if obs < o and (best is None or len(o) < len(best[0])):
            best = (o, kg)
    return best


class Solver:
    """Solves observation sets of one model from scratch or on top of cached games."""

    def __init__(self, model: TGAModel, oracle: str = "zone", max_regions: int = 200_000):
        if oracle not in ("zone", "region"):
            raise ValueError(f"unknown oracle {oracle!r}")
        self.model = model
        self.oracle = oracle
        self.max_regions = max_regions
        self._regions = None

    def arena(self, obs):
        if self.oracle == "zone":
            from .zones import ZoneGame
            return ZoneGame(self.model, obs)
        if self._regions is None:
            from .regions import region_game
            self._regions = region_game(self.model, self.max_regions)
        rg = self._regions
        return FiniteGame(rg.lts, rg.valuation, obs)

    def solve(self, obs, cache: Optional[ReuseCache] = None, early_stop: bool = True):
        """Returns ``(Step, KnowledgeGame)``."""
        obs = frozenset(obs)
        safety = self.model.safety
        t0 = time.perf_counter()
        found = find_reusable(cache, obs) if cache is not None else None
        if found is not None:
            finer, base = found
            arena = NestedGame(base, obs)
        else:
            finer, arena = None, self.arena(obs)
        kg = build_knowledge_game(arena, safety, early_stop=early_stop)
        verdict = solve(kg)[0]
        step = Step(tuple(sorted(obs)), verdict,
                    tuple(sorted(finer)) if finer is not None else None,
                    len(kg), kg.base_states(), kg.complete, time.perf_counter() - t0)
        if cache is not None:
            cache.add(obs, kg)
        return step, kg


def _solve_remote(args):
    model, obs, oracle, early_stop = args
    step, _ = Solver(model, oracle).solve(obs, None, early_stop)
    return step


def optimize(model: TGAModel, obs_set=None, cost: Optional[CostFunction] = None,
             heuristic: str = "cheap-first", reuse: bool = True, seed: int = 0,
             oracle: str = "zone", max_obs: int = DEFAULT_MAX_OBS,
             reuse_requires_full: bool = False, jobs: int = 1, on_step=None):
    """Search the candidate lattice; returns ``(best obs or None, SolutionRecord)``.

    A later win replaces the current best only when strictly cheaper, which
    is automatic since a win prunes every candidate at least as expensive.
    """
    if heuristic not in HEURISTICS:
        raise ValueError(f"unknown heuristic {heuristic!r}")
    obs_set = frozenset(model.predicates) if obs_set is None else frozenset(obs_set)
    unknown = obs_set - set(model.predicates)
    if unknown:
        raise ModelError(f"unknown predicates {sorted(unknown)}")
    cost = cost or CostFunction.of_model(model)
    store = CandidateStore(obs_set, model.safety, cost, max_obs)
    if jobs > 1:
        if reuse:
            raise ValueError("concurrent solving requires reuse to be disabled")
        return _optimize_parallel(model, store, heuristic, seed, oracle, jobs, on_step)
    rng = random.Random(seed)
    solver = Solver(model, oracle)
    cache = ReuseCache() if reuse else None
    # a losing game is only reusable when built to completion
    early_stop = not (reuse and reuse_requires_full)
    record = SolutionRecord()
    best = None
    while store.members:
        mask = pick_candidate(store, heuristic, rng)
        step, _ = solver.solve(store.sets(mask), cache, early_stop)
        record.append(step)
        if on_step:
            on_step(step)
        if step.verdict:
            best = store.sets(mask)
        prune(store, mask, step.verdict)
    return best, record


def _optimize_parallel(model, store, heuristic, seed, oracle, jobs, on_step):
    """Work-stealing variant: verdicts prune as they arrive; only ``best`` is deterministic."""
    rng = random.Random(seed)
    record = SolutionRecord()
    best = None
    running = {}
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        while store.members or running:
            while len(running) < jobs:
                free = store.members - set(running.values())
                if not free:
                    break
                mask = pick_candidate(store, heuristic, rng, exclude=set(running.values()))
                fut = pool.submit(_solve_remote, (model, store.sets(mask), oracle, True))
                running[fut] = mask
            if not running:
                break
            done, _ = wait(list(running), return_when=FIRST_COMPLETED)
            for fut in sorted(done, key=lambda f: store.key(running[f])):
                mask = running.pop(fut)
                step = fut.result()
                # a verdict settled meanwhile by another result is dropped
                if not validate_nonredundant(record.steps + [step], store.cost):
                    continue
                record.append(step)
                if on_step:
                    on_step(step)
                if step.verdict and (best is None or store.cost_of(mask) < store.cost.total(best)):
                    best = store.sets(mask)
                prune(store, mask, step.verdict)
    return best, record


def exhaustive(model: TGAModel, obs_set=None, cost: Optional[CostFunction] = None,
               oracle: str = "zone") -> Dict[FrozenSet[str], bool]:
    """Verdict of every candidate, solved independently."""
    obs_set = frozenset(model.predicates) if obs_set is None else frozenset(obs_set)
    cost = cost or CostFunction.of_model(model)
    store = CandidateStore(obs_set, model.safety, cost, max_obs=len(obs_set))
    solver = Solver(model, oracle)
    return {store.sets(m): solver.solve(store.sets(m), None, True)[0].verdict
            for m in store.sorted_members()}


def cheapest_winning(verdicts: Dict[FrozenSet[str], bool], cost) -> Optional[FrozenSet[str]]:
    wins = [o for o, v in verdicts.items() if v]
    if not wins:
        return None
    return min(wins, key=lambda o: (cost(o), tuple(sorted(o))))
