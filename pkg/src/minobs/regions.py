"""Region-graph oracle: a deliberately naive finite rendering of the game semantics.

Regions are the classical equivalence classes (integer parts capped at the
per-clock maximal constant, ordering of fractional parts).  Every guard,
invariant and predicate is decided on one representative valuation, which
is valid because integer-constant non-diagonal constraints are constant on
regions.
"""
from __future__ import annotations

from collections import deque
from fractions import Fraction
from typing import Dict, FrozenSet, List, NamedTuple, Tuple

from .finite import FiniteGame, FiniteLTS, ModelError
from .knowledge import build_knowledge_game, solve
from .model import SKIP, TGAModel


class OracleLimitError(ModelError):
    pass


class Region(NamedTuple):
    loc: int
    ints: Tuple[int, ...]              # value maxc+1 marks "above the max constant"
    zero: FrozenSet[int]               # bounded clocks with zero fractional part
    order: Tuple[FrozenSet[int], ...]  # bounded clocks with positive fraction, increasing


def representative(r: Region, maxc) -> Tuple[Fraction, ...]:
    k = len(r.order) + 1
    frac = {}
    for rank, cls in enumerate(r.order):
        for x in cls:
            frac[x] = Fraction(rank + 1, k)
    out = []
    for x, n in enumerate(r.ints):
        if n > maxc[x + 1]:
            out.append(Fraction(n))
        else:
            out.append(n + frac.get(x, Fraction(0)))
    return tuple(out)


def is_unbounded(r: Region, maxc) -> bool:
    return all(n > maxc[x + 1] for x, n in enumerate(r.ints))


def time_successor(r: Region, maxc) -> Region:
    """The next region along time; ``r`` itself when every clock is above its cap."""
    if is_unbounded(r, maxc):
        return r
    ints = list(r.ints)
    if r.zero:
        moving = set()
        for x in r.zero:
            if ints[x] == maxc[x + 1]:
                ints[x] = maxc[x + 1] + 1
            else:
                moving.add(x)
        order = ((frozenset(moving),) if moving else ()) + r.order
        return Region(r.loc, tuple(ints), frozenset(), order)
    top = r.order[-1]
    for x in top:
        ints[x] += 1
    return Region(r.loc, tuple(ints), top, r.order[:-1])


def reset_region(r: Region, clocks, loc: int) -> Region:
    clocks = frozenset(clocks)
    if not clocks:
        return r._replace(loc=loc)
    ints = tuple(0 if x in clocks else n for x, n in enumerate(r.ints))
    order = tuple(c - clocks for c in r.order if c - clocks)
    return Region(loc, ints, (r.zero - clocks) | clocks, order)


def initial_region(m: TGAModel) -> Region:
    n = len(m.clocks)
    return Region(m.initial, (0,) * n, frozenset(range(n)), ())


class RegionGame(NamedTuple):
    lts: FiniteLTS
    regions: List[Region]
    valuation: Dict[str, List[bool]]


def region_game(m: TGAModel, max_regions: int = 200_000) -> RegionGame:
    """Reachable region LTS over actions ``controllable + skip``.

    The graph does not depend on the observed predicates: a delay out of a
    region with an integer clock stays inside the same threshold cell, so it
    never changes an observation or the set of enabled actions.
    """
    if m.has_diagonals():
        raise ModelError("the region oracle does not support clock-difference guards")
    maxc = m.max_constants()
    actions = m.controllable_actions + (SKIP,)
    # edge resets as 0-based clock indices
    resets = {e: frozenset(x - 1 for x in e.resets) for e in m.edges}

    def successors(r: Region, act: str):
        point = representative(r, maxc)
        out = set()
        if act != SKIP and m.enabled_at(r.loc, act, point):
            for e in m.outgoing(r.loc):
                if e.controllable and e.action == act and m.fires(e, point):
                    out.add(reset_region(r, resets[e], e.target))
            return out
        for e in m.outgoing(r.loc):
            if not e.controllable and m.fires(e, point):
                out.add(reset_region(r, resets[e], e.target))
        nxt = time_successor(r, maxc)
        if nxt == r:
            out.add(r)
        else:
            p2 = representative(nxt, maxc)
            if m.invariant_holds(r.loc, p2):
                out.add(nxt)
        return out

    start = initial_region(m)
    index = {start: 0}
    regions = [start]
    rows = []
    queue = deque([start])
    while queue:
        r = queue.popleft()
        row = []
        for act in actions:
            targets = successors(r, act)
            # no successor only happens where time could creep forever inside r
            if not targets:
                targets = {r}
            ids = []
            for t in targets:
                if t not in index:
                    if len(regions) >= max_regions:
                        raise OracleLimitError(f"region graph exceeds {max_regions} regions")
                    index[t] = len(regions)
                    regions.append(t)
                    queue.append(t)
                ids.append(index[t])
            row.append(tuple(ids))
        rows.append(row)
    lts = FiniteLTS(len(regions), actions, rows, 0,
                    labels=[f"{m.locations[r.loc]}:{representative(r, maxc)}" for r in regions])
    valuation = {p: [m.predicates[p].holds(r.loc, representative(r, maxc)) for r in regions]
                 for p in m.predicates}
    return RegionGame(lts, regions, valuation)


def oracle_solve(m: TGAModel, obs, safety: str = None, max_regions: int = 200_000) -> bool:
    safety = m.safety if safety is None else safety
    obs = frozenset(obs)
    if safety not in obs:
        raise ModelError(f"safety predicate {safety!r} must be observable")
    rg = region_game(m, max_regions)
    kg = build_knowledge_game(FiniteGame(rg.lts, rg.valuation, obs), safety, early_stop=True)
    return solve(kg)[0]
