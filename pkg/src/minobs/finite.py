"""Explicit finite arenas, perfect-information safety games, observations."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple


class ModelError(ValueError):
    pass


@dataclass
class FiniteLTS:
    """States and actions are indexed ``0..n-1``; ``succ[s][a]`` is a tuple of states."""
    n_states: int
    actions: Tuple[str, ...]
    succ: List[List[Tuple[int, ...]]]
    initial: int = 0
    labels: Optional[List[str]] = None

    def __post_init__(self):
        self.actions = tuple(self.actions)
        if not 0 <= self.initial < self.n_states:
            raise ModelError(f"initial state {self.initial} out of range")
        if len(self.succ) != self.n_states:
            raise ModelError("one successor row per state expected")
        for s, row in enumerate(self.succ):
            if len(row) != len(self.actions):
                raise ModelError(f"state {s}: one successor set per action expected")
            for a, targets in enumerate(row):
                if not targets:
                    raise ModelError(
                        f"transition relation not total: no {self.actions[a]!r}-successor of state {s}")
                for t in targets:
                    if not 0 <= t < self.n_states:
                        raise ModelError(f"state {s}: successor {t} out of range")
        self.succ = [[tuple(sorted(set(t))) for t in row] for row in self.succ]

    @classmethod
    def from_edges(cls, n_states, actions, edges, initial=0, labels=None) -> "FiniteLTS":
        """Build from ``(source, action, target)`` triples; actions given by name."""
        actions = tuple(actions)
        aidx = {a: i for i, a in enumerate(actions)}
        succ = [[set() for _ in actions] for _ in range(n_states)]
        for s, a, t in edges:
            succ[s][aidx[a]].add(t)
        return cls(n_states, actions, [[tuple(x) for x in row] for row in succ], initial, labels)


@dataclass
class SafetySolution:
    winning: FrozenSet[int]
    strategy: Dict[int, str] = field(default_factory=dict)
    initial: int = 0

    @property
    def wins(self) -> bool:
        return self.initial in self.winning


def solve_safety(g: FiniteLTS, safe) -> SafetySolution:
    """Greatest set of safe states from which some action keeps every successor inside.

    Backward removal: a state leaves the candidate set once every action has a
    successor outside it.  Ties between winning actions go to the lowest index.
    """
    n = g.n_states
    safe_of = safe.__contains__ if not callable(safe) else safe
    alive = [bool(safe_of(s)) for s in range(n)]
    # bad[s][a]: number of a-successors of s currently outside the set
    preds: List[List[Tuple[int, int]]] = [[] for _ in range(n)]
    bad = [[0] * len(g.actions) for _ in range(n)]
    for s in range(n):
        for a, targets in enumerate(g.succ[s]):
            for t in targets:
                preds[t].append((s, a))
                if not alive[t]:
                    bad[s][a] += 1
    good_actions = [sum(1 for a in range(len(g.actions)) if bad[s][a] == 0) for s in range(n)]
    queue = deque(s for s in range(n) if not alive[s])
    for s in range(n):
        if alive[s] and good_actions[s] == 0:
            alive[s] = False
            queue.append(s)
    while queue:
        t = queue.popleft()
        for s, a in preds[t]:
            if not alive[s]:
                continue
            bad[s][a] += 1
            if bad[s][a] == 1:
                good_actions[s] -= 1
                if good_actions[s] == 0:
                    alive[s] = False
                    queue.append(s)
    winning = frozenset(s for s in range(n) if alive[s])
    strategy = {}
    for s in sorted(winning):
        for a in range(len(g.actions)):
            if bad[s][a] == 0:
                strategy[s] = g.actions[a]
                break
    return SafetySolution(winning, strategy, g.initial)


def gamma_obs(valuation: Mapping[str, Sequence[bool]] | None, s: int, obs) -> FrozenSet[str]:
    """Predicates of ``obs`` satisfied by ``s``; ``valuation[p][s]`` is the truth of p."""
    return frozenset(p for p in obs if valuation[p][s])


def stutter_free_projection(run: Sequence[int], observe) -> List[FrozenSet[str]]:
    """Collapse consecutive equal observations of a non-empty run."""
    if not run:
        raise ValueError("a run has at least one state")
    out = [observe(run[0])]
    for prev, cur in zip(run, run[1:]):
        o = observe(cur)
        if o != observe(prev):
            out.append(o)
    return out


class FiniteGame:
    """A finite LTS with predicate labelling, exposed as an observable game."""

    def __init__(self, lts: FiniteLTS, valuation: Mapping[str, Sequence[bool]], obs):
        obs = frozenset(obs)
        missing = obs - set(valuation)
        if missing:
            raise ModelError(f"unknown predicates {sorted(missing)}")
        self.lts = lts
        self.obs = obs
        self.valuation = valuation
        self.initial = lts.initial
        self.actions = lts.actions
        self._aidx = {a: i for i, a in enumerate(lts.actions)}
        self._obs = [gamma_obs(valuation, s, obs) for s in range(lts.n_states)]

    def observe(self, s) -> FrozenSet[str]:
        return self._obs[s]

    def step(self, s, action):
        o = self._obs[s]
        return [(t, self._obs[t] != o) for t in self.lts.succ[s][self._aidx[action]]]

    def diverges(self, belief, action) -> bool:
        return invisible_cycle(self, belief, action)

    def canonical(self, members):
        return tuple(sorted(members))


def invisible_cycle(game, belief, action) -> bool:
    """True iff the invisible ``action``-subgraph reachable from ``belief`` has a cycle."""
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {}
    for root in belief:
        if colour.get(root, WHITE) != WHITE:
            continue
        colour[root] = GREY
        stack = [(root, iter([t for t, vis in game.step(root, action) if not vis]))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = BLACK
                stack.pop()
                continue
            c = colour.get(nxt, WHITE)
            if c == GREY:
                return True
            if c == WHITE:
                colour[nxt] = GREY
                stack.append((nxt, iter([t for t, vis in game.step(nxt, action) if not vis])))
    return False
