"""Knowledge (belief) games over observable arenas, and games nested on top of them.

An observable game is any object with

* ``initial`` -- a hashable state handle,
* ``actions`` -- a tuple of action names,
* ``obs`` -- the frozenset of observed predicate ids,
* ``step(state, action)`` -- iterable of ``(successor, visible)``,
* ``observe(state)`` -- frozenset of satisfied predicate ids,
* ``diverges(belief, action)`` -- whether an infinite in-observation run exists,

and optionally ``canonical(members)`` returning a canonical tuple for a belief.
"""
from __future__ import annotations

from collections import deque
from typing import Dict, FrozenSet, List, Optional, Tuple

from .finite import FiniteLTS, ModelError, SafetySolution, invisible_cycle, solve_safety


def saturate(game, members, action):
    """States reachable by invisible ``action`` steps, and the visible successors of those."""
    seen = set(members)
    stack = list(seen)
    visible = set()
    while stack:
        s = stack.pop()
        for t, vis in game.step(s, action):
            if vis:
                visible.add(t)
            elif t not in seen:
                seen.add(t)
                stack.append(t)
    return seen, visible


class InvisibleSummary:
    """Per ``(state, action)``: visible successors reachable through invisible steps,
    and whether an infinite invisible run starts there.

    Computed by Tarjan's algorithm over the invisible ``action``-subgraph and
    memoized, so a belief's successors are the union over its members.  A game
    may expose ``delay_unbounded(state, action)`` for states where time can
    diverge without any discrete step.
    """

    def __init__(self, game):
        self.game = game
        self.memo = {}
        self.local_div = getattr(game, "delay_unbounded", None)

    def get(self, s, a):
        r = self.memo.get((s, a))
        if r is None:
            self._tarjan(s, a)
            r = self.memo[(s, a)]
        return r

    def belief(self, members, a):
        visible, div = set(), False
        for s in members:
            v, d = self.get(s, a)
            visible |= v
            div = div or d
        return visible, div

    def _split(self, v, a):
        inv, vis = [], set()
        for t, visible in self.game.step(v, a):
            if visible:
                vis.add(t)
            else:
                inv.append(t)
        return inv, vis

    def _tarjan(self, root, a):
        memo = self.memo
        idx, low, local = {}, {}, {}
        stack, on = [], set()
        counter = 0

        def enter(v):
            nonlocal counter
            idx[v] = low[v] = counter
            counter += 1
            stack.append(v)
            on.add(v)
            local[v] = self._split(v, a)
            return (v, iter(local[v][0]))

        call = [enter(root)]
        while call:
            v, it = call[-1]
            child = None
            for w in it:
                if (w, a) in memo:
                    continue
                if w not in idx:
                    child = w
                    break
                if w in on and idx[w] < low[v]:
                    low[v] = idx[w]
            if child is not None:
                call.append(enter(child))
                continue
            call.pop()
            if call:
                u = call[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
            if low[v] != idx[v]:
                continue
            comp = []
            while True:
                w = stack.pop()
                on.discard(w)
                comp.append(w)
                if w == v:
                    break
            members = set(comp)
            visible, div = set(), len(comp) > 1
            for w in comp:
                inv, vis = local[w]
                visible |= vis
                if not div and self.local_div is not None and self.local_div(w, a):
                    div = True
                for t in inv:
                    if t in members:
                        div = True
                    else:
                        tv, td = memo[(t, a)]
                        visible |= tv
                        div = div or td
            res = (frozenset(visible), div)
            for w in comp:
                memo[(w, a)] = res


def post_obs(game, belief, action) -> set:
    return saturate(game, belief, action)[1]


def sink_obs(game, belief, action) -> bool:
    return bool(game.diverges(tuple(belief), action))


def _canonical(game, members):
    canon = getattr(game, "canonical", None)
    if canon is not None:
        return canon(members)
    return tuple(sorted(members))


class KnowledgeGame:
    """Reachable fragment of the knowledge game; belief 0 is the initial one."""

    def __init__(self, game, safety: str):
        self.source = game
        self.obs = frozenset(game.obs)
        self.safety = safety
        self.actions = tuple(game.actions)
        self.beliefs: List[tuple] = []
        self.index: Dict[tuple, int] = {}
        self.observation: List[FrozenSet[str]] = []
        self.safe: List[bool] = []
        self.succ: Dict[Tuple[int, str], Tuple[int, ...]] = {}
        self.sinks = set()
        self.expanded = set()
        self.complete = False
        self.initial_losing = False
        self._verdict = None

    def __len__(self):
        return len(self.beliefs)

    def _add(self, members) -> int:
        key = _canonical(self.source, members)
        i = self.index.get(key)
        if i is None:
            i = len(self.beliefs)
            self.index[key] = i
            self.beliefs.append(key)
            o = self.source.observe(key[0])
            self.observation.append(o)
            self.safe.append(self.safety in o)
        return i

    def successors(self, i: int, action: str) -> Tuple[int, ...]:
        return self.succ.get((i, action), (i,))

    def arena_states(self) -> int:
        """Distinct arena states mentioned by the beliefs."""
        return len({s for b in self.beliefs for s in b})

    def base_states(self) -> int:
        """Distinct states of the innermost arena covered by this game."""
        return len(self._flat_all())

    def _flat_all(self):
        inner = getattr(self.source, "kg", None)
        if inner is None:
            return {s for b in self.beliefs for s in b}
        flat = inner._flat_members()
        out = set()
        for b in self.beliefs:
            for s in b:
                out |= flat[s]
        return out

    def _flat_members(self):
        inner = getattr(self.source, "kg", None)
        if inner is None:
            return [frozenset(b) for b in self.beliefs]
        flat = inner._flat_members()
        return [frozenset().union(*(flat[s] for s in b)) for b in self.beliefs]

    def to_lts(self) -> FiniteLTS:
        """Finite LTS view; beliefs never expanded get self-loops (they are losing anyway)."""
        succ = []
        for i in range(len(self.beliefs)):
            if i in self.expanded:
                succ.append([self.succ[(i, a)] for a in self.actions])
            else:
                succ.append([(i,) for _ in self.actions])
        return FiniteLTS(len(self.beliefs), self.actions, succ, 0)


def build_knowledge_game(game, safety: str, early_stop: bool = False) -> KnowledgeGame:
    """Build the reachable knowledge game of ``game`` for safety predicate ``safety``.

    With ``early_stop`` unsafe beliefs are not expanded and construction halts as
    soon as the initial belief is known to be losing; the result is then marked
    incomplete.
    """
    if safety not in game.obs:
        raise ModelError(f"safety predicate {safety!r} must be observable")
    kg = KnowledgeGame(game, safety)
    kg._add((game.initial,))
    actions = kg.actions

    # losing-state propagation for early stopping
    losing = set()
    preds: Dict[int, List[Tuple[int, str]]] = {}
    bad_actions: Dict[int, set] = {}

    def mark_losing(start):
        work = [start]
        losing.add(start)
        while work:
            j = work.pop()
            for i, a in preds.get(j, ()):
                if i in losing or i not in kg.expanded:
                    continue
                bad = bad_actions[i]
                bad.add(a)
                if len(bad) == len(actions):
                    losing.add(i)
                    work.append(i)

    summary = InvisibleSummary(game)
    queue = deque([0])
    if not kg.safe[0]:
        mark_losing(0)
    while queue:
        if early_stop and 0 in losing:
            kg.initial_losing = True
            return kg
        i = queue.popleft()
        if early_stop and not kg.safe[i]:
            continue
        members = kg.beliefs[i]
        bad = set()
        for a in actions:
            visible, div = summary.belief(members, a)
            groups: Dict[FrozenSet[str], list] = {}
            for t in visible:
                groups.setdefault(game.observe(t), []).append(t)
            targets = set()
            for o in sorted(groups, key=sorted):
                n_before = len(kg.beliefs)
                j = kg._add(groups[o])
                targets.add(j)
                if j == n_before:
                    queue.append(j)
                    if not kg.safe[j]:
                        losing.add(j)
            # an empty Post means every run stays in the observation: the
            # arena is total at the concrete level, so the belief is a sink
            if not targets or div:
                targets.add(i)
                kg.sinks.add((i, a))
            kg.succ[(i, a)] = tuple(sorted(targets))
            for j in targets:
                preds.setdefault(j, []).append((i, a))
                if j in losing:
                    bad.add(a)
        kg.expanded.add(i)
        bad_actions[i] = bad
        if i not in losing and len(bad) == len(actions):
            mark_losing(i)
    kg.complete = True
    kg.initial_losing = 0 in losing
    return kg


def solve(kg: KnowledgeGame) -> Tuple[bool, Optional[SafetySolution]]:
    """Decide the knowledge game; an early-stopped losing game returns ``(False, None)``."""
    if kg.initial_losing and not kg.complete:
        return False, None
    sol = solve_safety(kg.to_lts(), lambda i: kg.safe[i])
    kg._verdict = sol.wins
    return sol.wins, sol


class NestedGame:
    """A knowledge game seen as an arena for a coarser predicate set."""

    def __init__(self, kg: KnowledgeGame, coarser_obs):
        coarser = frozenset(coarser_obs)
        if not coarser <= kg.obs:
            raise ModelError(
                f"predicates {sorted(coarser - kg.obs)} are not observed by the finer game")
        if kg.safety not in coarser:
            raise ModelError(f"safety predicate {kg.safety!r} must be observable")
        if kg.initial_losing and not kg.complete:
            raise ModelError("an early-stopped game cannot be reused")
        self.kg = kg
        self.obs = coarser
        self.initial = 0
        self.actions = kg.actions
        self._obs = [o & coarser for o in kg.observation]

    def observe(self, i) -> FrozenSet[str]:
        return self._obs[i]

    def step(self, i, action):
        o = self._obs[i]
        return [(j, self._obs[j] != o) for j in self.kg.successors(i, action)]

    def diverges(self, belief, action) -> bool:
        return invisible_cycle(self, belief, action)

    def canonical(self, members):
        return tuple(sorted(members))


def as_observable_game(kg: KnowledgeGame, coarser_obs) -> NestedGame:
    return NestedGame(kg, coarser_obs)
