"""Zone-level game semantics of a timed game automaton under partial observation.

A symbolic state is ``(location, cell id, zone)``: the zone is canonical,
extrapolated, non-empty and lies inside one cell of the threshold grid and
inside the location invariant.  The grid breakpoints are every constant of
an observed predicate, an invariant, a controllable guard, or a target
invariant seen through a controllable edge, so observation, invariant and
enabledness of every controllable action are constant on a cell.
"""
from __future__ import annotations

from typing import Dict, FrozenSet, NamedTuple, Tuple

from .dbm import DBM, Grid, closure_relax, extrapolate, includes, intersect, reset, up
from .finite import ModelError, invisible_cycle
from .model import SKIP, Edge, TGAModel


class CellInfo(NamedTuple):
    obs: FrozenSet[str]
    inv_ok: bool
    enabled: FrozenSet[str]


class ZoneGame:
    """Observable game over symbolic states of ``model`` observing ``obs``."""

    def __init__(self, model: TGAModel, obs, safety: str = None):
        obs = frozenset(obs)
        safety = model.safety if safety is None else safety
        unknown = obs - set(model.predicates)
        if unknown:
            raise ModelError(f"unknown predicates {sorted(unknown)}")
        if safety not in obs:
            raise ModelError(f"safety predicate {safety!r} must be observable")
        self.model = model
        self.obs = obs
        self.safety = safety
        self.actions = model.controllable_actions + (SKIP,)
        self.maxc = model.max_constants()

        thresholds = [set() for _ in model.clocks.names]
        bands = [b for p in obs for b in model.predicates[p].bands]
        bands += [b for inv in model.invariants for b in inv]
        for e in model.edges:
            if e.controllable:
                enab = model.enabling_bands(e)
                bands += list(enab or ())
        for b in bands:
            thresholds[b.clock - 1].update(b.thresholds())
        self.grid = Grid(model.dim, thresholds)

        self._info: Dict[Tuple[int, tuple], CellInfo] = {}
        self._inv = [DBM.from_constraints(model.dim, inv) for inv in model.invariants]
        self._steps = {}

        zero = DBM.zero(model.dim)
        cell = self.grid.cell_of((0,) * len(model.clocks))
        self.initial = (model.initial, cell.id, extrapolate(intersect(zero, cell.zone), self.maxc))

    # ------------------------------------------------------------------

    def info(self, loc: int, cid: tuple) -> CellInfo:
        key = (loc, cid)
        got = self._info.get(key)
        if got is None:
            corner = self.grid.cell(cid).corner()
            m = self.model
            enabled = frozenset(a for a in m.controllable_actions if m.enabled_at(loc, a, corner))
            got = self._info[key] = CellInfo(
                m.observe_point(loc, corner, self.obs), m.invariant_holds(loc, corner), enabled)
        return got

    def observe(self, state) -> FrozenSet[str]:
        return self.info(state[0], state[1]).obs

    def canonical(self, members):
        return tuple(sorted(set(members), key=_state_key))

    def step(self, state, action):
        # every action not enabled in the cell behaves like skip
        if action != SKIP and action not in self.info(state[0], state[1]).enabled:
            action = SKIP
        key = (state, action)
        got = self._steps.get(key)
        if got is None:
            got = self._steps[key] = tuple(self._step(state, action))
        return got

    def _step(self, state, action):
        loc, cid, zone = state
        info = self.info(loc, cid)
        out = []
        if action != SKIP and action in info.enabled:
            for e in self.model.outgoing(loc):
                if e.controllable and e.action == action:
                    out.extend(self._discrete(zone, e, info.obs))
            return out
        for e in self.model.outgoing(loc):
            if not e.controllable:
                out.extend(self._discrete(zone, e, info.obs))
        cell = self.grid.cell(cid)
        future = up(zone)
        tube = extrapolate(intersect(future, cell.zone), self.maxc)
        if tube != zone:
            out.append(((loc, cid, tube), False))
        # first instant in a neighbouring cell: cells are left-closed, so the
        # entry points lie in the closure of the current cell
        frontier = intersect(future, closure_relax(cell))
        if frontier is not None:
            for nxt in self.grid.neighbours(cid, frontier):
                entry = intersect(frontier, nxt.zone)
                if entry is None:
                    continue
                ninfo = self.info(loc, nxt.id)
                if not ninfo.inv_ok:
                    continue
                out.append(((loc, nxt.id, extrapolate(entry, self.maxc)), ninfo.obs != info.obs))
        return out

    def _discrete(self, zone, e: Edge, src_obs):
        z = intersect(zone, e.guard) if e.guard else zone
        if z is None:
            return []
        if e.resets:
            z = reset(z, sorted(e.resets))
        z = intersect(z, self._inv[e.target])
        out = []
        for cell, zc in self.grid.split(z):
            tinfo = self.info(e.target, cell.id)
            out.append(((e.target, cell.id, extrapolate(zc, self.maxc)), tinfo.obs != src_obs))
        return out

    def delay_unbounded(self, state, action) -> bool:
        loc, cid, _ = state
        info = self.info(loc, cid)
        if action != SKIP and action in info.enabled:
            return False
        return self.grid.cell(cid).is_top()

    def diverges(self, belief, action) -> bool:
        seen = set(belief)
        stack = list(seen)
        while stack:
            s = stack.pop()
            if self.delay_unbounded(s, action):
                return True
            for t, vis in self.step(s, action):
                if not vis and t not in seen:
                    seen.add(t)
                    stack.append(t)
        return invisible_cycle(self, belief, action)


def _state_key(s):
    return (s[0], s[1], s[2].m)


def game_step(game: ZoneGame, state, action):
    return list(game.step(state, action))


def zone_observable_game(model: TGAModel, obs, safety: str = None) -> ZoneGame:
    return ZoneGame(model, obs, safety)
