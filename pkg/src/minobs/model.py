"""Timed game automata and observable predicates over them."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from .dbm import Band, Bound, ClockSet, DBM, intersect
from .finite import ModelError

SKIP = "skip"


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    action: str
    controllable: bool
    guard: Tuple = ()          # Band atoms if controllable, Band/Bound atoms otherwise
    resets: FrozenSet[int] = frozenset()


@dataclass(frozen=True)
class ObservationPredicate:
    """``(K, psi)``: location set ``K`` and a conjunction of bands ``psi``."""
    id: str
    locations: FrozenSet[int]
    bands: Tuple[Band, ...] = ()
    cost: Fraction = Fraction(0)

    def holds(self, loc: int, point) -> bool:
        return loc in self.locations and all(b.holds(point) for b in self.bands)


@dataclass
class TGAModel:
    clocks: ClockSet
    locations: Tuple[str, ...]
    initial: int
    edges: Tuple[Edge, ...]
    invariants: Tuple[Tuple[Band, ...], ...]
    predicates: Dict[str, ObservationPredicate]
    safety: str
    name: str = "model"
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.locations = tuple(self.locations)
        self.edges = tuple(self.edges)
        self.invariants = tuple(tuple(i) for i in self.invariants)
        self.validate()
        self._out = [[] for _ in self.locations]
        for e in self.edges:
            self._out[e.source].append(e)

    # ------------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.clocks.dim

    @property
    def controllable_actions(self) -> Tuple[str, ...]:
        return tuple(sorted({e.action for e in self.edges if e.controllable}))

    @property
    def uncontrollable_actions(self) -> Tuple[str, ...]:
        return tuple(sorted({e.action for e in self.edges if not e.controllable}))

    def outgoing(self, loc: int) -> List[Edge]:
        return self._out[loc]

    def validate(self):
        n = len(self.locations)
        if not 0 <= self.initial < n:
            raise ModelError("initial location out of range")
        if len(self.invariants) != n:
            raise ModelError("one invariant per location expected")
        for loc, inv in enumerate(self.invariants):
            for a in inv:
                if not isinstance(a, Band):
                    raise ModelError(f"invariant of {self.locations[loc]} is not of the form k1 <= x < k2")
        for e in self.edges:
            if not (0 <= e.source < n and 0 <= e.target < n):
                raise ModelError(f"edge {e.action}: location out of range")
            if e.action == SKIP:
                raise ModelError(f"action name {SKIP!r} is reserved")
            if e.controllable and not all(isinstance(a, Band) for a in e.guard):
                raise ModelError(
                    f"controllable edge {e.action} from {self.locations[e.source]}: "
                    "guard must be a conjunction of k1 <= x < k2 bands")
            for a in e.guard:
                if not isinstance(a, (Band, Bound)):
                    raise ModelError(f"edge {e.action}: unsupported guard atom {a!r}")
        both = set(self.controllable_actions) & set(self.uncontrollable_actions)
        if both:
            raise ModelError(f"actions both controllable and uncontrollable: {sorted(both)}")
        if self.safety not in self.predicates:
            raise ModelError(f"safety predicate {self.safety!r} missing from the catalog")
        for p in self.predicates.values():
            if p.cost < 0:
                raise ModelError(f"predicate {p.id}: negative cost")
            for b in p.bands:
                if not isinstance(b, Band):
                    raise ModelError(f"predicate {p.id}: clock part must be k1 <= x < k2 bands")
        zero = (Fraction(0),) * len(self.clocks)
        if not all(b.holds(zero) for b in self.invariants[self.initial]):
            raise ModelError("the zero valuation violates the initial invariant")

    def max_constants(self) -> List[int]:
        """Largest constant per clock over guards, invariants and all predicates."""
        m = [0] * self.dim
        atoms = [a for e in self.edges for a in e.guard]
        atoms += [a for inv in self.invariants for a in inv]
        atoms += [b for p in self.predicates.values() for b in p.bands]
        for a in atoms:
            if isinstance(a, Band):
                for k in a.constants():
                    m[a.clock] = max(m[a.clock], k)
            else:
                for k in a.constants():
                    for i in (a.i, a.j):
                        if i:
                            m[i] = max(m[i], k)
        return m

    def has_diagonals(self) -> bool:
        return any(isinstance(a, Bound) and a.is_diagonal for e in self.edges for a in e.guard)

    def cost(self, obs) -> Fraction:
        return sum((self.predicates[p].cost for p in obs), Fraction(0))

    def observe_point(self, loc: int, point, obs) -> FrozenSet[str]:
        return frozenset(p for p in obs if self.predicates[p].holds(loc, point))

    def invariant_holds(self, loc: int, point) -> bool:
        return all(b.holds(point) for b in self.invariants[loc])

    def guard_holds(self, e: Edge, point) -> bool:
        return all(a.holds(point) for a in e.guard)

    def apply_reset(self, e: Edge, point):
        return tuple(Fraction(0) if i + 1 in e.resets else v for i, v in enumerate(point))

    def fires(self, e: Edge, point) -> bool:
        """Guard holds and the reset valuation satisfies the target invariant."""
        return self.guard_holds(e, point) and self.invariant_holds(e.target, self.apply_reset(e, point))

    def enabled_at(self, loc: int, action: str, point) -> bool:
        return any(e.controllable and e.action == action and self.fires(e, point)
                   for e in self._out[loc])

    def enabling_bands(self, e: Edge) -> Optional[Tuple[Band, ...]]:
        """Bands on the source valuation under which ``e`` can fire, or None if never."""
        out = list(e.guard)
        for b in self.invariants[e.target]:
            if b.clock in e.resets:
                if not b.holds((Fraction(0),) * len(self.clocks)):
                    return None
            else:
                out.append(b)
        return tuple(out)

    def restrict(self, obs) -> "TGAModel":
        """Same model with the predicate catalog cut down to ``obs``."""
        obs = set(obs) | {self.safety}
        preds = {k: v for k, v in self.predicates.items() if k in obs}
        return TGAModel(self.clocks, self.locations, self.initial, self.edges,
                        self.invariants, preds, self.safety, self.name, dict(self.meta))


def enabled_region(m: TGAModel, loc: int, action: str) -> List[DBM]:
    """Union (as a list of zones) where controllable ``action`` can fire from ``loc``."""
    out = []
    inv = DBM.from_constraints(m.dim, m.invariants[loc])
    for e in m.outgoing(loc):
        if not (e.controllable and e.action == action):
            continue
        bands = m.enabling_bands(e)
        if bands is None:
            continue
        z = DBM.from_constraints(m.dim, bands)
        if z is None or inv is None:
            continue
        z = intersect(z, inv)
        if z is not None:
            out.append(z)
    return out
