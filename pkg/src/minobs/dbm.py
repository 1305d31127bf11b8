"""Difference bound matrices over a fixed clock set.

Clock index 0 is the constant-zero reference clock; model clocks are 1..n.
Entry ``m[i][j]`` bounds ``x_i - x_j``.  A bound is packed into one integer
``(c << 1) | nonstrict`` so that comparing packed values orders bounds
correctly: ``(c, <) < (c, <=) < (c + 1, <)``.

All operations are pure.  An empty zone is represented by ``None``.
"""
from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

INF = 1 << 62
LE_ZERO = 1  # (0, <=)
LT_ZERO = 0  # (0, <)


def bound(c: int, strict: bool = False) -> int:
    return (c << 1) | (0 if strict else 1)


def constant(b: int) -> int:
    return b >> 1


def is_strict(b: int) -> bool:
    return not (b & 1)


def add(a: int, b: int) -> int:
    if a == INF or b == INF:
        return INF
    return (((a >> 1) + (b >> 1)) << 1) | (a & b & 1)


def negate(b: int) -> int:
    """Bound for the complementary half-plane: not (x <= c) is (-x < -c)."""
    return ((-(b >> 1)) << 1) | (0 if b & 1 else 1)


def format_bound(b: int) -> str:
    if b == INF:
        return "<inf"
    return ("<" if is_strict(b) else "<=") + str(constant(b))


class ClockSet:
    """Ordered clock names; index 0 is reserved for the reference clock."""

    def __init__(self, names: Sequence[str]):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate clock names in {names}")
        if "0" in names:
            raise ValueError("'0' is reserved for the reference clock")
        self.names = names
        self._index = {name: i + 1 for i, name in enumerate(names)}

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __eq__(self, other):
        return isinstance(other, ClockSet) and other.names == self.names

    def __hash__(self):
        return hash(self.names)

    def __repr__(self):
        return f"ClockSet({list(self.names)})"

    @property
    def dim(self) -> int:
        return len(self.names) + 1

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown clock {name!r}") from None

    def name(self, i: int) -> str:
        return "0" if i == 0 else self.names[i - 1]


# --------------------------------------------------------------------------
# Atomic constraints
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Bound:
    """``x_i - x_j`` bounded by the packed bound ``b`` (``j == 0`` for ``x_i ~ k``)."""
    i: int
    j: int
    b: int

    def constraints(self):
        return (self,)

    def holds(self, point) -> bool:
        return _holds(point, self.i, self.j, self.b)

    @property
    def is_diagonal(self) -> bool:
        return self.i != 0 and self.j != 0

    def constants(self):
        if self.b != INF:
            yield abs(constant(self.b))


@dataclass(frozen=True)
class Band:
    """The B(X) atom ``lo <= x < hi``; ``hi`` is ``None`` for an unbounded band."""
    clock: int
    lo: int
    hi: Optional[int] = None

    def __post_init__(self):
        if self.lo < 0 or (self.hi is not None and self.hi <= self.lo):
            raise ValueError(f"malformed band {self.lo} <= x{self.clock} < {self.hi}")

    def constraints(self):
        out = [Bound(0, self.clock, bound(-self.lo))]
        if self.hi is not None:
            out.append(Bound(self.clock, 0, bound(self.hi, strict=True)))
        return tuple(out)

    def holds(self, point) -> bool:
        v = point[self.clock - 1]
        return v >= self.lo and (self.hi is None or v < self.hi)

    def thresholds(self):
        yield self.lo
        if self.hi is not None:
            yield self.hi

    def constants(self):
        return self.thresholds()


def _holds(point, i, j, b) -> bool:
    if b == INF:
        return True
    vi = point[i - 1] if i else 0
    vj = point[j - 1] if j else 0
    c = constant(b)
    return vi - vj < c if is_strict(b) else vi - vj <= c


# --------------------------------------------------------------------------
# The matrix
# --------------------------------------------------------------------------

class DBM:
    __slots__ = ("m", "_hash")

    def __init__(self, rows):
        self.m = tuple(tuple(r) for r in rows)
        self._hash = None

    @property
    def dim(self) -> int:
        return len(self.m)

    def __eq__(self, other):
        return isinstance(other, DBM) and self.m == other.m

    def __lt__(self, other):
        return self.m < other.m

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.m)
        return self._hash

    def __repr__(self):
        return f"DBM({self.describe()})"

    def describe(self, clocks: Optional[ClockSet] = None) -> str:
        n = self.dim
        name = (lambda i: clocks.name(i)) if clocks else (lambda i: "0" if i == 0 else f"x{i}")
        parts = []
        for i in range(n):
            for j in range(n):
                if i == j or self.m[i][j] == INF:
                    continue
                if i == 0 and self.m[0][j] == LE_ZERO:
                    continue
                if i == 0:
                    b = self.m[0][j]
                    parts.append(f"{name(j)}{'>' if is_strict(b) else '>='}{-constant(b)}")
                elif j == 0:
                    parts.append(f"{name(i)}{format_bound(self.m[i][0])}")
                else:
                    parts.append(f"{name(i)}-{name(j)}{format_bound(self.m[i][j])}")
        return ", ".join(parts) or "true"

    # constructors -----------------------------------------------------

    @classmethod
    def universe(cls, dim: int) -> "DBM":
        """All non-negative valuations."""
        rows = [[INF] * dim for _ in range(dim)]
        for j in range(dim):
            rows[0][j] = LE_ZERO
            rows[j][j] = LE_ZERO
        return cls(rows)

    @classmethod
    def zero(cls, dim: int) -> "DBM":
        return cls([[LE_ZERO] * dim for _ in range(dim)])

    @classmethod
    def from_constraints(cls, dim: int, constraints: Iterable) -> Optional["DBM"]:
        rows = [list(r) for r in cls.universe(dim).m]
        for atom in constraints:
            for c in atom.constraints():
                if c.b < rows[c.i][c.j]:
                    rows[c.i][c.j] = c.b
        return _close(rows)

    # queries ------------------------------------------------------------

    def contains(self, point) -> bool:
        """Raw evaluation of every matrix entry on a valuation of clocks 1..n."""
        n = self.dim
        if any(v < 0 for v in point):
            return False
        for i in range(n):
            for j in range(n):
                if i != j and not _holds(point, i, j, self.m[i][j]):
                    return False
        return True

    def upper(self, i: int) -> int:
        return self.m[i][0]

    def lower(self, i: int) -> int:
        """Packed bound on ``-x_i``."""
        return self.m[0][i]

    def is_time_unbounded(self) -> bool:
        return all(self.m[i][0] == INF for i in range(1, self.dim))


def _close(rows) -> Optional[DBM]:
    """Floyd-Warshall closure in place; None when a negative cycle exists."""
    n = len(rows)
    for k in range(n):
        rk = rows[k]
        for i in range(n):
            ri = rows[i]
            rik = ri[k]
            if rik == INF or i == k:
                continue
            ci, si = rik >> 1, rik & 1
            for j in range(n):
                rkj = rk[j]
                if rkj == INF:
                    continue
                v = ((ci + (rkj >> 1)) << 1) | (si & rkj & 1)
                if v < ri[j]:
                    ri[j] = v
        if rk[k] < LE_ZERO:
            return None
    for i in range(n):
        if rows[i][i] < LE_ZERO:
            return None
    return DBM(rows)


def _tighten(rows, i, j, b) -> bool:
    """Conjoin ``x_i - x_j ~ b`` to closed ``rows`` in O(n^2); False when empty."""
    if b >= rows[i][j]:
        return True
    if add(rows[j][i], b) < LE_ZERO:
        return False
    n = len(rows)
    rows[i][j] = b
    rj = rows[j]
    for p in range(n):
        rp = rows[p]
        rpi = rp[i]
        if rpi == INF:
            continue
        pb = add(rpi, b)
        cp, sp = pb >> 1, pb & 1
        for q in range(n):
            rjq = rj[q]
            if rjq == INF:
                continue
            v = ((cp + (rjq >> 1)) << 1) | (sp & rjq & 1)
            if v < rp[q]:
                rp[q] = v
    return True


def canonicalize(d: Optional[DBM]) -> Optional[DBM]:
    if d is None:
        return None
    return _close([list(r) for r in d.m])


def up(d: Optional[DBM]) -> Optional[DBM]:
    """Future closure: drop upper bounds of every clock."""
    if d is None:
        return None
    rows = [list(r) for r in d.m]
    for i in range(1, len(rows)):
        rows[i][0] = INF
    return DBM(rows)


def reset(d: Optional[DBM], clocks: Iterable[int]) -> Optional[DBM]:
    if d is None:
        return None
    rows = [list(r) for r in d.m]
    n = len(rows)
    for x in clocks:
        for j in range(n):
            rows[x][j] = rows[0][j]
            rows[j][x] = rows[j][0]
        rows[x][x] = LE_ZERO
    return DBM(rows)


def intersect(d: Optional[DBM], other) -> Optional[DBM]:
    """Conjunction with a DBM, a Cell, an atom, or an iterable of atoms."""
    if d is None or other is None:
        return None
    if isinstance(other, Cell):
        other = other.zone
    if isinstance(other, DBM):
        changes = [(i, j, b) for i, (ra, rb) in enumerate(zip(d.m, other.m))
                   for j, (a, b) in enumerate(zip(ra, rb)) if b < a]
    else:
        atoms = other.constraints() if hasattr(other, "constraints") else \
            [c for a in other for c in a.constraints()]
        changes = [(c.i, c.j, c.b) for c in atoms if c.b < d.m[c.i][c.j]]
    if not changes:
        return d
    rows = [list(r) for r in d.m]
    if len(changes) > len(rows):
        for i, j, b in changes:
            if b < rows[i][j]:
                rows[i][j] = b
        return _close(rows)
    for i, j, b in changes:
        if not _tighten(rows, i, j, b):
            return None
    return DBM(rows)


def includes(d1: Optional[DBM], d2: Optional[DBM]) -> bool:
    """True iff every valuation of ``d2`` lies in ``d1``."""
    if d2 is None:
        return True
    if d1 is None:
        return False
    return all(b <= a for ra, rb in zip(d1.m, d2.m) for a, b in zip(ra, rb))


def extrapolate(d: Optional[DBM], maxconst: Sequence[int]) -> Optional[DBM]:
    """Max-constant abstraction (one relaxation pass, then closure); ``maxconst[0]`` must be 0."""
    if d is None:
        return None
    rows = [list(r) for r in d.m]
    n = len(rows)
    changed = False
    for i in range(n):
        for j in range(n):
            b = rows[i][j]
            if i == j or b == INF:
                continue
            c = constant(b)
            if c > maxconst[i]:
                rows[i][j] = INF
                changed = True
            elif -c > maxconst[j]:
                rows[i][j] = bound(-maxconst[j], strict=True)
                changed = True
    if not changed:
        return d
    return _close(rows)


# --------------------------------------------------------------------------
# Observation cells
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    """One box of the threshold partition; per clock ``lo <= x < hi``."""
    id: tuple
    bands: tuple  # Band per clock, clock order 1..n
    zone: DBM

    @property
    def constraint(self):
        return self.bands

    def contains(self, point) -> bool:
        return all(b.holds(point) for b in self.bands)

    def corner(self):
        """The least valuation of the cell."""
        return tuple(Fraction(b.lo) for b in self.bands)

    def is_top(self) -> bool:
        return all(b.hi is None for b in self.bands)


def closure_relax(c: Cell) -> DBM:
    """Topological closure of a cell: strict upper bounds become non-strict."""
    atoms = []
    for b in c.bands:
        atoms.append(Bound(0, b.clock, bound(-b.lo)))
        if b.hi is not None:
            atoms.append(Bound(b.clock, 0, bound(b.hi)))
    return DBM.from_constraints(c.zone.dim, atoms)


class Grid:
    """Threshold partition of the valuation space, materialized lazily."""

    def __init__(self, dim: int, thresholds: Sequence[Iterable[int]]):
        # thresholds[k] are the breakpoints of clock k+1
        self.dim = dim
        self.breaks = tuple(tuple(sorted(set(t) | {0})) for t in thresholds)
        if len(self.breaks) != dim - 1:
            raise ValueError("one threshold set per clock expected")
        self._cells = {}

    @classmethod
    def from_atoms(cls, atoms: Iterable[Band], clocks: ClockSet) -> "Grid":
        thresholds = [set() for _ in clocks.names]
        for a in atoms:
            if not isinstance(a, Band):
                raise ValueError(f"observation atom {a!r} is not of the form k1 <= x < k2")
            thresholds[a.clock - 1].update(a.thresholds())
        return cls(clocks.dim, thresholds)

    def cell(self, idx: tuple) -> Cell:
        c = self._cells.get(idx)
        if c is None:
            bands = []
            for k, (i, br) in enumerate(zip(idx, self.breaks)):
                hi = br[i + 1] if i + 1 < len(br) else None
                bands.append(Band(k + 1, br[i], hi))
            zone = DBM.from_constraints(self.dim, bands)
            c = self._cells[idx] = Cell(idx, tuple(bands), zone)
        return c

    def cell_of(self, point) -> Cell:
        idx = tuple(bisect.bisect_right(br, v) - 1 for br, v in zip(self.breaks, point))
        return self.cell(idx)

    def all_cells(self):
        for idx in itertools.product(*(range(len(br)) for br in self.breaks)):
            yield self.cell(idx)

    def split(self, d: Optional[DBM]):
        """Yield ``(cell, d & cell)`` for every cell meeting ``d``."""
        if d is None:
            return
        ranges = []
        for k, br in enumerate(self.breaks):
            i = k + 1
            lo = -constant(d.m[0][i])
            up_b = d.m[i][0]
            first = max(bisect.bisect_right(br, lo) - 1, 0)
            if up_b == INF:
                last = len(br) - 1
            else:
                last = bisect.bisect_right(br, constant(up_b)) - 1
                if is_strict(up_b) and br[last] == constant(up_b):
                    last -= 1
            ranges.append(range(first, last + 1))
        for idx in itertools.product(*ranges):
            c = self.cell(idx)
            z = intersect(d, c.zone)
            if z is not None:
                yield c, z

    def neighbours(self, idx: tuple, zone: Optional[DBM] = None):
        """Cells reachable from ``idx`` by letting time cross thresholds.

        With ``zone`` (inside the closure of the cell) only axes whose upper
        threshold the zone touches may be crossed.
        """
        options = []
        for k, (i, br) in enumerate(zip(idx, self.breaks)):
            can = i + 1 < len(br)
            if can and zone is not None:
                can = zone.m[k + 1][0] >= bound(br[i + 1])
            options.append((i, i + 1) if can else (i,))
        for nxt in itertools.product(*options):
            if nxt != idx:
                yield self.cell(nxt)


def enumerate_cells(preds: Iterable, clocks: ClockSet):
    """The partition induced by the truth values of B(X) atoms, in index order."""
    atoms = []
    for p in preds:
        atoms.extend(p if isinstance(p, (tuple, list)) else [p])
    return list(Grid.from_atoms(atoms, clocks).all_cells())
