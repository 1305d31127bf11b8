"""Shared generators and reference oracles for the test suite."""
import itertools
import random
from fractions import Fraction

import numpy as np

from minobs import dbm as D
from minobs.dbm import Band, Bound, ClockSet, bound
from minobs.finite import FiniteGame, FiniteLTS
from minobs.knowledge import NestedGame, build_knowledge_game, solve
from minobs.model import Edge, ObservationPredicate, TGAModel


def random_band(rng, clock, kmax=3, lower_only=False):
    lo = rng.randint(0, kmax - 1)
    if lower_only or rng.random() < 0.3:
        return Band(clock, lo)
    return Band(clock, lo, rng.randint(lo + 1, kmax))


def random_bound(rng, clock, kmax=3):
    k = rng.randint(0, kmax)
    op = rng.choice(["<", "<=", ">", ">="])
    if op == "<" and k == 0:
        op = "<="
    if op == "<":
        return Bound(clock, 0, bound(k, strict=True))
    if op == "<=":
        return Bound(clock, 0, bound(k))
    if op == ">":
        return Bound(0, clock, bound(-k, strict=True))
    return Bound(0, clock, bound(-k))


def random_model(seed, kmax=3):
    """Small TGA with 1-2 clocks, constants <= kmax, 2-4 locations plus BAD, 2-3 predicates.

    Besides random edges, some controllable actions lead to BAD in some
    locations, so the right choice often depends on what is observed.
    """
    rng = random.Random(seed)
    nclocks = rng.randint(1, 2)
    clocks = ClockSet(("x", "y")[:nclocks])
    nloc = rng.randint(2, 4)
    bad = nloc
    invariants = []
    for l in range(nloc):
        inv = ()
        if rng.random() < 0.4:
            inv = (Band(rng.randint(1, nclocks), 0, rng.randint(1, kmax)),)
        invariants.append(inv)
    invariants.append(())
    edges = []
    for _ in range(rng.randint(3, 7)):
        s, t = rng.randrange(nloc), rng.randrange(nloc)
        ctrl = rng.random() < 0.4
        guard = []
        for _ in range(rng.randint(0, 2)):
            c = rng.randint(1, nclocks)
            if ctrl or rng.random() < 0.5:
                guard.append(random_band(rng, c, kmax))
            else:
                guard.append(random_bound(rng, c, kmax))
        resets = frozenset(c for c in range(1, nclocks + 1) if rng.random() < 0.4)
        action = rng.choice(["c1", "c2"]) if ctrl else rng.choice(["u1", "u2"])
        edges.append(Edge(s, t, action, ctrl, tuple(guard), resets))
    for l in range(nloc):
        for action in ("c1", "c2"):
            if rng.random() < 0.4:
                guard = (random_band(rng, rng.randint(1, nclocks), kmax),) if rng.random() < 0.5 else ()
                edges.append(Edge(l, bad, action, True, guard))
        if rng.random() < 0.25:
            edges.append(Edge(l, bad, "u1", False, (random_bound(rng, rng.randint(1, nclocks), kmax),)))
    preds = {}
    safe_locs = frozenset(l for l in range(nloc) if l == 0 or rng.random() < 0.85)
    safe_bands = ()
    if rng.random() < 0.2:
        safe_bands = (Band(rng.randint(1, nclocks), 0, rng.randint(2, kmax)),)
    preds["safe"] = ObservationPredicate("safe", safe_locs, safe_bands)
    for k in range(rng.randint(1, 2)):
        locs = frozenset(l for l in range(nloc + 1) if rng.random() < 0.5)
        bands = ()
        if rng.random() < 0.5:
            bands = (random_band(rng, rng.randint(1, nclocks), kmax),)
        preds[f"p{k}"] = ObservationPredicate(f"p{k}", locs, bands, Fraction(1))
    names = tuple(f"L{i}" for i in range(nloc)) + ("BAD",)
    return TGAModel(clocks, names, 0, tuple(edges), tuple(invariants), preds, "safe", f"random{seed}")


def subsets_with(preds, required):
    others = sorted(set(preds) - {required})
    for r in range(len(others) + 1):
        for combo in itertools.combinations(others, r):
            yield frozenset((required,) + combo)


def random_lts(rng, n, actions=("a", "b"), preds=("p", "q")):
    succ = [[tuple(sorted(rng.sample(range(n), rng.randint(1, min(n, 3))))) for _ in actions]
            for _ in range(n)]
    lts = FiniteLTS(n, actions, succ, 0)
    valuation = {p: [rng.random() < 0.6 for _ in range(n)] for p in preds}
    return lts, valuation


# ---------------------------------------------------------------------------
# Point-sampling oracle for DBM operations.
#
# Valuations are points of a rational grid, stored as integers scaled by
# SCALE.  Step 1/6 (and 1/12 for existential searches) is fine enough for
# every zone over at most two clocks with integer constants: each region has
# a representative whose fractional parts are multiples of 1/3.

SCALE = 12
RANGE = 8


def _grid(n, step, top=RANGE):
    axis = np.arange(0, top * SCALE + 1, step)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


_GRIDS = {}


def grid(n, step=2, top=RANGE):
    key = (n, step, top)
    if key not in _GRIDS:
        _GRIDS[key] = _grid(n, step, top)
    return _GRIDS[key]


def satisfies(points, entries):
    """Mask of points meeting every raw ``(i, j, packed bound)`` entry (0 is the zero clock)."""
    full = np.hstack([np.zeros((len(points), 1), dtype=points.dtype), points])
    ok = np.ones(len(points), dtype=bool)
    for i, j, b in entries:
        if b == D.INF or i == j:
            continue
        diff = full[:, i] - full[:, j]
        c = D.constant(b) * SCALE
        ok &= (diff < c) if D.is_strict(b) else (diff <= c)
    return ok


def entries_of(z):
    if z is None:
        return None
    n = z.dim
    return [(i, j, z.m[i][j]) for i in range(n) for j in range(n) if i != j]


def in_zone(points, z):
    if z is None:
        return np.zeros(len(points), dtype=bool)
    return satisfies(points, entries_of(z))


def random_atoms(rng, n, k=3, count=None):
    out = []
    for _ in range(rng.randint(0, 4) if count is None else count):
        i, j = rng.sample(range(n + 1), 2)
        c = rng.randint(-k, k)
        out.append((i, j, D.bound(c, strict=rng.random() < 0.5)))
    return out


def random_zone(rng, n, k=3):
    atoms = random_atoms(rng, n, k)
    return D.DBM.from_constraints(n + 1, [D.Bound(i, j, b) for i, j, b in atoms]), atoms


def _up_oracle(points, z):
    """Some non-negative delay back from the point lands in ``z``."""
    ts = np.arange(0, RANGE * SCALE + 1)
    back = (points[:, None, :] - ts[None, :, None]).reshape(-1, points.shape[1])
    hit = (back >= 0).all(axis=1) & in_zone(back, z)
    return hit.reshape(len(points), len(ts)).any(axis=1)


def _reset_oracle(points, z, clocks):
    """Point has the reset clocks at 0 and some values for them put it back in ``z``."""
    keep = np.ones(len(points), dtype=bool)
    for x in clocks:
        keep &= points[:, x - 1] == 0
    out = np.zeros(len(points), dtype=bool)
    idx = np.nonzero(keep)[0]
    if len(idx) == 0:
        return out
    # checked points sit on thirds, so sixths always reach into open intervals
    axis = np.arange(0, RANGE * SCALE + 1, 2)
    combos = np.array(list(itertools.product(axis, repeat=len(clocks))))
    cand = np.repeat(points[idx], len(combos), axis=0)
    tiled = np.tile(combos, (len(idx), 1))
    for col, x in enumerate(clocks):
        cand[:, x - 1] = tiled[:, col]
    out[idx] = in_zone(cand, z).reshape(len(idx), len(combos)).any(axis=1)
    return out


def _region_codes(points, maxc):
    """An integer naming the region of each point w.r.t. ``maxc[1:]`` (at most two clocks)."""
    n = points.shape[1]
    code = np.zeros(len(points), dtype=np.int64)
    fr = points % SCALE
    above = points > np.array(maxc[1:n + 1]) * SCALE
    for x in range(n):
        ints = np.where(above[:, x], -1, points[:, x] // SCALE)
        code = code * 64 + (ints + 1)
        code = code * 2 + np.where(above[:, x], 0, fr[:, x] == 0)
    if n == 2:
        both = ~above[:, 0] & ~above[:, 1]
        order = np.sign(fr[:, 0] - fr[:, 1]) + 1
        code = code * 4 + np.where(both, order, 3)
    return code


def dbm_oracle(op, instances, seed=0, k=3):
    """Compare one DBM operation with the grid oracle; returns a list of failures."""
    rng = random.Random(seed)
    failures = []
    for it in range(instances):
        n = rng.randint(1, 2)
        pts = grid(n)
        z, atoms = random_zone(rng, n, k)
        if op == "close":
            want = satisfies(pts, atoms)
            got = in_zone(pts, z)
            ok = (got == want).all() and ((z is None) == (not want.any()))
        elif op == "up":
            # checked on a half-size window so every witness stays inside the search range
            small = grid(n, 4, RANGE // 2)
            want = _up_oracle(small, z)
            ok = (in_zone(small, D.up(z)) == want).all()
        elif op == "reset":
            small = grid(n, 4, RANGE // 2)
            clocks = sorted(rng.sample(range(1, n + 1), rng.randint(1, n)))
            want = _reset_oracle(small, z, clocks)
            ok = (in_zone(small, D.reset(z, clocks)) == want).all()
        elif op == "intersect":
            z2, _ = random_zone(rng, n, k)
            want = in_zone(pts, z) & in_zone(pts, z2)
            got_z = D.intersect(z, z2)
            ok = (in_zone(pts, got_z) == want).all() and ((got_z is None) == (not want.any()))
        elif op == "includes":
            # bias towards related pairs so both answers occur
            z2 = D.intersect(z, random_zone(rng, n, k)[0]) if rng.random() < 0.5 else random_zone(rng, n, k)[0]
            a, b = in_zone(pts, z), in_zone(pts, z2)
            want = not (b & ~a).any()
            ok = D.includes(z, z2) == want
        elif op == "extrapolate":
            maxc = [0] + [rng.randint(0, k) for _ in range(n)]
            e = D.extrapolate(z, maxc)
            # thirds meet every region of two clocks
            coarse = grid(n, 4)
            inside = in_zone(coarse, z)
            ext = in_zone(coarse, e)
            ok = not (inside & ~ext).any()
            if ok and ext.any():
                codes = _region_codes(coarse, maxc)
                ok = bool(np.isin(codes[ext], codes[inside]).all())
        else:
            raise ValueError(op)
        if not ok:
            failures.append((it, n, atoms))
    return failures


# ---------------------------------------------------------------------------
# Brute-force knowledge games over explicit LTS, and a bisimulation checker.

def brute_knowledge(lts, valuation, obs, safety):
    """Subset construction computed level by level over invisible paths.

    Returns ``(beliefs, succ, safe)`` with beliefs as frozensets of states.
    An invisible path of ``n`` steps in an ``n``-state arena repeats a state,
    so a non-empty level ``n`` means a run that never leaves the observation.
    """
    n = lts.n_states

    def seen(s):
        return frozenset(p for p in obs if valuation[p][s])

    start = frozenset([lts.initial])
    beliefs, succ, todo = {start}, {}, [start]
    while todo:
        b = todo.pop()
        for ai, a in enumerate(lts.actions):
            level, visible = set(b), set()
            for _ in range(n):
                nxt = set()
                for s in level:
                    for t in lts.succ[s][ai]:
                        (visible if seen(t) != seen(s) else nxt).add(t)
                level = nxt
            out = set()
            for o in {seen(t) for t in visible}:
                out.add(frozenset(t for t in visible if seen(t) == o))
            if not visible or level:
                out.add(b)
            succ[(b, a)] = out
            for c in out:
                if c not in beliefs:
                    beliefs.add(c)
                    todo.append(c)
    safe = {b: safety in seen(next(iter(b))) for b in beliefs}
    return beliefs, succ, safe


def same_as_brute(kg, lts, valuation, obs, safety):
    beliefs, succ, safe = brute_knowledge(lts, valuation, obs, safety)
    mine = [frozenset(b) for b in kg.beliefs]
    if set(mine) != beliefs or len(mine) != len(beliefs) or mine[0] != {lts.initial}:
        return False
    for i, b in enumerate(mine):
        if kg.safe[i] != safe[b]:
            return False
        for a in lts.actions:
            if {mine[j] for j in kg.successors(i, a)} != succ[(b, a)]:
                return False
    return True


def flatten(nested):
    """Concrete states behind each belief of a knowledge game built on another one."""
    inner = nested.source.kg
    return [frozenset().union(*(inner.beliefs[s] for s in b)) for b in nested.beliefs]


def is_bisimulation(direct, nested):
    """Check that ``{(v, v') | v = union of v'}`` is a bisimulation between two
    complete knowledge games, and that it relates the initial beliefs."""
    flat = flatten(nested)
    partner = {}
    for j, f in enumerate(flat):
        partner.setdefault(f, []).append(j)
    rel = {(i, j) for i, b in enumerate(direct.beliefs) for j in partner.get(frozenset(b), ())}
    if (0, 0) not in rel:
        return False
    for i, j in rel:
        if direct.observation[i] != nested.observation[j] or direct.safe[i] != nested.safe[j]:
            return False
        for a in direct.actions:
            si, sj = direct.successors(i, a), nested.successors(j, a)
            if not all(any((x, y) in rel for y in sj) for x in si):
                return False
            if not all(any((x, y) in rel for x in si) for y in sj):
                return False
    # every reachable belief on either side takes part
    return ({i for i, _ in rel} == set(range(len(direct)))
            and {j for _, j in rel} == set(range(len(nested))))


def all_lts(n, actions=("a", "b")):
    """Every total LTS on ``n`` states with initial state 0."""
    options = [tuple(t for t in range(n) if mask >> t & 1) for mask in range(1, 1 << n)]
    for rows in itertools.product(options, repeat=n * len(actions)):
        k = len(actions)
        yield FiniteLTS(n, actions, [list(rows[s * k:(s + 1) * k]) for s in range(n)], 0)


def all_valuations(n, preds=("p", "q")):
    for bits in itertools.product((False, True), repeat=n * len(preds)):
        yield {p: list(bits[i * n:(i + 1) * n]) for i, p in enumerate(preds)}


def check_knowledge_instance(lts, valuation, safety="p", other="q"):
    """Direct games for both predicate sets against the brute force, then the
    nested coarse game against the direct one.  Returns a list of problems."""
    fine_obs, coarse_obs = {safety, other}, {safety}
    problems = []
    fine = build_knowledge_game(FiniteGame(lts, valuation, fine_obs), safety)
    coarse = build_knowledge_game(FiniteGame(lts, valuation, coarse_obs), safety)
    if not same_as_brute(fine, lts, valuation, fine_obs, safety):
        problems.append("fine game differs from brute force")
    if not same_as_brute(coarse, lts, valuation, coarse_obs, safety):
        problems.append("coarse game differs from brute force")
    for target, direct in ((coarse_obs, coarse), (fine_obs, fine)):
        nested = build_knowledge_game(NestedGame(fine, target), safety)
        if not is_bisimulation(direct, nested):
            problems.append(f"nested {sorted(target)} is not bisimilar")
        elif solve(direct)[0] != solve(nested)[0]:
            problems.append(f"nested {sorted(target)} verdict differs")
    return problems


def zone_region_mismatches(m, obs_sets=None):
    """Observation sets where the zone and the region constructions disagree."""
    from minobs.optimizer import Solver
    zone, region = Solver(m, "zone"), Solver(m, "region")
    out = []
    for obs in obs_sets or subsets_with(m.predicates, m.safety):
        vz = zone.solve(obs)[0].verdict
        vr = region.solve(obs)[0].verdict
        if vz != vr:
            out.append((sorted(obs), vz, vr))
    return out
