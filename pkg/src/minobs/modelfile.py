"""Line-oriented model files.

Grammar (one statement per line, ``#`` starts a comment)::

    model NAME
    param NAME = INT                    # overridable from the command line
    clock NAME [NAME ...]
    var NAME LO..HI [= INIT]            # bounded integer, compiled away
    process NAME
      location NAME [initial] [inv CLOCKCONJ]
      edge SRC -> DST ACTION (controllable|uncontrollable) [when EXPR] [reset X, ...] [do V := EXPR, ...]
    end
    predicate ID [cost Q] : EXPR        # ID may be quoted, e.g. "pos1>=2"
    safety ID

Expressions use Python syntax (``and``, ``or``, ``not``, ``==``, ``<`` ...),
with ``Proc.Loc`` meaning "process Proc is in location Loc".  Bounds of
``var`` and the right-hand sides of ``:=`` may use parameters.  In guards
and predicates, clock atoms ``x < k``, ``x >= k``, ``k1 <= x < k2`` (and, for
uncontrollable guards only, ``<=``, ``>``, ``==`` and ``x - y ~ k``) must be
top-level conjuncts; everything else is a condition on locations and
variables.  Integer variables and processes are compiled into one flat
location per reachable (process locations, variable values) combination.
"""
from __future__ import annotations

import ast
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .dbm import Band, Bound, ClockSet, bound
from .finite import ModelError
from .model import Edge, ObservationPredicate, TGAModel


class ModelSyntaxError(ModelError):
    def __init__(self, msg, line=None, col=None, source="<model>"):
        self.msg, self.line, self.col, self.source = msg, line, col, source
        where = source
        if line is not None:
            where += f":{line}"
            if col is not None:
                where += f":{col}"
        super().__init__(f"{where}: {msg}")


@dataclass
class _Loc:
    name: str
    inv: list
    line: int


@dataclass
class _Edge:
    src: str
    dst: str
    action: str
    controllable: bool
    clock_guard: list
    data_guard: Optional[ast.AST]
    resets: List[str]
    updates: List[Tuple[str, ast.AST]]
    line: int


@dataclass
class _Proc:
    name: str
    locations: Dict[str, _Loc] = field(default_factory=dict)
    initial: Optional[str] = None
    edges: List[_Edge] = field(default_factory=list)


@dataclass
class _Pred:
    id: str
    cost: Fraction
    clock: list
    data: Optional[ast.AST]
    line: int


_CMP = {ast.Lt: "<", ast.LtE: "<=", ast.Gt: ">", ast.GtE: ">=", ast.Eq: "==", ast.NotEq: "!="}
_FLIP = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}


class _Parser:
    def __init__(self, text: str, source: str, params: Dict[str, int]):
        self.text = text
        self.source = source
        self.overrides = dict(params or {})
        self.params: Dict[str, int] = {}
        self.name = "model"
        self.clocks: List[str] = []
        self.vars: Dict[str, Tuple[int, int, int]] = {}
        self.procs: List[_Proc] = []
        self.preds: List[_Pred] = []
        self.safety: Optional[str] = None
        self.safety_line = None

    def err(self, msg, line=None, col=None):
        return ModelSyntaxError(msg, line, col, self.source)

    # --- lexical helpers ------------------------------------------------

    def expr(self, src: str, line: int, col: int) -> ast.AST:
        try:
            tree = ast.parse(src.strip(), mode="eval")
        except SyntaxError as e:
            c = col + (e.offset or 1) - 1 + (len(src) - len(src.lstrip()))
            raise self.err(f"invalid expression: {e.msg}", line, c) from None
        tree._line, tree._col = line, col
        return tree.body

    def const(self, src: str, line: int, col: int) -> int:
        node = self.expr(src, line, col)
        try:
            v = self.eval(node, {}, params_only=True)
        except ModelError as e:
            raise self.err(str(e), line, col) from None
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.err("integer constant expected", line, col)
        return v

    # --- statements -----------------------------------------------------

    def parse(self):
        proc = None
        seen_names = set()
        for lineno, raw in enumerate(self.text.splitlines(), 1):
            text = raw.split("#", 1)[0].rstrip()
            if not text.strip():
                continue
            col = len(text) - len(text.lstrip()) + 1
            stmt = text.strip()
            word, _, rest = stmt.partition(" ")
            rest_col = col + len(word) + 1 + (len(rest) - len(rest.lstrip()))
            rest = rest.strip()
            if proc is not None and word not in ("location", "edge", "end"):
                raise self.err(f"'{word}' not allowed inside process {proc.name} (missing 'end'?)", lineno, col)
            if word == "model":
                self.name = rest or "model"
            elif word == "param":
                m = re.fullmatch(r"([A-Za-z_]\w*)\s*=\s*(.+)", rest)
                if not m:
                    raise self.err("expected 'param NAME = INT'", lineno, rest_col)
                name = m.group(1)
                val = self.overrides[name] if name in self.overrides else \
                    self.const(m.group(2), lineno, rest_col + m.start(2))
                self.params[name] = val
            elif word == "clock":
                for name in rest.replace(",", " ").split():
                    self._fresh(name, seen_names, lineno, rest_col)
                    self.clocks.append(name)
                if not rest:
                    raise self.err("expected clock names", lineno, rest_col)
            elif word == "var":
                m = re.fullmatch(r"([A-Za-z_]\w*)\s+(.+?)\s*\.\.\s*(.+?)(?:\s*=\s*(.+))?", rest)
                if not m:
                    raise self.err("expected 'var NAME LO..HI [= INIT]'", lineno, rest_col)
                name = m.group(1)
                self._fresh(name, seen_names, lineno, rest_col)
                lo = self.const(m.group(2), lineno, rest_col + m.start(2))
                hi = self.const(m.group(3), lineno, rest_col + m.start(3))
                init = self.const(m.group(4), lineno, rest_col + m.start(4)) if m.group(4) else lo
                if not lo <= init <= hi:
                    raise self.err(f"initial value {init} outside {lo}..{hi}", lineno, rest_col)
                self.vars[name] = (lo, hi, init)
            elif word == "process":
                if not re.fullmatch(r"[A-Za-z_]\w*", rest):
                    raise self.err("expected 'process NAME'", lineno, rest_col)
                self._fresh(rest, seen_names, lineno, rest_col)
                proc = _Proc(rest)
                proc.line = lineno
                self.procs.append(proc)
            elif word == "end":
                if proc is None:
                    raise self.err("'end' without 'process'", lineno, col)
                if proc.initial is None:
                    raise self.err(f"process {proc.name} has no initial location", lineno, col)
                proc = None
            elif word == "location":
                if proc is None:
                    raise self.err("'location' outside a process", lineno, col)
                self._location(proc, rest, lineno, rest_col)
            elif word == "edge":
                if proc is None:
                    raise self.err("'edge' outside a process", lineno, col)
                proc.edges.append(self._edge(rest, lineno, rest_col))
            elif word == "predicate":
                self.preds.append(self._predicate(rest, lineno, rest_col))
            elif word == "safety":
                if not rest:
                    raise self.err("expected 'safety ID'", lineno, rest_col)
                self.safety = _unquote(rest)
                self.safety_line = lineno
            else:
                raise self.err(f"unknown statement '{word}'", lineno, col)
        if proc is not None:
            raise self.err(f"process {proc.name} is not closed with 'end'")
        if not self.procs:
            raise self.err("no process defined")
        if self.safety is None:
            raise self.err("missing 'safety' statement")

    def _fresh(self, name, seen, line, col):
        if not re.fullmatch(r"[A-Za-z_]\w*", name):
            raise self.err(f"bad identifier {name!r}", line, col)
        if name in seen or name in self.params:
            raise self.err(f"duplicate name {name!r}", line, col)
        seen.add(name)

    def _location(self, proc, rest, line, col):
        m = re.fullmatch(r"([A-Za-z_]\w*)((?:\s+initial)?)(?:\s+inv\s+(.+))?", rest)
        if not m:
            raise self.err("expected 'location NAME [initial] [inv CONSTRAINTS]'", line, col)
        name = m.group(1)
        if name in proc.locations:
            raise self.err(f"duplicate location {name!r} in {proc.name}", line, col)
        inv = []
        if m.group(3):
            node = self.expr(m.group(3), line, col + m.start(3))
            clock, data = self.split_conj(node, line, col + m.start(3))
            if data is not None:
                raise self.err("invariants may only constrain clocks", line, col + m.start(3))
            for a in clock:
                if not isinstance(a, Band):
                    raise self.err("invariant atoms must be of the form k1 <= x < k2", line, col + m.start(3))
            inv = clock
        proc.locations[name] = _Loc(name, inv, line)
        if m.group(2).strip():
            if proc.initial is not None:
                raise self.err(f"second initial location in {proc.name}", line, col)
            proc.initial = name

    def _edge(self, rest, line, col):
        m = re.match(r"([A-Za-z_]\w*)\s*->\s*([A-Za-z_]\w*)\s+([A-Za-z_]\w*)\s+(controllable|uncontrollable)\b", rest)
        if not m:
            raise self.err("expected 'edge SRC -> DST ACTION controllable|uncontrollable ...'", line, col)
        src, dst, action, kind = m.groups()
        tail = rest[m.end():]
        tail_col = col + m.end()
        parts = {}
        for km in re.finditer(r"\b(when|reset|do)\b", tail):
            parts[km.group(1)] = km.start()
        keys = sorted(parts, key=parts.get)
        lead = tail[:parts[keys[0]]] if keys else tail
        if lead.strip():
            raise self.err(f"unexpected text {lead.strip()!r}", line, tail_col + len(lead) - len(lead.lstrip()))
        sections = {}
        for i, k in enumerate(keys):
            start = parts[k] + len(k)
            end = parts[keys[i + 1]] if i + 1 < len(keys) else len(tail)
            sections[k] = (tail[start:end], tail_col + start)
        clock, data = [], None
        if "when" in sections:
            s, c = sections["when"]
            clock, data = self.split_conj(self.expr(s, line, c), line, c)
        resets = []
        if "reset" in sections:
            s, c = sections["reset"]
            resets = [r.strip() for r in s.split(",") if r.strip()]
            for r in resets:
                if r not in self.clocks:
                    raise self.err(f"unknown clock {r!r} in reset", line, c)
        updates = []
        if "do" in sections:
            s, c = sections["do"]
            for piece in s.split(","):
                um = re.fullmatch(r"\s*([A-Za-z_]\w*)\s*:=\s*(.+?)\s*", piece)
                if not um:
                    raise self.err("expected 'VAR := EXPR'", line, c)
                if um.group(1) not in self.vars:
                    raise self.err(f"unknown variable {um.group(1)!r}", line, c)
                updates.append((um.group(1), self.expr(um.group(2), line, c)))
                c += len(piece) + 1
        return _Edge(src, dst, action, kind == "controllable", clock, data, resets, updates, line)

    def _predicate(self, rest, line, col):
        m = re.fullmatch(r'("[^"]*"|\S+)(?:\s+cost\s+(\S+))?\s*:\s*(.+)', rest)
        if not m:
            raise self.err("expected 'predicate ID [cost Q] : EXPR'", line, col)
        pid = _unquote(m.group(1))
        if any(p.id == pid for p in self.preds):
            raise self.err(f"duplicate predicate {pid!r}", line, col)
        cost = Fraction(0)
        if m.group(2):
            try:
                cost = Fraction(m.group(2))
            except (ValueError, ZeroDivisionError):
                raise self.err(f"bad cost {m.group(2)!r}", line, col + m.start(2)) from None
            if cost < 0:
                raise self.err(f"predicate {pid!r}: negative cost", line, col + m.start(2))
        node = self.expr(m.group(3), line, col + m.start(3))
        clock, data = self.split_conj(node, line, col + m.start(3))
        for a in clock:
            if not isinstance(a, Band):
                raise self.err(f"predicate {pid!r}: clock atoms must be of the form k1 <= x < k2",
                               line, col + m.start(3))
        return _Pred(pid, cost, clock, data, line)

    # --- expressions ----------------------------------------------------

    def mentions_clock(self, node) -> bool:
        return any(isinstance(n, ast.Name) and n.id in self.clocks for n in ast.walk(node))

    def split_conj(self, node, line, col):
        """Top-level conjuncts split into clock atoms and one data condition (or None)."""
        conj = node.values if isinstance(node, ast.BoolOp) and isinstance(node.op, ast.And) else [node]
        clock, data = [], []
        for c in conj:
            if self.mentions_clock(c):
                clock.extend(self.clock_atoms(c, line, col))
            else:
                data.append(c)
        if not data:
            return clock, None
        if len(data) == 1:
            return clock, data[0]
        return clock, ast.BoolOp(op=ast.And(), values=data)

    def clock_atoms(self, node, line, col):
        c = col + getattr(node, "col_offset", 0)
        if not isinstance(node, ast.Compare):
            raise self.err("clock constraints must be top-level comparisons", line, c)
        terms = [node.left] + list(node.comparators)
        ops = [_CMP.get(type(o)) for o in node.ops]
        if None in ops or "!=" in ops:
            raise self.err("unsupported clock comparison", line, c)
        if len(ops) == 2 and ops[0] in ("<=",) and ops[1] == "<":
            x = self.clock_of(terms[1], line, c)
            lo = self.param_int(terms[0], line, c)
            hi = self.param_int(terms[2], line, c)
            if x is None or lo < 0 or hi <= lo:
                raise self.err("expected k1 <= x < k2 with 0 <= k1 < k2", line, c)
            return [Band(x, lo, hi)]
        out = []
        for l, op, r in zip(terms, ops, terms[1:]):
            out.extend(self.simple_atom(l, op, r, line, c))
        return out

    def clock_of(self, node, line, col):
        if isinstance(node, ast.Name) and node.id in self.clocks:
            return self.clocks.index(node.id) + 1
        return None

    def param_int(self, node, line, col):
        try:
            v = self.eval(node, {}, params_only=True)
        except ModelError as e:
            raise self.err(str(e), line, col) from None
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.err("integer constant expected in a clock constraint", line, col)
        return v

    def simple_atom(self, l, op, r, line, col):
        # normalise to (x [- y]) op k
        if self.clock_of(l, line, col) is None and not isinstance(l, ast.BinOp):
            l, r, op = r, l, _FLIP[op]
        k = self.param_int(r, line, col)
        if isinstance(l, ast.BinOp) and isinstance(l.op, ast.Sub):
            i, j = self.clock_of(l.left, line, col), self.clock_of(l.right, line, col)
            if i is None or j is None:
                raise self.err("expected x - y ~ k", line, col)
        else:
            i, j = self.clock_of(l, line, col), 0
            if i is None:
                raise self.err("expected a clock on one side of the comparison", line, col)
        if j == 0 and k >= 0:
            if op == ">=":
                return [Band(i, k)]
            if op == "<" and k > 0:
                return [Band(i, 0, k)]
        if j == 0 and k < 0:
            raise self.err("clock constants must be non-negative", line, col)
        if op == "<":
            return [Bound(i, j, bound(k, strict=True))]
        if op == "<=":
            return [Bound(i, j, bound(k))]
        if op == ">":
            return [Bound(j, i, bound(-k, strict=True))]
        if op == ">=":
            return [Bound(j, i, bound(-k))]
        return [Bound(i, j, bound(k)), Bound(j, i, bound(-k))]

    def eval(self, node, env, params_only=False):
        """Evaluate a data expression; ``env`` maps variables and ``(proc, loc)`` pairs."""
        if isinstance(node, ast.Constant):
            if isinstance(node.value, (bool, int)):
                return node.value
            raise ModelError(f"unsupported constant {node.value!r}")
        if isinstance(node, ast.Name):
            if node.id in ("true", "True"):
                return True
            if node.id in ("false", "False"):
                return False
            if node.id in self.params:
                return self.params[node.id]
            if not params_only and node.id in env:
                return env[node.id]
            raise ModelError(f"unknown name {node.id!r}")
        if isinstance(node, ast.Attribute) and isinstance(node.value, ast.Name):
            if params_only:
                raise ModelError("location tests are not constants")
            key = (node.value.id, node.attr)
            if key not in env:
                raise ModelError(f"unknown location {node.value.id}.{node.attr}")
            return env[key]
        if isinstance(node, ast.BoolOp):
            vals = [self.eval(v, env, params_only) for v in node.values]
            return all(vals) if isinstance(node.op, ast.And) else any(vals)
        if isinstance(node, ast.UnaryOp):
            v = self.eval(node.operand, env, params_only)
            if isinstance(node.op, ast.Not):
                return not v
            if isinstance(node.op, ast.USub):
                return -v
        if isinstance(node, ast.BinOp):
            a = self.eval(node.left, env, params_only)
            b = self.eval(node.right, env, params_only)
            ops = {ast.Add: lambda: a + b, ast.Sub: lambda: a - b, ast.Mult: lambda: a * b,
                   ast.FloorDiv: lambda: a // b, ast.Mod: lambda: a % b}
            f = ops.get(type(node.op))
            if f:
                return f()
        if isinstance(node, ast.Compare):
            left = self.eval(node.left, env, params_only)
            for op, right in zip(node.ops, node.comparators):
                r = self.eval(right, env, params_only)
                sym = _CMP.get(type(op))
                ok = {"<": left < r, "<=": left <= r, ">": left > r, ">=": left >= r,
                      "==": left == r, "!=": left != r}.get(sym)
                if not ok:
                    return False
                left = r
            return True
        if isinstance(node, ast.IfExp):
            return self.eval(node.body if self.eval(node.test, env, params_only) else node.orelse,
                             env, params_only)
        raise ModelError(f"unsupported expression {ast.unparse(node)!r}")

    # --- compilation ----------------------------------------------------

    def compile(self) -> TGAModel:
        procs = self.procs
        varnames = sorted(self.vars)
        for p in procs:
            for e in p.edges:
                for end in (e.src, e.dst):
                    if end not in p.locations:
                        raise self.err(f"unknown location {end!r} in process {p.name}", e.line)

        def env_of(state):
            locs, vals = state
            env = dict(zip(varnames, vals))
            for p, l in zip(procs, locs):
                for name in p.locations:
                    env[(p.name, name)] = name == l
            return env

        def check(node, env, line):
            try:
                return self.eval(node, env)
            except ModelError as e:
                raise self.err(str(e), line) from None
            except ZeroDivisionError:
                raise self.err("division by zero", line) from None

        start = (tuple(p.initial for p in procs), tuple(self.vars[v][2] for v in varnames))
        index = {start: 0}
        states = [start]
        edges = []
        queue = deque([start])
        while queue:
            st = queue.popleft()
            env = env_of(st)
            for pi, p in enumerate(procs):
                for e in p.edges:
                    if e.src != st[0][pi]:
                        continue
                    if e.data_guard is not None and not check(e.data_guard, env, e.line):
                        continue
                    vals = dict(zip(varnames, st[1]))
                    for v, rhs in e.updates:
                        vals[v] = check(rhs, env, e.line)
                    for v in varnames:
                        lo, hi, _ = self.vars[v]
                        if isinstance(vals[v], bool) or not lo <= vals[v] <= hi:
                            raise self.err(f"update makes {v} = {vals[v]} leave {lo}..{hi}", e.line)
                    locs = list(st[0])
                    locs[pi] = e.dst
                    nxt = (tuple(locs), tuple(vals[v] for v in varnames))
                    if nxt not in index:
                        index[nxt] = len(states)
                        states.append(nxt)
                        queue.append(nxt)
                    edges.append((index[st], index[nxt], e))

        clocks = ClockSet(tuple(self.clocks))
        names = []
        invariants = []
        for locs, vals in states:
            parts = [f"{p.name}.{l}" for p, l in zip(procs, locs)]
            parts += [f"{v}={x}" for v, x in zip(varnames, vals)]
            names.append(",".join(parts))
            invariants.append(tuple(a for p, l in zip(procs, locs) for a in p.locations[l].inv))
        flat = []
        for s, t, e in edges:
            if e.controllable:
                bad = [a for a in e.clock_guard if not isinstance(a, Band)]
                if bad:
                    raise self.err(
                        f"controllable edge {e.action}: guard must be a conjunction of k1 <= x < k2 bands",
                        e.line)
            resets = frozenset(self.clocks.index(r) + 1 for r in e.resets)
            flat.append(Edge(s, t, e.action, e.controllable, tuple(e.clock_guard), resets))
        preds = {}
        for p in self.preds:
            locs = frozenset(i for i, st in enumerate(states)
                             if p.data is None or check(p.data, env_of(st), p.line))
            preds[p.id] = ObservationPredicate(p.id, locs, tuple(p.clock), p.cost)
        if self.safety not in preds:
            raise self.err(f"safety predicate {self.safety!r} missing from the catalog", self.safety_line)
        meta = {"params": dict(self.params), "source": self.source}
        try:
            return TGAModel(clocks, tuple(names), 0, tuple(flat), tuple(invariants), preds,
                            self.safety, self.name, meta)
        except ModelError as e:
            raise self.err(str(e)) from None


def _unquote(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] == '"':
        return s[1:-1]
    return s


def parse_model_text(text: str, params: Optional[Dict[str, int]] = None, source: str = "<model>") -> TGAModel:
    p = _Parser(text, source, params or {})
    p.parse()
    unknown = set(p.overrides) - set(p.params)
    if unknown:
        raise ModelError(f"unknown parameters {sorted(unknown)}")
    return p.compile()


def parse_model(path, params: Optional[Dict[str, int]] = None) -> TGAModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ModelError(f"cannot read {path}: {e.strerror}") from None
    return parse_model_text(text, params, str(path))


BUNDLED = ("traingate", "lightheavy")


def bundled_path(name: str) -> Path:
    if name not in BUNDLED:
        raise ModelError(f"unknown bundled model {name!r}; choose from {', '.join(BUNDLED)}")
    return Path(__file__).parent / "models" / f"{name}.tga"


def load_model(name_or_path: str, params: Optional[Dict[str, int]] = None) -> TGAModel:
    """A bundled model name or a path to a model file."""
    if name_or_path in BUNDLED:
        return parse_model(bundled_path(name_or_path), params)
    return parse_model(name_or_path, params)
