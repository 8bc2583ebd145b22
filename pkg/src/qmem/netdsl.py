"""A small line-oriented language for cavity networks.

Example::

    # plant and controller in the writing configuration
    param gamma = 1
    cavity p couplings [gamma/2, gamma/2]
    cavity c couplings [gamma/2, gamma/2]
    connect p.out1 -> c.in2
    connect c.out2 -> p.in2
    connect p.out2 -> c.in1
    input p.in1
    output c.out1

Couplings are mirror decay rates.  Ports are ``name.inJ`` / ``name.outJ``
(1-based).  Free ports not listed with ``input``/``output`` are an error
once any external port is declared; with no declarations all free ports
are external in index order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .builder import make_cavity
from .slh import AdjacencyMap, AlgebraicLoopError, SlhModel, feedback_reduce, join_label, parallel_sum

__all__ = [
    "NetDslError",
    "NetworkLoopError",
    "NetworkDesc",
    "parse",
    "parse_file",
    "compile_network",
    "format_network",
    "bundled",
]


class NetDslError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        super().__init__(f"line {line}, col {col}: {message}" if line else message)


class NetworkLoopError(NetDslError):
    """The connections form an algebraic loop with no unique solution."""


@dataclass(frozen=True)
class Pos:
    line: int
    col: int


# -- expressions -----------------------------------------------------------

@dataclass(frozen=True)
class Num:
    text: str
    pos: Pos = field(default=Pos(0, 0), compare=False)


@dataclass(frozen=True)
class Name:
    ident: str
    pos: Pos = field(default=Pos(0, 0), compare=False)


@dataclass(frozen=True)
class Neg:
    operand: object
    pos: Pos = field(default=Pos(0, 0), compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object
    pos: Pos = field(default=Pos(0, 0), compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: object
    pos: Pos = field(default=Pos(0, 0), compare=False)


# -- statements --------------------------------------------------------------

@dataclass(frozen=True)
class ParamDecl:
    name: str
    expr: object
    pos: Pos = field(compare=False)


@dataclass(frozen=True)
class ComponentDecl:
    name: str
    kind: str
    couplings: tuple
    pos: Pos = field(compare=False)


@dataclass(frozen=True)
class PortRef:
    component: str
    direction: str  # "in" or "out"
    index: int
    pos: Pos = field(compare=False)

    def __str__(self):
        return f"{self.component}.{self.direction}{self.index}"


@dataclass(frozen=True)
class Connection:
    source: PortRef
    target: PortRef
    pos: Pos = field(compare=False)


@dataclass(frozen=True)
class External:
    direction: str  # "input" or "output"
    port: PortRef
    pos: Pos = field(compare=False)


@dataclass(frozen=True)
class NetworkDesc:
    params: tuple = ()
    components: tuple = ()
    connections: tuple = ()
    externals: tuple = ()

    @property
    def inputs(self) -> list[PortRef]:
        return [e.port for e in self.externals if e.direction == "input"]

    @property
    def outputs(self) -> list[PortRef]:
        return [e.port for e in self.externals if e.direction == "output"]


# -- lexer -----------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)"
    r"|(?P<comment>#.*)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>->|[=\[\],.()+\-*/])"
)
KEYWORDS = {"param", "cavity", "couplings", "connect", "input", "output"}
FUNCTIONS = {"sqrt"}
_PORT = re.compile(r"(in|out)([1-9][0-9]*)$")


@dataclass
class _Tok:
    kind: str
    text: str
    pos: Pos


def _lex_line(text: str, lineno: int) -> list[_Tok]:
    toks = []
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if m is None:
            raise NetDslError(f"unexpected character {text[i]!r}", lineno, i + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), Pos(lineno, i + 1)))
        i = m.end()
    return toks


# -- parser ------------------------------------------------------------------

class _LineParser:
    def __init__(self, toks, lineno, line_len):
        self.toks = toks
        self.i = 0
        self.end_pos = Pos(lineno, line_len + 1)

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def here(self):
        tok = self.peek()
        return tok.pos if tok else self.end_pos

    def fail(self, message, pos=None):
        pos = pos or self.here()
        raise NetDslError(message, pos.line, pos.col)

    def take(self, text=None, kind=None):
        tok = self.peek()
        if tok is None or (text and tok.text != text) or (kind and tok.kind != kind):
            want = repr(text) if text else (kind or "token")
            got = repr(tok.text) if tok else "end of line"
            self.fail(f"expected {want}, found {got}")
        self.i += 1
        return tok

    def done(self):
        if self.peek() is not None:
            self.fail(f"unexpected {self.peek().text!r}")

    def ident(self):
        tok = self.take(kind="ident")
        if tok.text in KEYWORDS:
            self.fail(f"keyword {tok.text!r} cannot be used as a name", tok.pos)
        return tok

    def expr(self):
        node = self.term()
        while self.peek() and self.peek().text in "+-" and self.peek().kind == "op":
            op = self.take()
            node = BinOp(op.text, node, self.term(), op.pos)
        return node

    def term(self):
        node = self.unary()
        while self.peek() and self.peek().text in ("*", "/"):
            op = self.take()
            node = BinOp(op.text, node, self.unary(), op.pos)
        return node

    def unary(self):
        tok = self.peek()
        if tok and tok.text == "-":
            self.take()
            return Neg(self.unary(), tok.pos)
        if tok and tok.text == "+":
            self.take()
            return self.unary()
        return self.atom()

    def atom(self):
        tok = self.peek()
        if tok is None:
            self.fail("expected an expression, found end of line")
        if tok.kind == "num":
            self.take()
            return Num(tok.text, tok.pos)
        if tok.text == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if tok.kind == "ident":
            if tok.text in FUNCTIONS:
                self.take()
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Call(tok.text, arg, tok.pos)
            if tok.text in KEYWORDS:
                self.fail(f"keyword {tok.text!r} in expression")
            self.take()
            return Name(tok.text, tok.pos)
        self.fail(f"expected an expression, found {tok.text!r}")

    def port(self):
        comp = self.ident()
        self.take(".")
        tok = self.take(kind="ident")
        m = _PORT.match(tok.text)
        if not m:
            self.fail(f"bad port name {tok.text!r} (expected inJ or outJ)", tok.pos)
        return PortRef(comp.text, m.group(1), int(m.group(2)), comp.pos)


def parse(source: str) -> NetworkDesc:
    """Parse network source text, raising :class:`NetDslError` on any problem."""
    params, comps, conns, exts = [], [], [], []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        toks = _lex_line(raw, lineno)
        if not toks:
            continue
        p = _LineParser(toks, lineno, len(raw))
        head = p.take(kind="ident")
        if head.text == "param":
            name = p.ident()
            p.take("=")
            params.append(ParamDecl(name.text, p.expr(), name.pos))
        elif head.text == "cavity":
            name = p.ident()
            p.take("couplings")
            p.take("[")
            couplings = [p.expr()]
            while p.peek() and p.peek().text == ",":
                p.take(",")
                couplings.append(p.expr())
            p.take("]")
            comps.append(ComponentDecl(name.text, "cavity", tuple(couplings), name.pos))
        elif head.text == "connect":
            src = p.port()
            p.take("->")
            dst = p.port()
            conns.append(Connection(src, dst, head.pos))
        elif head.text in ("input", "output"):
            exts.append(External(head.text, p.port(), head.pos))
        else:
            p.fail(f"unknown statement {head.text!r}", head.pos)
        p.done()
    desc = NetworkDesc(tuple(params), tuple(comps), tuple(conns), tuple(exts))
    _check(desc)
    return desc


def parse_file(path) -> NetworkDesc:
    return parse(Path(path).read_text(encoding="utf-8"))


def bundled(name: str) -> str:
    """Source text of a network shipped with the package."""
    if not name.endswith(".qnet"):
        name += ".qnet"
    return resources.files("qmem").joinpath("networks", name).read_text(encoding="utf-8")


# -- semantic checks -----------------------------------------------------------

def _names(expr):
    if isinstance(expr, Name):
        yield expr
    elif isinstance(expr, Neg):
        yield from _names(expr.operand)
    elif isinstance(expr, BinOp):
        yield from _names(expr.left)
        yield from _names(expr.right)
    elif isinstance(expr, Call):
        yield from _names(expr.arg)


def _err(message, pos):
    return NetDslError(message, pos.line, pos.col)


def _check(desc: NetworkDesc) -> None:
    declared = {}
    for decl in list(desc.params) + list(desc.components):
        if decl.name in declared:
            raise _err(f"duplicate declaration of {decl.name!r}", decl.pos)
        declared[decl.name] = decl
    params = {p.name: p for p in desc.params}
    comps = {c.name: c for c in desc.components}

    exprs = [p.expr for p in desc.params] + [e for c in desc.components for e in c.couplings]
    for expr in exprs:
        for ref in _names(expr):
            if ref.ident not in params:
                raise _err(f"unknown identifier {ref.ident!r}", ref.pos)
    _param_order(desc.params)

    def check_port(ref: PortRef, want: str, role: str):
        if ref.component not in comps:
            raise _err(f"unknown identifier {ref.component!r}", ref.pos)
        if ref.direction != want:
            kind = "an input" if want == "in" else "an output"
            raise _err(f"{role} is not {kind} port", ref.pos)
        n = len(comps[ref.component].couplings)
        if ref.index > n:
            raise _err(
                f"arity mismatch: {ref.component} has {n} ports, no port {ref.index}",
                ref.pos,
            )

    sources, targets = set(), set()
    for conn in desc.connections:
        check_port(conn.source, "out", "source")
        check_port(conn.target, "in", "target")
        s = (conn.source.component, conn.source.index)
        t = (conn.target.component, conn.target.index)
        if s in sources:
            raise _err(f"duplicate connection from {conn.source}", conn.source.pos)
        if t in targets:
            raise _err(f"duplicate connection into {conn.target}", conn.target.pos)
        sources.add(s)
        targets.add(t)

    seen = set()
    for ext in desc.externals:
        want = "in" if ext.direction == "input" else "out"
        check_port(ext.port, want, ext.direction)
        key = (ext.port.component, ext.port.direction, ext.port.index)
        if key in seen:
            raise _err(f"port {ext.port} declared twice", ext.port.pos)
        seen.add(key)
        used = targets if want == "in" else sources
        if (ext.port.component, ext.port.index) in used:
            raise _err(f"port {ext.port} is already connected internally", ext.port.pos)

    if desc.externals:
        for comp in desc.components:
            for j in range(1, len(comp.couplings) + 1):
                for want, used in (("in", targets), ("out", sources)):
                    if (comp.name, j) not in used and (comp.name, want, j) not in seen:
                        raise _err(
                            f"port {comp.name}.{want}{j} is neither connected nor "
                            "declared external",
                            comp.pos,
                        )


def _param_order(params):
    deps = {p.name: {r.ident for r in _names(p.expr)} for p in params}
    pos = {p.name: p.pos for p in params}
    order, state = [], {}

    def visit(name, trail):
        if state.get(name) == "done":
            return
        if state.get(name) == "active":
            raise _err(f"cyclic parameter definition: {' -> '.join(trail + [name])}", pos[name])
        state[name] = "active"
        for dep in sorted(deps[name]):
            visit(dep, trail + [name])
        state[name] = "done"
        order.append(name)

    for p in params:
        visit(p.name, [])
    return order


# -- evaluation and compilation ------------------------------------------------

def _eval(expr, env):
    if isinstance(expr, Num):
        return float(expr.text)
    if isinstance(expr, Name):
        return env[expr.ident]
    if isinstance(expr, Neg):
        return -_eval(expr.operand, env)
    if isinstance(expr, Call):
        x = _eval(expr.arg, env)
        if x < 0:
            raise _err(f"sqrt of negative value {x}", expr.pos)
        return math.sqrt(x)
    a, b = _eval(expr.left, env), _eval(expr.right, env)
    if expr.op == "+":
        return a + b
    if expr.op == "-":
        return a - b
    if expr.op == "*":
        return a * b
    if b == 0:
        raise _err("division by zero", expr.pos)
    return a / b


def evaluate_params(desc: NetworkDesc, overrides: dict | None = None) -> dict:
    overrides = dict(overrides or {})
    by_name = {p.name: p for p in desc.params}
    env = {}
    for name in _param_order(desc.params):
        env[name] = float(overrides[name]) if name in overrides else _eval(by_name[name].expr, env)
    return env


def compile_network(desc: NetworkDesc, params: dict | None = None) -> SlhModel:
    """Instantiate, concatenate and close the network described by ``desc``.

    ``params`` overrides parameter values by name.
    """
    if not desc.components:
        return SlhModel(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0)))
    env = evaluate_params(desc, params)

    models, offset = [], {}
    start = 0
    for comp in desc.components:
        rates = [_eval(e, env) for e in comp.couplings]
        try:
            models.append(make_cavity(*rates, name=comp.name))
        except ValueError as exc:
            raise _err(str(exc), comp.pos) from None
        offset[comp.name] = start
        start += len(rates)

    def index(ref: PortRef) -> int:
        return offset[ref.component] + ref.index - 1

    open_loop = parallel_sum(models)
    pairs = tuple((index(c.source), index(c.target)) for c in desc.connections)
    try:
        reduced = feedback_reduce(open_loop, AdjacencyMap(pairs))
    except AlgebraicLoopError as exc:
        bad = [c for c, p in zip(desc.connections, pairs) if p in exc.connections]
        bad = bad or list(desc.connections)
        where = ", ".join(f"line {c.pos.line}" for c in bad)
        raise NetworkLoopError(f"{exc} (connections at {where})", bad[0].pos.line,
                          bad[0].pos.col) from None

    if not desc.externals:
        return reduced
    in_names, out_names = reduced.input_labels, reduced.output_labels
    perm_in = [in_names.index(f"{r.component}.{r.index}") for r in desc.inputs]
    perm_out = [out_names.index(f"{r.component}.{r.index}") for r in desc.outputs]
    labels = tuple(join_label(in_names[i], out_names[o]) for i, o in zip(perm_in, perm_out))
    return SlhModel(
        reduced.S[np.ix_(perm_out, perm_in)],
        reduced.K[perm_out],
        reduced.Omega,
        labels,
    )


# -- printing ------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(expr):
    if isinstance(expr, BinOp):
        return _PREC[expr.op]
    if isinstance(expr, Neg):
        return 3
    return 4


def format_expr(expr) -> str:
    if isinstance(expr, Num):
        return expr.text
    if isinstance(expr, Name):
        return expr.ident
    if isinstance(expr, Call):
        return f"{expr.func}({format_expr(expr.arg)})"
    if isinstance(expr, Neg):
        inner = format_expr(expr.operand)
        return f"-({inner})" if _prec(expr.operand) < 3 else f"-{inner}"
    p = _PREC[expr.op]
    left = format_expr(expr.left)
    right = format_expr(expr.right)
    if _prec(expr.left) < p:
        left = f"({left})"
    if _prec(expr.right) <= p:
        right = f"({right})"
    return f"{left} {expr.op} {right}"


def format_network(desc: NetworkDesc) -> str:
    """Canonical source text; parsing it gives back an equal description."""
    lines = [f"param {p.name} = {format_expr(p.expr)}" for p in desc.params]
    lines += [
        f"cavity {c.name} couplings [{', '.join(format_expr(e) for e in c.couplings)}]"
        for c in desc.components
    ]
    lines += [f"connect {c.source} -> {c.target}" for c in desc.connections]
    lines += [f"{e.direction} {e.port}" for e in desc.externals]
    return "\n".join(lines) + ("\n" if lines else "")
