"""Parser, pretty-printer and NAM lowering for a small SpacePi fragment.

A model file has six sections, each introduced by a header line::

    Position declarations
    pos_F := x = 0 /\\ y = 0 /\\ z = 0
    pos_M := rand(x,y,z) s.t. (x^2 + y^2 + z^2) = b
    pos_E := rand(x,y,z) s.t. (x^2 + y^2 + z^2) = q

    Radius declarations
    r_react = 10
    b = 50
    q = 100

    Potential of mean force declarations
    f_pmf: not defined

    Motion declarations
    bMove(): xdot^2 + ydot^2 + zdot^2 < q, x = pos_E(x) /\\ y = pos_E(y) /\\ z = pos_E(z) otherwise

    Process definitions
    FixedParticle = coll?(~, r_react).0
    MovingParticle[bMove] = coll!(~, r_react).0
    ExitParticle = coll?(~, r_react).0

    Initial process
    FixedParticle | MovingParticle | ExitParticle

One declaration per line, ``#`` starts a comment.  Unicode spellings from
typeset models (``≔ ∧ ∼ ẋ ² ν 𝟎`` ...) are accepted as aliases of the ASCII
forms.  A process is placed at the position ``pos_<initial letter>`` unless
it names one explicitly with ``Name @ pos_X = ...``.
"""
from __future__ import annotations

import math
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (DuplicateDeclaration, MissingSection, NotNamShaped,
                     SpiSyntaxError, UndeclaredName)
from .model import DetectorKind, FixedStep, NamGeometry, RngKind, SimulatorConfig, make_geometry

SECTIONS = (
    "Position declarations",
    "Radius declarations",
    "Potential of mean force declarations",
    "Motion declarations",
    "Process definitions",
    "Initial process",
)
_HEADER_KEYS = {s.lower(): s for s in SECTIONS}

BUNDLED_NAM = Path(__file__).with_name("data") / "nam.spi"


def _loc():
    return field(default=None, compare=False, repr=False)


# ----------------------------------------------------------------------------
# expressions (motion constraints, pmf bodies)

@dataclass(frozen=True)
class Num:
    value: float
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class Name:
    id: str
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class Apply:
    func: str
    args: tuple
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class Neg:
    operand: object
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: object
    right: object
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class Compare:
    op: str
    left: object
    right: object
    loc: tuple | None = _loc()


# ----------------------------------------------------------------------------
# declarations

@dataclass(frozen=True)
class FixedPosition:
    x: float
    y: float
    z: float
    loc: tuple | None = _loc()

    @property
    def at_origin(self) -> bool:
        return self.x == 0 and self.y == 0 and self.z == 0


@dataclass(frozen=True)
class SpherePosition:
    """``rand(x,y,z) s.t. (x^2+y^2+z^2) = R``; ``squared`` marks an ``R^2`` spelling."""

    radius: object  # Name or Num
    squared: bool = False
    vars: tuple = ("x", "y", "z")
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class PmfDecl:
    name: str
    expr: object | None  # None means "not defined"
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class MotionDecl:
    params: tuple
    constraint: Compare
    escape: tuple  # ((var, expr), ...)
    loc: tuple | None = _loc()


# process terms

@dataclass(frozen=True)
class Nil:
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class Call:
    name: str
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class Action:
    channel: str
    polarity: str  # "!" send, "?" receive
    message: str  # "~" for the empty message
    radius: object  # Name, Num, or Num(inf)
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class Prefix:
    action: Action
    cont: object
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class Choice:
    alternatives: tuple
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class Par:
    parts: tuple
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class Restrict:
    name: str
    body: object
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class ProcessDef:
    body: object
    motion: str | None = None
    position: str | None = None
    loc: tuple | None = _loc()


@dataclass(frozen=True)
class ModelDocument:
    position_decls: dict
    radius_decls: dict
    pmf_decl: PmfDecl | None
    motion_decls: dict
    process_defs: dict
    initial_process: tuple

    @property
    def pmf_defined(self) -> bool:
        return self.pmf_decl is not None and self.pmf_decl.expr is not None


def par(*parts, loc=None):
    """Parallel composition, flattened; a single part is returned as is."""
    flat = []
    for p in parts:
        flat.extend(p.parts if isinstance(p, Par) else (p,))
    return flat[0] if len(flat) == 1 else Par(tuple(flat), loc)


def choice(*alts, loc=None):
    flat = []
    for p in alts:
        flat.extend(p.alternatives if isinstance(p, Choice) else (p,))
    return flat[0] if len(flat) == 1 else Choice(tuple(flat), loc)


# ----------------------------------------------------------------------------
# lexer

_ALIASES = {
    "≔": ":=", "∧": "/\\", "∼": "~", "˜": "~", "−": "-", "≤": "<=", "≥": ">=",
    "∞": "inf", "ẋ": "xdot", "ẏ": "ydot", "ż": "zdot", "²": "^2", "ν": "new",
    "·": "*", "⋅": "*", "∣": "|", "𝟎": "0",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<st>s\.t\.)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|/\\|<=|>=|[()\[\],.|+\-*/^=<>:!?~@])
""", re.VERBOSE)


@dataclass(frozen=True)
class Tok:
    kind: str  # name, num, op, st, eol
    text: str
    line: int
    col: int


def _lex_line(text: str, lineno: int) -> list:
    toks = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "#":
            break
        alias = _ALIASES.get(ch)
        if alias is not None:
            if alias[0].isalpha():
                kind = "name"
            elif alias[0].isdigit():
                kind = "num"
            else:
                kind = "op"
            if alias == "^2":
                toks.append(Tok("op", "^", lineno, i + 1))
                toks.append(Tok("num", "2", lineno, i + 1))
            else:
                toks.append(Tok(kind, alias, lineno, i + 1))
            i += 1
            continue
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise SpiSyntaxError(f"unexpected character {ch!r}", lineno, i + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(Tok(kind, m.group(), lineno, i + 1))
        i = m.end()
    toks.append(Tok("eol", "", lineno, len(text) + 1))
    return toks


def _header_of(line: str) -> str | None:
    key = " ".join(line.split("#", 1)[0].split()).rstrip(":").strip().lower()
    return _HEADER_KEYS.get(key)


# ----------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, toks):
        self.toks = toks
        self.i = 0

    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def loc(self):
        return (self.tok.line, self.tok.col)

    def peek(self, k=1) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, what, *expected):
        t = self.tok
        got = "end of line" if t.kind == "eol" else repr(t.text)
        raise SpiSyntaxError(f"{what}, found {got}", t.line, t.col, expected)

    def at(self, text) -> bool:
        t = self.tok
        return t.kind in ("op", "name", "st") and t.text == text

    def accept(self, text) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text, what=None):
        if not self.accept(text):
            self.error(what or f"unexpected token", repr(text))

    def name(self, what="name") -> str:
        t = self.tok
        if t.kind != "name":
            self.error(f"expected {what}", what)
        self.i += 1
        return t.text

    def number(self) -> float:
        neg = self.accept("-")
        t = self.tok
        if t.kind == "num":
            self.i += 1
            v = float(t.text)
        elif t.kind == "name" and t.text == "inf":
            self.i += 1
            v = math.inf
        else:
            self.error("expected a number", "number")
        return -v if neg else v

    def end(self):
        if self.tok.kind != "eol":
            self.error("unexpected trailing input", "end of line")

    # -- expressions -----------------------------------------------------
    def expr(self):
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            loc = self.loc()
            op = self.tok.text
            self.i += 1
            left = BinOp(op, left, self.term(), loc)
        return left

    def term(self):
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            loc = self.loc()
            op = self.tok.text
            self.i += 1
            left = BinOp(op, left, self.unary(), loc)
        return left

    def unary(self):
        if self.at("-"):
            loc = self.loc()
            self.i += 1
            return Neg(self.unary(), loc)
        return self.power()

    def power(self):
        base = self.atom()
        if self.at("^"):
            loc = self.loc()
            self.i += 1
            return BinOp("^", base, self.unary(), loc)  # right associative
        return base

    def atom(self):
        t = self.tok
        loc = self.loc()
        if t.kind == "num":
            self.i += 1
            return Num(float(t.text), loc)
        if t.kind == "name":
            self.i += 1
            if t.text == "inf":
                return Num(math.inf, loc)
            if self.accept("("):
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.accept(","):
                        args.append(self.expr())
                self.expect(")")
                return Apply(t.text, tuple(args), loc)
            return Name(t.text, loc)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        self.error("expected an expression", "number", "name", "'('")

    def comparison(self):
        left = self.expr()
        loc = self.loc()
        for op in ("<=", ">=", "<", ">", "="):
            if self.accept(op):
                return Compare(op, left, self.expr(), loc)
        self.error("expected a comparison", "'<'", "'<='", "'='", "'>'", "'>='")

    # -- declarations ------------------------------------------------------
    def bind(self):
        if not (self.accept(":=") or self.accept("=")):
            self.error("expected a binding", "':='", "'='")

    def position_decl(self):
        loc = self.loc()
        name = self.name("position name")
        self.bind()
        if self.at("rand"):
            return name, self.sphere(loc)
        coords = {}
        while True:
            cloc = self.loc()
            var = self.name("coordinate")
            if var not in ("x", "y", "z"):
                raise SpiSyntaxError(f"unknown coordinate {var!r}", *cloc, expected=("x", "y", "z"))
            if var in coords:
                raise DuplicateDeclaration(f"coordinate {var!r} given twice", *cloc)
            self.expect("=")
            coords[var] = self.number()
            if not self.accept("/\\"):
                break
        missing = [v for v in ("x", "y", "z") if v not in coords]
        if missing:
            self.error(f"fixed position {name!r} lacks coordinate(s) {', '.join(missing)}",
                       *(f"'/\\\\ {v} ='" for v in missing))
        self.end()
        return name, FixedPosition(coords["x"], coords["y"], coords["z"], loc)

    def sphere(self, loc):
        self.expect("rand")
        self.expect("(")
        vs = [self.name("coordinate")]
        while self.accept(","):
            vs.append(self.name("coordinate"))
        self.expect(")")
        if len(vs) != 3 or len(set(vs)) != 3:
            raise SpiSyntaxError("rand(...) takes three distinct coordinates", *loc)
        if not self.accept("s.t."):
            self.error("expected constraint", "'s.t.'")
        cloc = self.loc()
        c = self.comparison()
        self.end()
        # the constraint must read  v1^2 + v2^2 + v3^2 = R   (or R^2)
        squares = []

        def collect(e):
            if isinstance(e, BinOp) and e.op == "+":
                collect(e.left)
                collect(e.right)
            elif (isinstance(e, BinOp) and e.op == "^" and isinstance(e.left, Name)
                  and e.right == Num(2.0)):
                squares.append(e.left.id)
            else:
                squares.append(None)

        collect(c.left)
        if c.op != "=" or sorted(s or "" for s in squares) != sorted(vs):
            raise SpiSyntaxError("sphere constraint must read (x^2 + y^2 + z^2) = R", *cloc)
        rhs, squared = c.right, False
        if isinstance(rhs, BinOp) and rhs.op == "^" and rhs.right == Num(2.0):
            rhs, squared = rhs.left, True
        if not isinstance(rhs, (Name, Num)):
            raise SpiSyntaxError("sphere radius must be a number or a radius name", *cloc)
        return SpherePosition(rhs, squared, tuple(vs), loc)

    def radius_decl(self):
        loc = self.loc()
        name = self.name("radius name")
        self.bind()
        nloc = self.loc()
        v = self.number()
        self.end()
        if not v > 0 or math.isinf(v):
            raise SpiSyntaxError(f"radius {name!r} must be a positive finite number", *nloc)
        return name, v, loc

    def pmf_decl(self):
        loc = self.loc()
        name = self.name("potential name")
        if not (self.accept(":") or self.accept(":=")):
            self.error("expected ':'", "':'")
        if self.at("not") and self.peek().kind == "name" and self.peek().text == "defined":
            self.i += 2
            self.end()
            return PmfDecl(name, None, loc)
        e = self.expr()
        self.end()
        return PmfDecl(name, e, loc)

    def motion_decl(self):
        loc = self.loc()
        name = self.name("motion name")
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.name("parameter"))
            while self.accept(","):
                params.append(self.name("parameter"))
        self.expect(")")
        self.expect(":")
        constraint = self.comparison()
        self.expect(",", "expected ',' before the escape clause")
        escape = []
        while True:
            var = self.name("coordinate")
            self.expect("=")
            escape.append((var, self.expr()))
            if not self.accept("/\\"):
                break
        if not self.accept("otherwise"):
            self.error("expected end of escape clause", "'otherwise'", "'/\\\\'")
        self.end()
        return name, MotionDecl(tuple(params), constraint, tuple(escape), loc)

    def process_def(self):
        loc = self.loc()
        name = self.name("process name")
        motion = position = None
        if self.accept("["):
            motion = self.name("motion name")
            self.expect("]")
        if self.accept("@"):
            position = self.name("position name")
        self.bind()
        body = self.proc()
        self.end()
        return name, ProcessDef(body, motion, position, loc)

    # -- process terms -----------------------------------------------------
    def proc(self):
        loc = self.loc()
        parts = [self.proc_choice()]
        while self.accept("|"):
            parts.append(self.proc_choice())
        return par(*parts, loc=loc)

    def proc_choice(self):
        loc = self.loc()
        alts = [self.proc_seq()]
        while self.accept("+"):
            alts.append(self.proc_seq())
        return choice(*alts, loc=loc)

    def proc_seq(self):
        t = self.tok
        loc = self.loc()
        if t.kind == "num":
            if float(t.text) != 0:
                self.error("only 0 may terminate a process", "'0'")
            self.i += 1
            return Nil(loc)
        if self.at("("):
            if self.peek().kind == "name" and self.peek().text == "new":
                self.i += 2
                n = self.name("restricted channel")
                self.expect(")")
                return Restrict(n, self.proc_seq(), loc)
            self.i += 1
            p = self.proc()
            self.expect(")")
            return p
        if t.kind == "name":
            if t.text == "nil":
                self.i += 1
                return Nil(loc)
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text in "!?":
                act = self.action()
                self.expect(".", "expected '.' after an action")
                return Prefix(act, self.proc_seq(), loc)
            self.i += 1
            return Call(t.text, loc)
        self.error("expected a process", "action", "process name", "'0'", "'('")

    def action(self):
        loc = self.loc()
        ch = self.name("channel")
        pol = self.tok.text
        self.i += 1
        self.expect("(")
        if self.accept("~"):
            msg = "~"
        else:
            msg = self.name("message")
        self.expect(",")
        rloc = self.loc()
        if self.tok.kind == "name" and self.tok.text != "inf":
            radius = Name(self.name(), rloc)
        else:
            radius = Num(self.number(), rloc)
        self.expect(")")
        return Action(ch, pol, msg, radius, loc)

    def initial(self):
        loc = self.loc()
        names = [self._initial_name()]
        while self.accept("|"):
            names.append(self._initial_name())
        self.end()
        return tuple(names), loc

    def _initial_name(self):
        loc = self.loc()
        return self.name("process name"), loc


def _split_sections(text: str):
    """Yield {section: [(lineno, line)]} and the header locations."""
    bodies: dict = {}
    where: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        header = _header_of(raw)
        if header is not None:
            if header in bodies:
                raise DuplicateDeclaration(f"section {header!r} appears twice", lineno, 1)
            bodies[header] = []
            where[header] = lineno
            current = header
            continue
        if current is None:
            col = len(raw) - len(raw.lstrip()) + 1
            raise SpiSyntaxError("content before the first section header", lineno, col,
                                 expected=(repr(SECTIONS[0]),))
        bodies[current].append((lineno, raw))
    for s in SECTIONS:
        if s not in bodies:
            last = len(text.splitlines()) + 1
            raise MissingSection(s, last, 1)
    return bodies, where


def parse_model(text: str) -> ModelDocument:
    """Parse a model file into a validated :class:`ModelDocument`.

    Every failure is a :class:`ModelError` carrying line and column.
    """
    text = unicodedata.normalize("NFC", text)
    bodies, where = _split_sections(text)

    def parsers(section):
        for lineno, raw in bodies[section]:
            yield _Parser(_lex_line(raw, lineno))

    def add(table, name, value, loc, what):
        if name in table:
            raise DuplicateDeclaration(f"{what} {name!r} declared twice", *loc)
        table[name] = value

    positions: dict = {}
    for p in parsers("Position declarations"):
        loc = p.loc()
        name, decl = p.position_decl()
        add(positions, name, decl, loc, "position")

    radii: dict = {}
    radius_locs = {}
    for p in parsers("Radius declarations"):
        name, v, loc = p.radius_decl()
        add(radii, name, v, loc, "radius")
        radius_locs[name] = loc

    pmf = None
    for p in parsers("Potential of mean force declarations"):
        decl = p.pmf_decl()
        if pmf is not None:
            raise DuplicateDeclaration("only one potential of mean force may be declared", *decl.loc)
        pmf = decl

    motions: dict = {}
    for p in parsers("Motion declarations"):
        loc = p.loc()
        name, decl = p.motion_decl()
        add(motions, name, decl, loc, "motion")

    processes: dict = {}
    for p in parsers("Process definitions"):
        loc = p.loc()
        name, decl = p.process_def()
        add(processes, name, decl, loc, "process")

    lines = bodies["Initial process"]
    if not lines:
        raise MissingSection("Initial process", where["Initial process"], 1)
    if len(lines) > 1:
        raise SpiSyntaxError("the initial process must be a single line", lines[1][0], 1)
    named, _ = _Parser(_lex_line(lines[0][1], lines[0][0])).initial()

    doc = ModelDocument(positions, radii, pmf, motions, processes,
                        tuple(n for n, _ in named))
    _validate(doc, named)
    return doc


def parse_model_file(path) -> ModelDocument:
    return parse_model(Path(path).read_text(encoding="utf-8"))


# ----------------------------------------------------------------------------
# validation

_COORDS = {"x", "y", "z", "xdot", "ydot", "zdot", "t"}


def _walk_proc(p):
    yield p
    if isinstance(p, Prefix):
        yield from _walk_proc(p.cont)
    elif isinstance(p, Choice):
        for a in p.alternatives:
            yield from _walk_proc(a)
    elif isinstance(p, Par):
        for a in p.parts:
            yield from _walk_proc(a)
    elif isinstance(p, Restrict):
        yield from _walk_proc(p.body)


def _walk_scoped(p, bound=frozenset()):
    """Like _walk_proc but also yields the channels restricted around each node;
    a restriction only scopes over its own body."""
    yield p, bound
    if isinstance(p, Prefix):
        yield from _walk_scoped(p.cont, bound)
    elif isinstance(p, Choice):
        for a in p.alternatives:
            yield from _walk_scoped(a, bound)
    elif isinstance(p, Par):
        for a in p.parts:
            yield from _walk_scoped(a, bound)
    elif isinstance(p, Restrict):
        yield from _walk_scoped(p.body, bound | {p.name})


def _walk_expr(e):
    yield e
    if isinstance(e, BinOp) or isinstance(e, Compare):
        yield from _walk_expr(e.left)
        yield from _walk_expr(e.right)
    elif isinstance(e, Neg):
        yield from _walk_expr(e.operand)
    elif isinstance(e, Apply):
        for a in e.args:
            yield from _walk_expr(a)


def _radius_value(doc: ModelDocument, ref) -> float:
    return ref.value if isinstance(ref, Num) else doc.radius_decls[ref.id]


def _validate(doc: ModelDocument, named_initial=()):
    def need_radius(ref):
        if isinstance(ref, Name) and ref.id not in doc.radius_decls:
            raise UndeclaredName(f"radius {ref.id!r} is not declared", *(ref.loc or (None, None)))

    for pos in doc.position_decls.values():
        if isinstance(pos, SpherePosition):
            need_radius(pos.radius)

    for mname, m in doc.motion_decls.items():
        allowed = _COORDS | set(m.params) | set(doc.radius_decls)
        exprs = [m.constraint] + [e for _, e in m.escape]
        for var, _ in m.escape:
            if var not in ("x", "y", "z"):
                raise SpiSyntaxError(f"escape clause assigns unknown coordinate {var!r}", *m.loc)
        for e in exprs:
            for node in _walk_expr(e):
                if isinstance(node, Name) and node.id not in allowed:
                    raise UndeclaredName(f"{node.id!r} is not declared (in motion {mname!r})",
                                         *(node.loc or (None, None)))
                if isinstance(node, Apply) and node.func not in doc.position_decls:
                    raise UndeclaredName(f"position {node.func!r} is not declared (in motion {mname!r})",
                                         *(node.loc or (None, None)))

    sends, recvs = {}, {}
    for pname, pd in doc.process_defs.items():
        if pd.motion is not None and pd.motion not in doc.motion_decls:
            raise UndeclaredName(f"motion {pd.motion!r} is not declared", *pd.loc)
        if pd.position is not None and pd.position not in doc.position_decls:
            raise UndeclaredName(f"position {pd.position!r} is not declared", *pd.loc)
        for node, bound in _walk_scoped(pd.body):
            if isinstance(node, Call) and node.name not in doc.process_defs:
                raise UndeclaredName(f"process {node.name!r} is not defined", *(node.loc or (None, None)))
            elif isinstance(node, Prefix):
                act = node.action
                need_radius(act.radius)
                if act.channel in bound:
                    continue
                key = (act.channel, _radius_value(doc, act.radius))
                table = sends if act.polarity == "!" else recvs
                table.setdefault(key, act)

    for key, act in sends.items():
        if key not in recvs:
            raise UndeclaredName(
                f"send on channel {act.channel!r} with radius {_fmt_num(key[1])} has no "
                f"complementary receive {act.channel}?(~, r) of equal radius", *act.loc)
    for key, act in recvs.items():
        if key not in sends:
            raise UndeclaredName(
                f"receive on channel {act.channel!r} with radius {_fmt_num(key[1])} has no "
                f"complementary send {act.channel}!(~, r) of equal radius", *act.loc)

    for name, loc in (named_initial or [(n, (None, None)) for n in doc.initial_process]):
        if name not in doc.process_defs:
            raise UndeclaredName(f"process {name!r} in the initial process is not defined", *loc)


# ----------------------------------------------------------------------------
# pretty printer

def _fmt_num(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if float(v).is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def format_expr(e, ctx: int = 0) -> str:
    if isinstance(e, Num):
        s = _fmt_num(e.value)
        return f"({s})" if e.value < 0 and ctx > 0 else s
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Apply):
        return f"{e.func}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, Neg):
        s = "-" + format_expr(e.operand, 3)
        return f"({s})" if ctx > 3 else s
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        if e.op == "^":
            s = f"{format_expr(e.left, 5)}^{format_expr(e.right, 3)}"
        else:
            s = f"{format_expr(e.left, p)} {e.op} {format_expr(e.right, p + 1)}"
        return f"({s})" if p < ctx else s
    if isinstance(e, Compare):
        return f"{format_expr(e.left)} {e.op} {format_expr(e.right)}"
    raise TypeError(f"not an expression: {e!r}")


def format_action(a: Action) -> str:
    r = a.radius.id if isinstance(a.radius, Name) else _fmt_num(a.radius.value)
    return f"{a.channel}{a.polarity}({a.message}, {r})"


def format_process(p, ctx: int = 0) -> str:
    # ctx: 0 = top, 1 = inside a choice, 2 = sequential position
    if isinstance(p, Nil):
        return "0"
    if isinstance(p, Call):
        return p.name
    if isinstance(p, Prefix):
        return f"{format_action(p.action)}.{format_process(p.cont, 2)}"
    if isinstance(p, Restrict):
        return f"(new {p.name}){format_process(p.body, 2)}"
    if isinstance(p, Choice):
        s = " + ".join(format_process(a, 2) for a in p.alternatives)
        return f"({s})" if ctx >= 2 else s
    if isinstance(p, Par):
        s = " | ".join(format_process(a, 1) for a in p.parts)
        return f"({s})" if ctx >= 1 else s
    raise TypeError(f"not a process: {p!r}")


def format_model(doc: ModelDocument) -> str:
    """Canonical text: sections in fixed order, declarations sorted by name."""
    out = [SECTIONS[0]]
    for name in sorted(doc.position_decls):
        pos = doc.position_decls[name]
        if isinstance(pos, FixedPosition):
            out.append(f"{name} := x = {_fmt_num(pos.x)} /\\ y = {_fmt_num(pos.y)} "
                       f"/\\ z = {_fmt_num(pos.z)}")
        else:
            vs = pos.vars
            r = format_expr(pos.radius, 5) + ("^2" if pos.squared else "")
            out.append(f"{name} := rand({vs[0]},{vs[1]},{vs[2]}) s.t. "
                       f"({vs[0]}^2 + {vs[1]}^2 + {vs[2]}^2) = {r}")
    out += ["", SECTIONS[1]]
    out += [f"{name} = {_fmt_num(doc.radius_decls[name])}" for name in sorted(doc.radius_decls)]
    out += ["", SECTIONS[2]]
    if doc.pmf_decl is not None:
        body = "not defined" if doc.pmf_decl.expr is None else format_expr(doc.pmf_decl.expr)
        out.append(f"{doc.pmf_decl.name}: {body}")
    out += ["", SECTIONS[3]]
    for name in sorted(doc.motion_decls):
        m = doc.motion_decls[name]
        esc = " /\\ ".join(f"{v} = {format_expr(e)}" for v, e in m.escape)
        out.append(f"{name}({', '.join(m.params)}): {format_expr(m.constraint)}, {esc} otherwise")
    out += ["", SECTIONS[4]]
    for name in sorted(doc.process_defs):
        pd = doc.process_defs[name]
        head = name
        if pd.motion is not None:
            head += f"[{pd.motion}]"
        if pd.position is not None:
            head += f" @ {pd.position}"
        out.append(f"{head} = {format_process(pd.body)}")
    out += ["", SECTIONS[5], " | ".join(doc.initial_process)]
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------------------
# lowering

@dataclass(frozen=True)
class LoweredModel:
    geometry: NamGeometry
    config: SimulatorConfig
    pmf: object | None = None
    moving: str = ""
    fixed: str = ""
    exit: str = ""


def _process_position(doc: ModelDocument, name: str, pd: ProcessDef):
    if pd.position is not None:
        return pd.position, doc.position_decls[pd.position]
    guess = f"pos_{name[0]}"
    if guess in doc.position_decls:
        return guess, doc.position_decls[guess]
    raise NotNamShaped(f"process {name!r} has no position: write '{name} @ pos_X = ...' "
                       f"or declare {guess!r}")


def _lower_pmf(decl: PmfDecl | None):
    from .rates import ScreenedCoulomb
    if decl is None or decl.expr is None:
        return None
    e = decl.expr

    def const(x):
        if isinstance(x, Num):
            return x.value
        if isinstance(x, Neg):
            v = const(x.operand)
            return None if v is None else -v
        return None

    if isinstance(e, Apply) and e.func in ("screened_coulomb", "debye_huckel") and len(e.args) == 2:
        Q, kappa = const(e.args[0]), const(e.args[1])
        if Q is not None and kappa is not None and kappa >= 0:
            return ScreenedCoulomb(Q, kappa)
    raise NotNamShaped(
        f"potential {decl.name!r} = {format_expr(e)} cannot drive the Brownian drift; only "
        f"'screened_coulomb(Q, kappa)' with numeric arguments is supported (line {decl.loc[0] if decl.loc else '?'})")


def _single_action(name: str, body):
    """The one action of a NAM-shaped body ``ch?(~, r).0``."""
    if isinstance(body, Prefix) and isinstance(body.cont, Nil):
        return body.action
    kinds = {type(n).__name__ for n in _walk_proc(body)}
    if "Restrict" in kinds:
        why = "channel restriction (new x) is not executable"
    elif "Choice" in kinds:
        why = "summation with more than one alternative is not executable"
    elif "Par" in kinds:
        why = "nested parallel composition is not executable"
    else:
        why = "the body must be a single action followed by 0"
    raise NotNamShaped(f"process {name!r}: {why}")


def lower_to_nam(doc: ModelDocument, D: float) -> LoweredModel:
    """Map a NAM-shaped document to a geometry plus default simulator settings."""
    names = list(doc.initial_process)
    if len(set(names)) != len(names):
        raise NotNamShaped("a process appears more than once in the initial process")
    movers = [n for n in names if doc.process_defs[n].motion is not None]
    if len(movers) != 1:
        raise NotNamShaped(f"exactly one process must carry a movement function, found {len(movers)}"
                           + (f" ({', '.join(movers)})" if movers else ""))
    moving = movers[0]
    placed = {n: _process_position(doc, n, doc.process_defs[n]) for n in names}
    fixed = [n for n in names if n != moving and isinstance(placed[n][1], FixedPosition)
             and placed[n][1].at_origin]
    if len(fixed) != 1:
        raise NotNamShaped(f"exactly one process must sit at the origin, found {len(fixed)}")
    fixed = fixed[0]
    rest = [n for n in names if n not in (moving, fixed)]
    if len(rest) != 1:
        raise NotNamShaped("a NAM model needs exactly one exit process besides the fixed and "
                           f"moving particles, found {len(rest)}")
    exit_ = rest[0]

    acts = {n: _single_action(n, doc.process_defs[n].body) for n in names}
    m_act, f_act = acts[moving], acts[fixed]
    if m_act.polarity == f_act.polarity or m_act.channel != f_act.channel:
        raise NotNamShaped(f"{moving!r} and {fixed!r} do not communicate on a shared channel")
    a = _radius_value(doc, m_act.radius)
    if a != _radius_value(doc, f_act.radius):
        raise NotNamShaped("reaction actions use different radii")

    def sphere_radius(n):
        pos_name, pos = placed[n]
        if not isinstance(pos, SpherePosition):
            raise NotNamShaped(f"process {n!r} must start on a sphere (position {pos_name!r})")
        return _radius_value(doc, pos.radius)

    b = sphere_radius(moving)
    q = sphere_radius(exit_)
    geometry = make_geometry(a, b, q, D)
    pmf = _lower_pmf(doc.pmf_decl)
    config = SimulatorConfig(RngKind.MERSENNE_TWISTER, DetectorKind.EVENT_TRIGGERED, FixedStep(0.1))
    return LoweredModel(geometry, config, pmf, moving, fixed, exit_)


def load_bundled_nam() -> ModelDocument:
    return parse_model_file(BUNDLED_NAM)
