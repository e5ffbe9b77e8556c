"""Parser and lowering for grounding programs.

A grounding program is a tiny keyword-argument call language::

    DESK = DEFINE_VARIABLE(labels=["desk"])
    BED = DEFINE_VARIABLE(labels=["bed"])
    CONSTRAINT_BESIDE(target=DESK, anchor=BED)
    SET_TARGET(DESK)

Nothing is executed; `parse` builds statements and `lower` turns them into
a `Csp`. Newlines are insignificant, so calls may wrap freely.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Union

from .geometry import RelationKind, ScoreFunc
from .scene import normalize_label


class ProgramError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: error: {message}" if line else message)
        self.message = message
        self.line = line
        self.col = col


# ---------------------------------------------------------------- values


@dataclass(frozen=True)
class StringLit:
    value: str


@dataclass(frozen=True)
class StringList:
    values: tuple[str, ...]


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class VarSet:
    names: tuple[str, ...]


@dataclass(frozen=True)
class NoneLit:
    pass


Value = Union[StringLit, StringList, VarRef, VarSet, NoneLit]


@dataclass(frozen=True)
class Call:
    func_name: str
    kwargs: tuple[tuple[str, Value], ...]
    # A single bare-identifier positional argument, as in ``SET_TARGET(X)``.
    positional: VarRef | None = None
    line: int = 0
    col: int = 0

    def get(self, key: str) -> Value | None:
        for k, v in self.kwargs:
            if k == key:
                return v
        return None


@dataclass(frozen=True)
class Assign:
    var_name: str
    call: Call
    source_line: int = 0


@dataclass(frozen=True)
class BareCall:
    call: Call
    source_line: int = 0


ProgramStmt = Union[Assign, BareCall]


# ---------------------------------------------------------------- lexer


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT STRING PUNCT NUMBER EOF
    text: str
    line: int
    col: int


_PUNCT = set("=(),[]{}|:")


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r\f\v":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("IDENT", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if ch in "\"'":
            j = i + 1
            buf = []
            while j < n and text[j] != ch:
                if text[j] == "\n":
                    raise ProgramError("unterminated string", start_line, start_col)
                if text[j] == "\\" and j + 1 < n:
                    j += 1
                buf.append(text[j])
                j += 1
            if j >= n:
                raise ProgramError("unterminated string", start_line, start_col)
            tokens.append(Token("STRING", "".join(buf), start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit() or (ch in "-." and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] in "._"):
                j += 1
            tokens.append(Token("NUMBER", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if ch in _PUNCT:
            tokens.append(Token("PUNCT", ch, start_line, start_col))
            i += 1
            col += 1
            continue
        raise ProgramError(f"unexpected character {ch!r}", start_line, start_col)
    tokens.append(Token("EOF", "", line, col))
    return tokens


# ---------------------------------------------------------------- parser


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.tok
        self.pos += 1
        return t

    def expect(self, kind: str, text: str | None = None) -> Token:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            if t.kind == "EOF" and text in (")", "]", "}"):
                raise ProgramError(f"unterminated '{_OPENER[text]}'", t.line, t.col)
            want = text or kind.lower()
            got = t.text or "end of input"
            raise ProgramError(f"expected {want!r}, got {got!r}", t.line, t.col)
        return self.advance()

    def program(self) -> list[ProgramStmt]:
        stmts: list[ProgramStmt] = []
        while self.tok.kind != "EOF":
            stmts.append(self.statement())
        return stmts

    def statement(self) -> ProgramStmt:
        head = self.expect("IDENT")
        if self.tok.kind == "PUNCT" and self.tok.text == "=":
            self.advance()
            name = self.expect("IDENT")
            return Assign(head.text, self.call(name), head.line)
        return BareCall(self.call(head), head.line)

    def call(self, name: Token) -> Call:
        self.expect("PUNCT", "(")
        kwargs: list[tuple[str, Value]] = []
        positional: list[Token] = []
        seen: set[str] = set()
        while not (self.tok.kind == "PUNCT" and self.tok.text == ")"):
            if self.tok.kind == "EOF":
                raise ProgramError("unterminated '('", name.line, name.col)
            if self.tok.kind == "IDENT" and self.peek().kind == "PUNCT" and self.peek().text == "=":
                key = self.advance()
                self.advance()
                if key.text in seen:
                    raise ProgramError(f"duplicate keyword argument {key.text!r}", key.line, key.col)
                seen.add(key.text)
                kwargs.append((key.text, self.value()))
            else:
                if kwargs:
                    raise ProgramError("positional argument follows keyword argument", self.tok.line, self.tok.col)
                positional.append(self.tok)
                self.value()
            if self.tok.kind == "PUNCT" and self.tok.text == ",":
                self.advance()
            elif not (self.tok.kind == "PUNCT" and self.tok.text == ")"):
                self.expect("PUNCT", ")")
        self.expect("PUNCT", ")")
        pos = None
        if positional:
            first = positional[0]
            if len(positional) > 1 or first.kind != "IDENT" or kwargs:
                raise ProgramError("positional arguments unsupported; use keyword arguments", first.line, first.col)
            pos = VarRef(first.text)
        return Call(name.text, tuple(kwargs), pos, name.line, name.col)

    def value(self) -> Value:
        t = self.tok
        if t.kind == "STRING":
            self.advance()
            return StringLit(t.text)
        if t.kind == "IDENT":
            self.advance()
            if t.text == "None":
                return NoneLit()
            return VarRef(t.text)
        if t.kind == "PUNCT" and t.text == "[":
            self.advance()
            items = self._items("]", "STRING")
            if not items:
                raise ProgramError("empty label list", t.line, t.col)
            return StringList(tuple(items))
        if t.kind == "PUNCT" and t.text == "{":
            self.advance()
            return VarSet(tuple(self._items("}", "IDENT")))
        if t.kind == "NUMBER":
            self.advance()
            # Numbers only appear in malformed programs; let the caller decide.
            return StringLit(t.text)
        raise ProgramError(f"unexpected {t.text or 'end of input'!r}", t.line, t.col)

    def _items(self, close: str, kind: str) -> list[str]:
        items: list[str] = []
        while not (self.tok.kind == "PUNCT" and self.tok.text == close):
            if self.tok.kind == "EOF":
                self.expect("PUNCT", close)
            items.append(self.expect(kind).text)
            if self.tok.kind == "PUNCT" and self.tok.text == ",":
                self.advance()
            else:
                break
        self.expect("PUNCT", close)
        return items


_OPENER = {")": "(", "]": "[", "}": "{"}


def parse(text: str) -> list[ProgramStmt]:
    return _Parser(tokenize(text)).program()


def _render_value(v: Value) -> str:
    if isinstance(v, StringLit):
        return '"' + v.value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, StringList):
        return "[" + ", ".join(_render_value(StringLit(s)) for s in v.values) + "]"
    if isinstance(v, VarRef):
        return v.name
    if isinstance(v, VarSet):
        return "{" + ", ".join(v.names) + "}"
    return "None"


def render_call(call: Call) -> str:
    args = [call.positional.name] if call.positional else []
    args += [f"{k}={_render_value(v)}" for k, v in call.kwargs]
    return f"{call.func_name}({', '.join(args)})"


def render(stmts: list[ProgramStmt]) -> str:
    lines = []
    for s in stmts:
        if isinstance(s, Assign):
            lines.append(f"{s.var_name} = {render_call(s.call)}")
        else:
            lines.append(render_call(s.call))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------- CSP IR


class Polarity(enum.Enum):
    NORMAL = "NORMAL"
    NEGATIVE = "NEGATIVE"


@dataclass(frozen=True)
class CspVariable:
    name: str
    label_set: frozenset[str]
    polarity: Polarity = Polarity.NORMAL

    @property
    def negative(self) -> bool:
        return self.polarity is Polarity.NEGATIVE


@dataclass(frozen=True)
class CspConstraint:
    kind: RelationKind
    target: str
    anchors: tuple[str, ...] = ()
    reference: str | None = None
    score_func: ScoreFunc | None = None
    source_line: int = 0

    @property
    def variables(self) -> tuple[str, ...]:
        names = (self.target,) + self.anchors
        if self.reference is not None:
            names += (self.reference,)
        return names


@dataclass(frozen=True)
class Csp:
    variables: tuple[CspVariable, ...]
    constraints: tuple[CspConstraint, ...]
    target: str

    def variable(self, name: str) -> CspVariable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def normal_variables(self) -> tuple[CspVariable, ...]:
        return tuple(v for v in self.variables if not v.negative)

    @property
    def negative_names(self) -> frozenset[str]:
        return frozenset(v.name for v in self.variables if v.negative)

    @property
    def filter_constraints(self) -> tuple[CspConstraint, ...]:
        return tuple(c for c in self.constraints if not c.kind.is_minmax)

    @property
    def minmax_constraints(self) -> tuple[CspConstraint, ...]:
        return tuple(c for c in self.constraints if c.kind.is_minmax)


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    severity: str  # "error" | "warning"
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.severity}: {self.message}"


class LoweringError(ProgramError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        errors = [d for d in diagnostics if d.severity == "error"]
        first = errors[0] if errors else diagnostics[0]
        ValueError.__init__(self, "\n".join(str(d) for d in errors) or str(first))
        self.message = first.message
        self.line = first.line
        self.col = first.col


# ---------------------------------------------------------------- registry

_VAR = "CSPVar"
_OPT_VAR = "CSPVar | None = None"

# name -> ordered (param, type) pairs; mirrors the signatures offered to the LLM.
SIGNATURES: dict[str, tuple[tuple[str, str], ...]] = {}
for _kind in (
    "ABOVE", "BELOW", "ON", "UNDER", "FAR", "AWAY", "ACROSS", "OPPOSITE", "NEAR",
    "BESIDE", "CLOSE", "LEFT", "RIGHT", "FRONT", "BEHIND", "CENTER", "MIDDLE", "IN", "INSIDE",
):
    SIGNATURES[f"CONSTRAINT_{_kind}"] = (("target", _VAR), ("anchor", _VAR))
SIGNATURES["CONSTRAINT_BETWEEN"] = (("target", _VAR), ("anchors", "set[CSPVar]"))
for _kind in ("LESS", "MORE"):
    SIGNATURES[f"CONSTRAINT_{_kind}"] = (
        ("target", _VAR), ("reference", _VAR), ("score_func", "str"), ("anchor", _OPT_VAR),
    )
for _kind in ("MAX_OF", "MIN_OF"):
    SIGNATURES[f"CONSTRAINT_{_kind}"] = (("target", _VAR), ("score_func", "str"), ("anchor", _OPT_VAR))
SIGNATURES["DEFINE_NEGATIVE_VARIABLE"] = (("labels", "list[str]"),)
SIGNATURES["DEFINE_VARIABLE"] = (("labels", "list[str]"),)
SIGNATURES["SET_TARGET"] = (("obj", _VAR),)

_RETURNS = {"DEFINE_NEGATIVE_VARIABLE": "CSPVar", "DEFINE_VARIABLE": "CSPVar", "SET_TARGET": "None"}

ALIASES = {"DEF_VAR": "DEFINE_VARIABLE", "DEF_NEG_VAR": "DEFINE_NEGATIVE_VARIABLE"}

_SCORE_HELP = {
    ScoreFunc.DISTANCE: "distance from the instance to the anchor instance (needs anchor)",
    ScoreFunc.SIZE_X: "bounding box extent along the x-axis",
    ScoreFunc.SIZE_Y: "bounding box extent along the y-axis",
    ScoreFunc.SIZE_Z: "bounding box extent along the z-axis (height)",
    ScoreFunc.SIZE: "largest of the three bounding box extents",
    ScoreFunc.POSITION_Z: "z-coordinate of the instance center",
    ScoreFunc.LEFT: "higher for instances further to the left",
    ScoreFunc.RIGHT: "higher for instances further to the right",
    ScoreFunc.FRONT: "higher for instances further to the front (away from the room center)",
    ScoreFunc.DISTANCE_TO_CENTER: "distance from the instance to the room center",
    ScoreFunc.DISTANCE_TO_MIDDLE: "same as distance-to-center",
}


def _signature_line(name: str) -> str:
    params = ", ".join(f"{p}: {t}" for p, t in SIGNATURES[name])
    return f"{name}({params}) -> {_RETURNS.get(name, 'CSPConstraint')}"


def registry_signatures() -> str:
    return "\n".join(_signature_line(name) for name in SIGNATURES)


def score_function_list() -> str:
    return "\n".join(f'"{f.value}": {_SCORE_HELP[f]}' for f in ScoreFunc)


def canonical_name(func_name: str) -> str | None:
    if func_name in SIGNATURES:
        return func_name
    if func_name in ALIASES:
        return ALIASES[func_name]
    prefixed = "CONSTRAINT_" + func_name
    if prefixed in SIGNATURES:
        return prefixed
    return None


# ---------------------------------------------------------------- lowering


def _edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass
class _Lowerer:
    strict: bool
    diags: list[Diagnostic] = field(default_factory=list)
    variables: dict[str, CspVariable] = field(default_factory=dict)
    constraints: list[CspConstraint] = field(default_factory=list)
    target: str | None = None

    def error(self, msg: str, line: int = 0, col: int = 0):
        self.diags.append(Diagnostic(line, col, "error", msg))

    def warn(self, msg: str, line: int = 0, col: int = 0):
        self.diags.append(Diagnostic(line, col, "warning", msg))

    def resolve(self, name: str, call: Call) -> str | None:
        if name in self.variables:
            return name
        if not self.strict:
            close = [v for v in self.variables if _edit_distance(v, name) <= 1]
            if len(close) == 1:
                self.warn(f"undefined variable {name!r} repaired to {close[0]!r}", call.line, call.col)
                return close[0]
        self.error(f"undefined variable {name!r}", call.line, call.col)
        return None

    def args(self, call: Call, canon: str) -> dict[str, Value] | None:
        params = [p for p, _ in SIGNATURES[canon]]
        out = dict(call.kwargs)
        if call.positional is not None:
            out = {params[0]: call.positional, **out}
        unknown = [k for k in out if k not in params]
        if unknown:
            self.error(f"{canon} got unexpected argument(s) {', '.join(unknown)}", call.line, call.col)
            return None
        required = [p for p, t in SIGNATURES[canon] if not t.endswith("= None")]
        missing = [p for p in required if p not in out]
        if missing:
            self.error(f"{canon} missing argument(s) {', '.join(missing)}", call.line, call.col)
            return None
        return out

    def var_arg(self, value: Value, key: str, call: Call) -> str | None:
        if not isinstance(value, VarRef):
            self.error(f"argument {key!r} must be a variable", call.line, call.col)
            return None
        return self.resolve(value.name, call)

    def define(self, stmt: ProgramStmt, canon: str, args: dict[str, Value]):
        call = stmt.call
        if not isinstance(stmt, Assign):
            self.error(f"{canon} result must be assigned to a variable", call.line, call.col)
            return
        labels = args["labels"]
        if isinstance(labels, StringLit):
            if self.strict:
                self.error("labels must be a list of strings", call.line, call.col)
                return
            labels = StringList((labels.value,))
        if not isinstance(labels, StringList):
            self.error("labels must be a list of strings", call.line, call.col)
            return
        label_set = frozenset(normalize_label(s) for s in labels.values) - {""}
        if not label_set:
            self.error("labels must be non-empty", call.line, call.col)
            return
        if stmt.var_name in self.variables:
            self.error(f"duplicate variable {stmt.var_name!r}", call.line, call.col)
            return
        polarity = Polarity.NEGATIVE if canon == "DEFINE_NEGATIVE_VARIABLE" else Polarity.NORMAL
        self.variables[stmt.var_name] = CspVariable(stmt.var_name, label_set, polarity)

    def constrain(self, call: Call, canon: str, args: dict[str, Value]):
        kind = RelationKind[canon.removeprefix("CONSTRAINT_")]
        target = self.var_arg(args["target"], "target", call)
        anchors: list[str | None] = []
        reference = None
        score = None
        if kind is RelationKind.BETWEEN:
            val = args["anchors"]
            if isinstance(val, VarSet):
                names = list(val.names)
            elif isinstance(val, VarRef):
                names = [val.name]
            else:
                self.error("anchors must be a set of variables", call.line, call.col)
                return
            if len(names) < 2:
                self.error("BETWEEN needs at least two anchors", call.line, call.col)
                return
            anchors = [self.resolve(n, call) for n in names]
        elif kind.is_spatial:
            anchors = [self.var_arg(args["anchor"], "anchor", call)]
        else:
            raw = args["score_func"]
            if not isinstance(raw, StringLit):
                self.error("score_func must be a string", call.line, call.col)
                return
            try:
                score = ScoreFunc(raw.value.strip().lower())
            except ValueError:
                self.error(f"unknown score function {raw.value!r}", call.line, call.col)
                return
            if kind.is_comparison:
                reference = self.var_arg(args["reference"], "reference", call)
            anchor = args.get("anchor")
            if anchor is not None and not isinstance(anchor, NoneLit):
                anchors = [self.var_arg(anchor, "anchor", call)]
            if score.needs_anchor and not anchors:
                self.error(f"score function {score.value!r} requires an anchor", call.line, call.col)
                return
            if anchors and not score.needs_anchor:
                if self.strict:
                    self.error(f"score function {score.value!r} takes no anchor", call.line, call.col)
                    return
                self.warn(f"anchor ignored for score function {score.value!r}", call.line, call.col)
                anchors = []
        if target is None or None in anchors or (kind.is_comparison and reference is None):
            return
        con = CspConstraint(kind, target, tuple(anchors), reference, score, call.line)
        negs = [n for n in con.variables if self.variables[n].negative]
        if len(negs) > 1:
            self.error("a constraint may involve at most one negative variable", call.line, call.col)
            return
        if negs and kind.is_minmax:
            self.error("negative variables cannot take part in min/max constraints", call.line, call.col)
            return
        if len(set(con.variables)) != len(con.variables):
            self.error("a constraint cannot relate a variable to itself", call.line, call.col)
            return
        self.constraints.append(con)

    def run(self, stmts: list[ProgramStmt]) -> Csp:
        target_at = None
        for idx, stmt in enumerate(stmts):
            call = stmt.call
            canon = canonical_name(call.func_name)
            if canon == "SET_TARGET" and target_at is not None:
                self.error("multiple SET_TARGET calls", call.line, call.col)
                continue
            if target_at is not None:
                if self.strict:
                    self.error("statement after SET_TARGET", call.line, call.col)
                else:
                    self.warn("statement after SET_TARGET ignored", call.line, call.col)
                continue
            if canon is None:
                if self.strict:
                    self.error(f"unknown function {call.func_name!r}", call.line, call.col)
                else:
                    self.warn(f"unknown function {call.func_name!r} skipped", call.line, call.col)
                continue
            args = self.args(call, canon)
            if args is None:
                continue
            if canon.startswith("DEFINE_"):
                self.define(stmt, canon, args)
            elif canon == "SET_TARGET":
                target_at = idx
                name = self.var_arg(args["obj"], "obj", call)
                if name is not None:
                    if self.variables[name].negative:
                        self.error("target cannot be a negative variable", call.line, call.col)
                    self.target = name
            else:
                self.constrain(call, canon, args)

        if target_at is None:
            self.error("target not set")
        used = {n for c in self.constraints for n in c.variables}
        for name in self.variables:
            if name not in used and name != self.target:
                if self.strict:
                    self.error(f"variable {name!r} is not used by any constraint")
                else:
                    self.warn(f"variable {name!r} is not used by any constraint")
        if any(d.severity == "error" for d in self.diags):
            raise LoweringError(self.diags)
        return Csp(tuple(self.variables.values()), tuple(self.constraints), self.target)


def lower(stmts: list[ProgramStmt], strict: bool = False) -> tuple[Csp, list[Diagnostic]]:
    """Lower parsed statements to a `Csp`.

    Strict mode rejects unknown functions, statements after SET_TARGET and
    unused variables. Lenient mode skips or warns about them and repairs an
    undefined variable name when exactly one defined name is one edit away.

    Raises:
        LoweringError: carrying every diagnostic, when any error was found.
    """
    low = _Lowerer(strict)
    csp = low.run(stmts)
    return csp, low.diags


def compile_program(text: str, strict: bool = False) -> tuple[Csp, list[Diagnostic]]:
    return lower(parse(text), strict)
