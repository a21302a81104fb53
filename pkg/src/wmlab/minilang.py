"""MiniLang: a finite-vocabulary toy imperative language.

One function per program, integer-only semantics, and a fixed-width surface
syntax for the two decoration kinds so that every program in a transformation
space has the same token count and the slot structure is recoverable from the
token stream alone:

    comment slot   ->  "#" (<word> | "_")
    dead-code slot ->  "sink" (<snippet-id> | "_") ";"

Dead snippets are single vocabulary tokens whose execution touches only the
reserved sink accumulator, which real code can never read, so semantic
inertness holds by construction.

Grammar (whitespace-separated lexemes):

    program  := "fn" "f" "(" [ident ("," ident)*] ")" "{" item* "}"
    item     := stmt | "#" (word|"_") | "sink" (snippet|"_") ";"
    stmt     := "let" ident "=" expr ";"
              | ident "=" expr ";"
              | "if" "(" expr ")" "{" item* "}" ["else" "{" item* "}"]
              | "while" "(" expr ")" "{" item* "}"
              | "return" expr ";"
    expr     := sum [("=="|"!="|"<"|"<="|">"|">=") sum]
    sum      := term (("+"|"-") term)*
    term     := atom (("*"|"/"|"%") atom)*
    atom     := int | ident | "(" expr ")"

Arithmetic is checked 64-bit: overflow, division and modulo by zero are
runtime errors, never wraparound.  Division and modulo follow Python's
flooring semantics.  Comparisons yield 1/0; conditions are true iff nonzero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import ArityError, EmptyInputError, LexError, ParseError

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1

_KEYWORDS = [
    "fn", "f", "(", ")", "{", "}", ";", ",", "=", "let", "if", "else",
    "while", "return", "#", "_", "sink",
    "==", "!=", "<", "<=", ">", ">=", "+", "-", "*", "/", "%",
]

_LETTERS = [c for c in "abcdeghijklmnopqrstuvwxyz"]  # 'f' is the function name
_IDENTIFIERS = _LETTERS + [f"x{i}" for i in range(39)]  # 64 names

_COMMENT_WORDS = [
    "note", "todo", "fixme", "check", "init", "setup", "loop", "step",
    "done", "tmp", "total", "accum", "base", "head", "tail", "left",
    "right", "top", "bottom", "middle", "fast", "slow", "safe", "raw",
    "old", "new", "next", "prev", "first", "last", "main", "aux",
    "alpha", "beta", "gamma", "delta", "zeta", "theta", "iota", "kappa",
    "sigma", "omega", "north", "south", "east", "west", "red", "blue",
    "green", "gray", "one", "two", "three", "four", "five", "six",
    "seven", "eight", "nine", "ten", "zero", "half", "twice", "final",
]

_SNIPPETS = [f"d{i}" for i in range(16)]

# Per-snippet effect on the sink accumulator: sink <- (sink * m + a) mod 2^31.
_SNIPPET_EFFECTS = [(3, 1), (5, 7), (7, 11), (9, 2), (11, 13), (13, 3),
                    (15, 17), (17, 5), (19, 23), (21, 8), (23, 29), (25, 4),
                    (27, 31), (29, 9), (31, 37), (33, 6)]


class Vocabulary:
    """Fixed token universe with contiguous ids and disjoint pools."""

    def __init__(self):
        self.lexemes: list[str] = []
        self.keyword_ids: dict[str, int] = {}
        for lx in _KEYWORDS:
            self.keyword_ids[lx] = len(self.lexemes)
            self.lexemes.append(lx)
        self.identifier_ids = self._add_pool(_IDENTIFIERS)
        self.int_ids = self._add_pool([str(i) for i in range(100)])
        self.word_ids = self._add_pool(_COMMENT_WORDS)
        self.snippet_ids = self._add_pool(_SNIPPETS)
        self.id_of = {lx: i for i, lx in enumerate(self.lexemes)}
        assert len(self.id_of) == len(self.lexemes), "duplicate lexeme"
        assert len(self) >= 200
        self._ident_set = frozenset(self.identifier_ids)
        self._int_set = frozenset(self.int_ids)
        self._word_set = frozenset(self.word_ids)
        self._snippet_set = frozenset(self.snippet_ids)

    def _add_pool(self, lexemes):
        ids = []
        for lx in lexemes:
            ids.append(len(self.lexemes))
            self.lexemes.append(lx)
        return ids

    def __len__(self) -> int:
        return len(self.lexemes)

    def kw(self, lexeme: str) -> int:
        return self.keyword_ids[lexeme]

    def int_token(self, value: int) -> int:
        return self.int_ids[value]

    def int_value(self, token: int) -> int:
        return token - self.int_ids[0]

    def snippet_index(self, token: int) -> int:
        return token - self.snippet_ids[0]

    def is_identifier(self, token: int) -> bool:
        return token in self._ident_set

    def is_int(self, token: int) -> bool:
        return token in self._int_set

    def is_word(self, token: int) -> bool:
        return token in self._word_set

    def is_snippet(self, token: int) -> bool:
        return token in self._snippet_set

    def render(self, tokens) -> str:
        return " ".join(self.lexemes[t] for t in tokens)


VOCAB = Vocabulary()

_CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")
_ADD_OPS = ("+", "-")
_MUL_OPS = ("*", "/", "%")


def lex(text: str) -> tuple[int, ...]:
    """Tokenize whitespace-separated source text into vocabulary ids."""
    out = []
    for pos, lx in enumerate(text.split()):
        tok = VOCAB.id_of.get(lx)
        if tok is None:
            raise LexError(pos, lx)
        out.append(tok)
    return tuple(out)


class Skeleton:
    """Structure shared by every program of one equivalent space.

    The AST references variables by declaration-order slot index and
    decorations by slot index, so a concrete program is the skeleton plus
    three state vectors (variable names, comment words, dead snippet ids).
    """

    __slots__ = ("root", "param_count", "n_vars", "n_comment_slots",
                 "n_dead_slots", "_hash")

    def __init__(self, root, param_count, n_vars, n_comment_slots, n_dead_slots):
        self.root = root
        self.param_count = param_count
        self.n_vars = n_vars
        self.n_comment_slots = n_comment_slots
        self.n_dead_slots = n_dead_slots
        self._hash = hash((root, param_count))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        return (isinstance(other, Skeleton) and self._hash == other._hash
                and self.root == other.root
                and self.param_count == other.param_count)


class Program:
    """Immutable program: a skeleton plus its receptor state."""

    __slots__ = ("skeleton", "var_names", "comment_state", "dead_state",
                 "_tokens", "_hash")

    def __init__(self, skeleton: Skeleton, var_names, comment_state, dead_state):
        self.skeleton = skeleton
        self.var_names = tuple(var_names)
        self.comment_state = tuple(comment_state)
        self.dead_state = tuple(dead_state)
        self._tokens = None
        self._hash = hash((skeleton._hash, self.var_names,
                           self.comment_state, self.dead_state))

    @property
    def tokens(self) -> tuple[int, ...]:
        if self._tokens is None:
            self._tokens = serialize(self)
        return self._tokens

    def state(self):
        return (self.var_names, self.comment_state, self.dead_state)

    def replace_state(self, var_names=None, comment_state=None, dead_state=None):
        return Program(
            self.skeleton,
            self.var_names if var_names is None else var_names,
            self.comment_state if comment_state is None else comment_state,
            self.dead_state if dead_state is None else dead_state,
        )

    def __eq__(self, other):
        if self is other:
            return True
        return (isinstance(other, Program) and self._hash == other._hash
                and self.state() == other.state()
                and self.skeleton == other.skeleton)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"<Program {VOCAB.render(self.tokens)!r}>"

    def source(self) -> str:
        return VOCAB.render(self.tokens)


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.pos = 0
        self.var_slots: dict[int, int] = {}  # name token -> slot
        self.var_names: list[int] = []
        self.comment_state: list[Optional[int]] = []
        self.dead_state: list[Optional[int]] = []

    def error(self, expected):
        found = None
        if self.pos < len(self.toks):
            found = VOCAB.lexemes[self.toks[self.pos]]
        raise ParseError(self.pos, expected, found)

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            self.error("more input")
        self.pos += 1
        return tok

    def expect(self, lexeme):
        if self.peek() != VOCAB.kw(lexeme):
            self.error(repr(lexeme))
        self.pos += 1

    def ident(self):
        tok = self.peek()
        if tok is None or not VOCAB.is_identifier(tok):
            self.error("identifier")
        self.pos += 1
        return tok

    def declare(self, name_tok):
        if name_tok in self.var_slots:
            self.error("fresh identifier (names must be distinct)")
        slot = len(self.var_names)
        self.var_slots[name_tok] = slot
        self.var_names.append(name_tok)
        return slot

    def use(self, name_tok):
        slot = self.var_slots.get(name_tok)
        if slot is None:
            self.error("declared identifier")
        return slot

    def program(self):
        self.expect("fn")
        self.expect("f")
        self.expect("(")
        params = []
        if self.peek() != VOCAB.kw(")"):
            params.append(self.declare(self.ident()))
            while self.peek() == VOCAB.kw(","):
                self.pos += 1
                params.append(self.declare(self.ident()))
        self.expect(")")
        self.expect("{")
        body = self.items()
        self.expect("}")
        if self.pos != len(self.toks):
            self.error("end of input")
        return ("fn", len(params), body)

    def items(self):
        out = []
        while True:
            tok = self.peek()
            if tok is None or tok == VOCAB.kw("}"):
                return tuple(out)
            out.append(self.item())

    def item(self):
        tok = self.peek()
        if tok == VOCAB.kw("#"):
            self.pos += 1
            payload = self.take()
            if payload == VOCAB.kw("_"):
                state = None
            elif VOCAB.is_word(payload):
                state = payload
            else:
                self.error("comment word or '_'")
            slot = len(self.comment_state)
            self.comment_state.append(state)
            return ("comment", slot)
        if tok == VOCAB.kw("sink"):
            self.pos += 1
            payload = self.take()
            if payload == VOCAB.kw("_"):
                state = None
            elif VOCAB.is_snippet(payload):
                state = payload
            else:
                self.error("snippet id or '_'")
            self.expect(";")
            slot = len(self.dead_state)
            self.dead_state.append(state)
            return ("dead", slot)
        if tok == VOCAB.kw("let"):
            self.pos += 1
            name = self.ident()
            self.expect("=")
            expr = self.expr()
            self.expect(";")
            return ("let", self.declare(name), expr)
        if tok == VOCAB.kw("if"):
            self.pos += 1
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            self.expect("{")
            then = self.items()
            self.expect("}")
            other = None
            if self.peek() == VOCAB.kw("else"):
                self.pos += 1
                self.expect("{")
                other = self.items()
                self.expect("}")
            return ("if", cond, then, other)
        if tok == VOCAB.kw("while"):
            self.pos += 1
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            self.expect("{")
            body = self.items()
            self.expect("}")
            return ("while", cond, body)
        if tok == VOCAB.kw("return"):
            self.pos += 1
            expr = self.expr()
            self.expect(";")
            return ("return", expr)
        if tok is not None and VOCAB.is_identifier(tok):
            self.pos += 1
            slot = self.use(tok)
            self.expect("=")
            expr = self.expr()
            self.expect(";")
            return ("assign", slot, expr)
        self.error("statement, comment or dead slot")

    def expr(self):
        left = self.sum()
        tok = self.peek()
        for op in _CMP_OPS:
            if tok == VOCAB.kw(op):
                self.pos += 1
                return ("bin", op, left, self.sum())
        return left

    def sum(self):
        left = self.term()
        while True:
            tok = self.peek()
            matched = False
            for op in _ADD_OPS:
                if tok == VOCAB.kw(op):
                    self.pos += 1
                    left = ("bin", op, left, self.term())
                    matched = True
                    break
            if not matched:
                return left

    def term(self):
        left = self.atom()
        while True:
            tok = self.peek()
            matched = False
            for op in _MUL_OPS:
                if tok == VOCAB.kw(op):
                    self.pos += 1
                    left = ("bin", op, left, self.atom())
                    matched = True
                    break
            if not matched:
                return left

    def atom(self):
        tok = self.peek()
        if tok is None:
            self.error("expression")
        if VOCAB.is_int(tok):
            self.pos += 1
            return ("int", VOCAB.int_value(tok))
        if VOCAB.is_identifier(tok):
            self.pos += 1
            return ("var", self.use(tok))
        if tok == VOCAB.kw("("):
            self.pos += 1
            inner = self.expr()
            self.expect(")")
            return ("paren", inner)
        self.error("integer, identifier or '('")


def parse(tokens) -> Program:
    """Parse a token sequence into a Program (exact round-trip)."""
    p = _Parser(tuple(tokens))
    root = p.program()
    skel = Skeleton(root, root[1], len(p.var_names),
                    len(p.comment_state), len(p.dead_state))
    return Program(skel, p.var_names, p.comment_state, p.dead_state)


def parse_source(text: str) -> Program:
    return parse(lex(text))


def serialize(program: Program) -> tuple[int, ...]:
    """Deterministic token sequence of a program."""
    out = [VOCAB.kw("fn"), VOCAB.kw("f"), VOCAB.kw("(")]
    skel = program.skeleton
    for i in range(skel.param_count):
        if i:
            out.append(VOCAB.kw(","))
        out.append(program.var_names[i])
    out.append(VOCAB.kw(")"))
    out.append(VOCAB.kw("{"))
    _emit_items(skel.root[2], program, out)
    out.append(VOCAB.kw("}"))
    return tuple(out)


def _emit_items(items, program, out):
    for node in items:
        _emit_item(node, program, out)


def _emit_item(node, program, out):
    kind = node[0]
    kw = VOCAB.kw
    if kind == "comment":
        state = program.comment_state[node[1]]
        out.append(kw("#"))
        out.append(kw("_") if state is None else state)
    elif kind == "dead":
        state = program.dead_state[node[1]]
        out.append(kw("sink"))
        out.append(kw("_") if state is None else state)
        out.append(kw(";"))
    elif kind == "let":
        out.append(kw("let"))
        out.append(program.var_names[node[1]])
        out.append(kw("="))
        _emit_expr(node[2], program, out)
        out.append(kw(";"))
    elif kind == "assign":
        out.append(program.var_names[node[1]])
        out.append(kw("="))
        _emit_expr(node[2], program, out)
        out.append(kw(";"))
    elif kind == "if":
        out.append(kw("if"))
        out.append(kw("("))
        _emit_expr(node[1], program, out)
        out.append(kw(")"))
        out.append(kw("{"))
        _emit_items(node[2], program, out)
        out.append(kw("}"))
        if node[3] is not None:
            out.append(kw("else"))
            out.append(kw("{"))
            _emit_items(node[3], program, out)
            out.append(kw("}"))
    elif kind == "while":
        out.append(kw("while"))
        out.append(kw("("))
        _emit_expr(node[1], program, out)
        out.append(kw(")"))
        out.append(kw("{"))
        _emit_items(node[2], program, out)
        out.append(kw("}"))
    elif kind == "return":
        out.append(kw("return"))
        _emit_expr(node[1], program, out)
        out.append(kw(";"))
    else:
        raise AssertionError(f"unknown node {kind}")


def _emit_expr(node, program, out):
    kind = node[0]
    if kind == "int":
        out.append(VOCAB.int_token(node[1]))
    elif kind == "var":
        out.append(program.var_names[node[1]])
    elif kind == "paren":
        out.append(VOCAB.kw("("))
        _emit_expr(node[1], program, out)
        out.append(VOCAB.kw(")"))
    else:
        _emit_expr(node[2], program, out)
        out.append(VOCAB.kw(node[1]))
        _emit_expr(node[3], program, out)


# --- interpretation ----------------------------------------------------------

DEFAULT_STEP_LIMIT = 100_000


@dataclass(frozen=True)
class EvalOutcome:
    status: str  # "ok" | "runtime_error" | "step_limit_exceeded"
    value: Optional[int] = None
    kind: Optional[str] = None

    @staticmethod
    def ok(value):
        return EvalOutcome("ok", value=value)

    @staticmethod
    def error(kind):
        return EvalOutcome("runtime_error", kind=kind)

    @staticmethod
    def timeout():
        return EvalOutcome("step_limit_exceeded")


class _RuntimeFault(Exception):
    def __init__(self, kind):
        self.kind = kind


class _StepLimit(Exception):
    pass


class _Returned(Exception):
    def __init__(self, value):
        self.value = value


class _Machine:
    def __init__(self, program: Program, step_limit: int):
        self.program = program
        self.env: list[Optional[int]] = [None] * program.skeleton.n_vars
        self.sink = 0
        self.steps_left = step_limit

    def tick(self):
        if self.steps_left <= 0:
            raise _StepLimit()
        self.steps_left -= 1

    def run(self, inputs):
        for i, v in enumerate(inputs):
            self.env[i] = v
        try:
            self.exec_items(self.program.skeleton.root[2])
        except _Returned as r:
            return EvalOutcome.ok(r.value)
        raise _RuntimeFault("no_return")

    def exec_items(self, items):
        for node in items:
            self.exec_item(node)

    def exec_item(self, node):
        kind = node[0]
        if kind == "comment":
            return  # inert, consumes no steps
        if kind == "dead":
            state = self.program.dead_state[node[1]]
            if state is not None:
                m, a = _SNIPPET_EFFECTS[VOCAB.snippet_index(state)]
                self.sink = (self.sink * m + a) & 0x7FFFFFFF
            return  # inert, consumes no steps
        self.tick()
        if kind == "let" or kind == "assign":
            self.env[node[1]] = self.eval(node[2])
        elif kind == "if":
            if self.eval(node[1]) != 0:
                self.exec_items(node[2])
            elif node[3] is not None:
                self.exec_items(node[3])
        elif kind == "while":
            while True:
                self.tick()
                if self.eval(node[1]) == 0:
                    break
                self.exec_items(node[2])
        elif kind == "return":
            raise _Returned(self.eval(node[1]))
        else:
            raise AssertionError(kind)

    def eval(self, node):
        kind = node[0]
        if kind == "int":
            return node[1]
        if kind == "var":
            v = self.env[node[1]]
            if v is None:
                raise _RuntimeFault("unassigned")
            return v
        if kind == "paren":
            return self.eval(node[1])
        op = node[1]
        a = self.eval(node[2])
        b = self.eval(node[3])
        if op == "+":
            r = a + b
        elif op == "-":
            r = a - b
        elif op == "*":
            r = a * b
        elif op == "/":
            if b == 0:
                raise _RuntimeFault("div_zero")
            r = a // b
        elif op == "%":
            if b == 0:
                raise _RuntimeFault("div_zero")
            r = a % b
        elif op == "==":
            return 1 if a == b else 0
        elif op == "!=":
            return 1 if a != b else 0
        elif op == "<":
            return 1 if a < b else 0
        elif op == "<=":
            return 1 if a <= b else 0
        elif op == ">":
            return 1 if a > b else 0
        elif op == ">=":
            return 1 if a >= b else 0
        else:
            raise AssertionError(op)
        if r < INT64_MIN or r > INT64_MAX:
            raise _RuntimeFault("overflow")
        return r


def interpret(program: Program, inputs, step_limit: int = DEFAULT_STEP_LIMIT) -> EvalOutcome:
    """Run the program on integer inputs; pure and deterministic."""
    if len(inputs) != program.skeleton.param_count:
        raise ArityError(
            f"program takes {program.skeleton.param_count} inputs, got {len(inputs)}")
    machine = _Machine(program, step_limit)
    try:
        return machine.run(tuple(inputs))
    except _RuntimeFault as f:
        return EvalOutcome.error(f.kind)
    except _StepLimit:
        return EvalOutcome.timeout()


def strip_decorations(program: Program) -> Program:
    """Program with every comment and dead-code node removed (test helper)."""
    keep = []
    toks = program.tokens
    i = 0
    while i < len(toks):
        if toks[i] == VOCAB.kw("#"):
            i += 2
        elif toks[i] == VOCAB.kw("sink"):
            i += 3
        else:
            keep.append(toks[i])
            i += 1
    return parse(keep)


# --- tasks -------------------------------------------------------------------

@dataclass(frozen=True)
class Task:
    """Prompt surrogate: a template reference plus its acceptance tests."""

    id: str
    template_ref: str
    test_cases: tuple  # ((inputs, expected), ...)
    step_limit: int = DEFAULT_STEP_LIMIT

    def __post_init__(self):
        if len(self.test_cases) < 3:
            raise ValueError("a task needs at least 3 test cases")


def run_test_suite(task: Task, program: Program) -> int:
    """1 iff every test case evaluates to ok(expected); all failures map to 0."""
    for inputs, expected in task.test_cases:
        try:
            outcome = interpret(program, inputs, task.step_limit)
        except ArityError:
            return 0
        if outcome.status != "ok" or outcome.value != expected:
            return 0
    return 1


def pass_at_1(results) -> float:
    results = list(results)
    if not results:
        raise EmptyInputError("pass_at_1 of an empty list")
    return sum(results) / len(results)


def task_to_json(task: Task) -> dict:
    return {
        "id": task.id,
        "template_ref": task.template_ref,
        "test_cases": [[list(inp), exp] for inp, exp in task.test_cases],
        "step_limit": task.step_limit,
    }


def task_from_json(obj: dict) -> Task:
    cases = tuple((tuple(inp), exp) for inp, exp in obj["test_cases"])
    return Task(obj["id"], obj["template_ref"], cases,
                obj.get("step_limit", DEFAULT_STEP_LIMIT))
