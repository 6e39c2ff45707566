"""Formula language: lexer, parser, printer, normalizer, extractors.

Grammar (EBNF, whitespace insignificant):

    formula  = "=" expr
    expr     = concat { cmpop concat }            cmpop: = <> < <= > >=
    concat   = addsub { "&" addsub }
    addsub   = muldiv { ("+" | "-") muldiv }
    muldiv   = unary { ("*" | "/") unary }
    unary    = "-" unary | power
    power    = atom [ "^" unary ]                 right-associative
    atom     = NUMBER | STRING | TRUE | FALSE | ref | ref ":" ref
             | NAME "(" expr { "," expr } ")" | "(" expr ")"

Binary comparisons bind loosest, then "&", then "+/-", then "*//",
then unary minus, then "^" (so "-2^2" is -(2^2)).  A "-" directly in
front of a numeric literal folds into the literal, which lets evolved
negative coefficients print and re-parse to the identical tree.

Supported functions: SUM, AVERAGE, MIN, MAX, COUNT, IF, ABS, ROUND.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import (MalformedAddress, ParseError, ParseFailure,
                     UnknownFunction, UnknownSlot)
from .model import (CellAddress, col_to_index, format_number, MAX_COL,
                    MAX_ROW, Workbook)

# name -> (min args, max args or None)
FUNCTIONS: dict[str, tuple[int, int | None]] = {
    "SUM": (1, None),
    "AVERAGE": (1, None),
    "MIN": (1, None),
    "MAX": (1, None),
    "COUNT": (1, None),
    "IF": (3, 3),
    "ABS": (1, 1),
    "ROUND": (2, 2),
}


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class NumberLit(Node):
    value: float


@dataclass(frozen=True)
class TextLit(Node):
    value: str


@dataclass(frozen=True)
class BoolLit(Node):
    value: bool


@dataclass(frozen=True)
class Ref(Node):
    address: CellAddress


@dataclass(frozen=True)
class Range(Node):
    start: CellAddress
    end: CellAddress


@dataclass(frozen=True)
class Unary(Node):
    op: str  # "-"
    operand: Node


@dataclass(frozen=True)
class Binary(Node):
    op: str  # + - * / ^ = <> < <= > >= &
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple[Node, ...]


def children(node: Node) -> tuple[Node, ...]:
    if isinstance(node, Unary):
        return (node.operand,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    return ()


def _replace_children(node: Node, new: tuple[Node, ...]) -> Node:
    if isinstance(node, Unary):
        return Unary(node.op, new[0])
    if isinstance(node, Binary):
        return Binary(node.op, new[0], new[1])
    if isinstance(node, Call):
        return Call(node.name, new)
    return node


def walk(node: Node, path: tuple[int, ...] = ()):
    """Depth-first, children left to right; yields (node, path)."""
    yield node, path
    for i, child in enumerate(children(node)):
        yield from walk(child, path + (i,))


# ---------------------------------------------------------------------------
# lexer

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<string>"(?:[^"]|"")*")
    | (?P<number>(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)
    | (?P<ref>(?:(?:'(?:[^']|'')*'|[A-Za-z_][A-Za-z0-9_]*)!)?
              \$?[A-Za-z]{1,3}\$?[1-9][0-9]*)
    | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<op><>|<=|>=|[=<>&+\-*/^])
    | (?P<lparen>\()
    | (?P<rparen>\))
    | (?P<comma>,)
    | (?P<colon>:)
    """,
    re.VERBOSE,
)

_REF_PARTS_RE = re.compile(
    r"""^
    (?:(?:'(?P<qsheet>(?:[^']|'')*)'|(?P<sheet>[A-Za-z_][A-Za-z0-9_]*))!)?
    (?P<cabs>\$?)(?P<col>[A-Za-z]{1,3})(?P<rabs>\$?)(?P<row>[1-9][0-9]*)
    $""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # string number ref name op lparen rparen comma colon eof
    text: str
    offset: int


def tokenize(source: str, start: int = 0) -> list[Token]:
    tokens: list[Token] = []
    pos = start
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("eof", "", pos))
    return tokens


def _ref_address(token: Token, default_sheet: str) -> CellAddress:
    m = _REF_PARTS_RE.match(token.text)
    if m is None:  # the lexer regex guarantees a match
        raise ParseError(f"bad reference {token.text!r}", token.offset)
    if m.group("qsheet") is not None:
        sheet = m.group("qsheet").replace("''", "'")
    elif m.group("sheet") is not None:
        sheet = m.group("sheet")
    else:
        sheet = default_sheet
    col = col_to_index(m.group("col"))
    row = int(m.group("row"))
    if col > MAX_COL or row > MAX_ROW:
        raise ParseError(f"reference {token.text!r} out of grid bounds",
                         token.offset)
    try:
        return CellAddress(sheet, row, col,
                           row_absolute=bool(m.group("rabs")),
                           col_absolute=bool(m.group("cabs")))
    except MalformedAddress as exc:
        raise ParseError(str(exc), token.offset) from exc


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, tokens: list[Token], default_sheet: str):
        self.tokens = tokens
        self.i = 0
        self.default_sheet = default_sheet
        self.expected: list[str] = []

    @property
    def cur(self) -> Token:
        return self.tokens[self.i]

    def consume(self, kind: str, text: str | None = None) -> Token | None:
        tok = self.cur
        if tok.kind == kind and (text is None or tok.text == text):
            self.i += 1
            self.expected = []
            return tok
        self.expected.append(text if text is not None else kind)
        return None

    def fail(self) -> "ParseError":
        tok = self.cur
        got = "end of formula" if tok.kind == "eof" else repr(tok.text)
        expected = sorted(set(self.expected))
        return ParseError(
            f"expected one of {', '.join(expected)}; got {got}",
            tok.offset, expected,
        )

    def parse(self) -> Node:
        node = self.expr()
        if self.cur.kind != "eof":
            self.expected.append("end of formula")
            raise self.fail()
        return node

    def expr(self) -> Node:
        node = self.concat()
        while True:
            tok = None
            for op in ("<>", "<=", ">=", "<", ">", "="):
                tok = self.consume("op", op)
                if tok:
                    break
            if not tok:
                return node
            node = Binary(tok.text, node, self.concat())

    def concat(self) -> Node:
        node = self.addsub()
        while self.consume("op", "&"):
            node = Binary("&", node, self.addsub())
        return node

    def addsub(self) -> Node:
        node = self.muldiv()
        while True:
            if self.consume("op", "+"):
                node = Binary("+", node, self.muldiv())
            elif self.consume("op", "-"):
                node = Binary("-", node, self.muldiv())
            else:
                return node

    def muldiv(self) -> Node:
        node = self.unary()
        while True:
            if self.consume("op", "*"):
                node = Binary("*", node, self.unary())
            elif self.consume("op", "/"):
                node = Binary("/", node, self.unary())
            else:
                return node

    def unary(self) -> Node:
        if self.consume("op", "-"):
            operand = self.unary()
            if isinstance(operand, NumberLit):  # fold sign into the literal
                return NumberLit(-operand.value)
            return Unary("-", operand)
        return self.power()

    def power(self) -> Node:
        node = self.atom()
        if self.consume("op", "^"):
            return Binary("^", node, self.unary())
        return node

    def atom(self) -> Node:
        tok = self.consume("number")
        if tok:
            return NumberLit(float(tok.text))
        tok = self.consume("string")
        if tok:
            return TextLit(tok.text[1:-1].replace('""', '"'))
        tok = self.consume("ref")
        if tok:
            start = _ref_address(tok, self.default_sheet)
            if self.consume("colon"):
                end_tok = self.consume("ref")
                if not end_tok:
                    raise self.fail()
                end = _ref_address(end_tok, start.sheet)
                if end.sheet.lower() != start.sheet.lower():
                    raise ParseError("range endpoints must share a sheet",
                                     end_tok.offset)
                return _canonical_range(start, end)
            return Ref(start)
        tok = self.consume("name")
        if tok:
            return self.name_atom(tok)
        if self.consume("lparen"):
            node = self.expr()
            if not self.consume("rparen"):
                raise self.fail()
            return node
        raise self.fail()

    def name_atom(self, tok: Token) -> Node:
        name = tok.text.upper()
        if self.consume("lparen"):
            if name not in FUNCTIONS:
                raise UnknownFunction(name, tok.offset)
            args = [self.expr()]
            while self.consume("comma"):
                args.append(self.expr())
            if not self.consume("rparen"):
                raise self.fail()
            lo, hi = FUNCTIONS[name]
            if len(args) < lo or (hi is not None and len(args) > hi):
                raise ParseError(
                    f"{name} takes {_arity_text(lo, hi)} argument(s), "
                    f"got {len(args)}",
                    tok.offset,
                )
            return Call(name, tuple(args))
        if name in ("TRUE", "FALSE"):
            return BoolLit(name == "TRUE")
        raise ParseError(f"unexpected name {tok.text!r}", tok.offset)


def _arity_text(lo: int, hi: int | None) -> str:
    if hi is None:
        return f"at least {lo}"
    if lo == hi:
        return str(lo)
    return f"{lo}..{hi}"


def _canonical_range(a: CellAddress, b: CellAddress) -> Range:
    """Normalize corners so start is top-left; $-flags travel with their
    coordinate."""
    if a.row <= b.row:
        r1, f1, r2, f2 = a.row, a.row_absolute, b.row, b.row_absolute
    else:
        r1, f1, r2, f2 = b.row, b.row_absolute, a.row, a.row_absolute
    if a.col <= b.col:
        c1, g1, c2, g2 = a.col, a.col_absolute, b.col, b.col_absolute
    else:
        c1, g1, c2, g2 = b.col, b.col_absolute, a.col, a.col_absolute
    return Range(
        CellAddress(a.sheet, r1, c1, f1, g1),
        CellAddress(a.sheet, r2, c2, f2, g2),
    )


def parse_formula(source: str, default_sheet: str) -> Node:
    """Parse "=..." into an AST; raises ParseError/UnknownFunction."""
    if not source.startswith("="):
        raise ParseError("formula must start with '='", 0)
    tokens = tokenize(source, start=1)
    return _Parser(tokens, default_sheet).parse()


def parse_workbook_formulas(workbook: Workbook) -> dict[CellAddress, Node]:
    """Parse every formula cell; raises ParseFailure listing every cell
    whose formula does not parse."""
    asts: dict[CellAddress, Node] = {}
    bad: list[CellAddress] = []
    for cell in workbook.iter_cells():
        if not cell.is_formula:
            continue
        try:
            asts[cell.address] = parse_formula(cell.formula,
                                               cell.address.sheet)
        except ParseError:
            bad.append(cell.address)
    if bad:
        raise ParseFailure(bad)
    return asts


# ---------------------------------------------------------------------------
# printer and normalizer

# binding levels: cmp=1 & =2 +- =3 */ =4 unary=5 ^=6 atom=7
_BIN_LEVEL = {"=": 1, "<>": 1, "<": 1, "<=": 1, ">": 1, ">=": 1,
              "&": 2, "+": 3, "-": 3, "*": 4, "/": 4, "^": 6}


def _level(node: Node) -> int:
    if isinstance(node, Binary):
        return _BIN_LEVEL[node.op]
    if isinstance(node, Unary):
        return 5
    if isinstance(node, NumberLit) and repr(node.value).startswith("-"):
        return 5  # a negative literal prints with a leading "-"
    return 7


def _print(node: Node, mask_refs: bool, default_sheet: str | None) -> str:
    if isinstance(node, NumberLit):
        return format_number(node.value)
    if isinstance(node, TextLit):
        return '"{}"'.format(node.value.replace('"', '""'))
    if isinstance(node, BoolLit):
        return "TRUE" if node.value else "FALSE"
    if isinstance(node, Ref):
        if mask_refs:
            return "R"
        return node.address.text(relative_to=default_sheet)
    if isinstance(node, Range):
        if mask_refs:
            return "R:R"
        return "{}:{}".format(node.start.text(relative_to=default_sheet),
                              node.end.ref_text())
    if isinstance(node, Unary):
        inner = _wrap(node.operand, 5, mask_refs, default_sheet)
        return "-" + inner
    if isinstance(node, Binary):
        lvl = _BIN_LEVEL[node.op]
        if node.op == "^":  # grammar: power = atom [ "^" unary ]
            left_min, right_min = 7, 5
        else:  # left-associative rows
            left_min, right_min = lvl, lvl + 1
        return "{}{}{}".format(
            _wrap(node.left, left_min, mask_refs, default_sheet),
            node.op,
            _wrap(node.right, right_min, mask_refs, default_sheet),
        )
    if isinstance(node, Call):
        args = ",".join(_print(a, mask_refs, default_sheet) for a in node.args)
        return f"{node.name}({args})"
    raise TypeError(f"not an AST node: {node!r}")


def _wrap(node: Node, min_level: int, mask_refs: bool,
          default_sheet: str | None) -> str:
    text = _print(node, mask_refs, default_sheet)
    if _level(node) < min_level:
        return f"({text})"
    return text


def print_formula(ast: Node, default_sheet: str | None = None) -> str:
    """Canonical "=..." source with minimal parentheses.

    References on ``default_sheet`` print unqualified; parse_formula of
    the result reproduces the tree (for parser-produced trees).
    """
    return "=" + _print(ast, mask_refs=False, default_sheet=default_sheet)


def normalize(ast: Node) -> str:
    """Canonical formula string with every reference token masked as "R"
    (a range prints "R:R"); literals stay.  Two trees normalize equal
    exactly when they differ only in their reference operands."""
    return _print(ast, mask_refs=True, default_sheet=None)


_MASK_ADDR = CellAddress("_", 1, 1)


def mask_references(node: Node) -> Node:
    """Replace every Ref/Range with a fixed placeholder; the structural
    counterpart of normalize(), used to cross-check it."""
    if isinstance(node, Ref):
        return Ref(_MASK_ADDR)
    if isinstance(node, Range):
        return Range(_MASK_ADDR, _MASK_ADDR)
    kids = children(node)
    if not kids:
        return node
    return _replace_children(node, tuple(mask_references(c) for c in kids))


# ---------------------------------------------------------------------------
# reference and literal-slot extraction


@dataclass(frozen=True)
class RefEntry:
    """One reference occurrence: a cell or a range."""

    ordinal: int
    target: Ref | Range
    path: tuple[int, ...]

    @property
    def is_range(self) -> bool:
        return isinstance(self.target, Range)


def extract_refs(ast: Node) -> list[RefEntry]:
    """Reference occurrences in stable left-to-right traversal order;
    duplicates kept, one entry per Range."""
    out: list[RefEntry] = []
    for node, path in walk(ast):
        if isinstance(node, (Ref, Range)):
            out.append(RefEntry(len(out), node, path))
    return out


@dataclass(frozen=True)
class LiteralSlot:
    """Handle for one numeric literal inside one cell's formula."""

    owner: CellAddress
    ordinal: int
    original_value: float


def extract_literal_slots(ast: Node, owner: CellAddress) -> list[LiteralSlot]:
    """One slot per NumberLit, in traversal order."""
    out: list[LiteralSlot] = []
    for node, _ in walk(ast):
        if isinstance(node, NumberLit):
            out.append(LiteralSlot(owner, len(out), node.value))
    return out


def rewrite_literals(ast: Node, assignment: dict[int, float]) -> Node:
    """New tree with NumberLit values replaced per slot ordinal.

    Raises UnknownSlot for ordinals the formula does not have.
    """
    total = sum(1 for n, _ in walk(ast) if isinstance(n, NumberLit))
    bad = [k for k in assignment if not (0 <= k < total)]
    if bad:
        raise UnknownSlot(f"no literal slot(s) {sorted(bad)} (formula has {total})")
    counter = [0]

    def rebuild(node: Node) -> Node:
        if isinstance(node, NumberLit):
            ordinal = counter[0]
            counter[0] += 1
            if ordinal in assignment:
                return NumberLit(float(assignment[ordinal]))
            return node
        kids = children(node)
        if not kids:
            return node
        return _replace_children(node, tuple(rebuild(c) for c in kids))

    return rebuild(ast)
