"""Straight-line evaluation programs for fitness scoring.

The dependency cone of the annotated cells compiles once into a stack
program: literal cells become preloaded registers, formula cells a
postfix instruction run ending in a store, numeric literals indexed
loads from the genome vector.  Scoring a genome is then one pass over
the instructions with no parsing, hashing, or dispatch on cell graphs,
which is what the population loop needs.

Two executors run the same program: run_pure below, and the compiled
twin in _kernel.pyx.  Both follow the evaluator's value semantics
operation for operation, so all three produce bit-identical numbers.
Text exists only as a tag here (no contents), which is enough for every
operation except ordering/equality over text; a program whose
comparisons might see text does not compile (TapeUnsupported) and the
caller falls back to rewrite-and-evaluate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dataflow import expand_range
from ..errors import WiaError
from ..evaluate import evaluate_cells
from ..formula import (Binary, BoolLit, Call, Node, NumberLit, Range, Ref,
                       TextLit, Unary)
from ..model import CellAddress, ErrorKind, Workbook
from .fitness import (TAG_BOOLEAN, TAG_EMPTY, TAG_ERR_CYCLE, TAG_ERR_DIV0,
                      TAG_ERR_NAME, TAG_ERR_REF, TAG_ERR_VALUE, TAG_NUMBER,
                      TAG_TEXT)


class TapeUnsupported(WiaError):
    """The workbook needs semantics the tape cannot represent."""


_ERR_TAG = {ErrorKind.DIV0: TAG_ERR_DIV0, ErrorKind.VALUE: TAG_ERR_VALUE,
            ErrorKind.CYCLE: TAG_ERR_CYCLE, ErrorKind.REF: TAG_ERR_REF,
            ErrorKind.NAME: TAG_ERR_NAME}

# opcodes
OP_CONST = 0       # push number farg
OP_BOOL = 1        # push boolean farg (0/1)
OP_EMPTY = 2       # push empty
OP_TEXT = 3        # push text (tag only)
OP_ERR = 4         # push error tag arg
OP_CELL = 5        # push register arg
OP_GENE = 6        # push genome slot arg
OP_STORE = 7       # pop into register arg
OP_ADD = 8
OP_SUB = 9
OP_MUL = 10
OP_DIV = 11
OP_POW = 12
OP_NEG = 13
OP_CONCAT = 14
OP_EQ = 15
OP_NE = 16
OP_LT = 17
OP_LE = 18
OP_GT = 19
OP_GE = 20
OP_IFSEL = 21      # pop else, then, cond; push selection
OP_ABS = 22
OP_ROUND = 23
OP_SUM = 24        # pop arg operands
OP_AVG = 25
OP_MIN = 26
OP_MAX = 27
OP_COUNT = 28

_CMP_OPS = {"=": OP_EQ, "<>": OP_NE, "<": OP_LT, "<=": OP_LE,
            ">": OP_GT, ">=": OP_GE}
_ARITH_OPS = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV,
              "^": OP_POW}
_AGG_OPS = {"SUM": OP_SUM, "AVERAGE": OP_AVG, "MIN": OP_MIN,
            "MAX": OP_MAX, "COUNT": OP_COUNT}


@dataclass
class Program:
    """Compiled cone: instruction arrays, preloaded registers, and the
    output register per target cell."""

    code: np.ndarray       # uint8
    arg: np.ndarray        # int32
    farg: np.ndarray       # float64
    reg_tags: np.ndarray   # uint8, initial register tags
    reg_vals: np.ndarray   # float64, initial register values
    out_regs: np.ndarray   # int32, register per target
    targets: tuple[CellAddress, ...]
    n_slots: int
    stack_need: int


class _Emitter:
    def __init__(self):
        self.code: list[int] = []
        self.arg: list[int] = []
        self.farg: list[float] = []
        self.depth = 0
        self.max_depth = 0

    def emit(self, op: int, arg: int = 0, farg: float = 0.0,
             pops: int = 0, pushes: int = 1):
        self.code.append(op)
        self.arg.append(arg)
        self.farg.append(farg)
        self.depth += pushes - pops
        self.max_depth = max(self.max_depth, self.depth)


# possible value kinds, for the static text check
_K_NUM = 1
_K_TEXT = 2
_K_BOOL = 4
_K_EMPTY = 8
_K_ERR = 16
_SCALARS = _K_NUM | _K_TEXT | _K_BOOL | _K_EMPTY | _K_ERR


class _Compiler:
    def __init__(self, workbook: Workbook, asts: dict[CellAddress, Node],
                 slot_index: dict[tuple[CellAddress, int], int],
                 targets: tuple[CellAddress, ...]):
        self.workbook = workbook
        self.asts = asts
        self.slot_index = slot_index
        self.targets = targets
        self.emitter = _Emitter()
        self.register: dict[CellAddress, int] = {}
        self.reg_tags: list[int] = []
        self.reg_vals: list[float] = []
        self.kinds: dict[CellAddress, int] = {}

    def compile(self) -> Program:
        cone = evaluate_cells(self.workbook, set(self.targets), self.asts)
        cyclic = {addr for cycle in cone.cycles for addr in cycle}
        for addr in sorted(cone.values, key=CellAddress.sort_key):
            cell = self.workbook.cell(addr)
            index = len(self.reg_tags)
            self.register[addr] = index
            if addr in cyclic:
                self.reg_tags.append(TAG_ERR_CYCLE)
                self.reg_vals.append(0.0)
                self.kinds[addr] = _K_ERR
            elif cell.is_formula:
                # placeholder; overwritten by this cell's store
                self.reg_tags.append(TAG_EMPTY)
                self.reg_vals.append(0.0)
            else:
                tag, val = _literal_tag(cell.value)
                self.reg_tags.append(tag)
                self.reg_vals.append(val)
                self.kinds[addr] = _kind_of_tag(tag)
        for addr in cone.order:
            ast = self.asts[addr]
            self.kinds[addr] = self.expr(ast, addr, [0])
            self.emitter.emit(OP_STORE, self.register[addr],
                              pops=1, pushes=0)
        e = self.emitter
        return Program(
            code=np.asarray(e.code, dtype=np.uint8),
            arg=np.asarray(e.arg, dtype=np.int32),
            farg=np.asarray(e.farg, dtype=np.float64),
            reg_tags=np.asarray(self.reg_tags, dtype=np.uint8),
            reg_vals=np.asarray(self.reg_vals, dtype=np.float64),
            out_regs=np.asarray([self.register[t] for t in self.targets],
                                dtype=np.int32),
            targets=self.targets,
            n_slots=len(self.slot_index),
            stack_need=max(e.max_depth, 1),
        )

    # expression compilation; returns the kind mask of the pushed value
    def expr(self, node: Node, owner: CellAddress,
             literal_counter: list[int]) -> int:
        emit = self.emitter.emit
        if isinstance(node, NumberLit):
            ordinal = literal_counter[0]
            literal_counter[0] += 1
            emit(OP_GENE, self.slot_index[(owner, ordinal)])
            return _K_NUM
        if isinstance(node, TextLit):
            emit(OP_TEXT)
            return _K_TEXT
        if isinstance(node, BoolLit):
            emit(OP_BOOL, farg=1.0 if node.value else 0.0)
            return _K_BOOL
        if isinstance(node, Ref):
            return self.ref(node.address)
        if isinstance(node, Range):
            emit(OP_ERR, TAG_ERR_VALUE)
            return _K_ERR
        if isinstance(node, Unary):
            kinds = self.expr(node.operand, owner, literal_counter)
            emit(OP_NEG, pops=1)
            return _arith_result(kinds)
        if isinstance(node, Binary):
            return self.binary(node, owner, literal_counter)
        return self.call(node, owner, literal_counter)

    def ref(self, address: CellAddress) -> int:
        resolved = self.workbook.resolve(address)
        if resolved is None:
            self.emitter.emit(OP_ERR, TAG_ERR_REF)
            return _K_ERR
        if resolved in self.register:
            self.emitter.emit(OP_CELL, self.register[resolved])
            return self.kinds[resolved]
        self.emitter.emit(OP_EMPTY)
        return _K_EMPTY

    def binary(self, node: Binary, owner: CellAddress,
               counter: list[int]) -> int:
        left = self.expr(node.left, owner, counter)
        right = self.expr(node.right, owner, counter)
        emit = self.emitter.emit
        if node.op == "&":
            emit(OP_CONCAT, pops=2)
            return _K_TEXT | _K_ERR
        if node.op in _CMP_OPS:
            if (left | right) & _K_TEXT:
                raise TapeUnsupported("text comparison")
            emit(_CMP_OPS[node.op], pops=2)
            return _K_BOOL | _K_ERR
        emit(_ARITH_OPS[node.op], pops=2)
        return _arith_result(left | right)

    def call(self, node: Call, owner: CellAddress, counter: list[int]) -> int:
        emit = self.emitter.emit
        if node.name == "IF":
            cond = self.expr(node.args[0], owner, counter)
            then = self.expr(node.args[1], owner, counter)
            other = self.expr(node.args[2], owner, counter)
            emit(OP_IFSEL, pops=3)
            mask = then | other | _K_ERR
            if cond & _K_TEXT:
                mask |= _K_ERR
            return mask
        if node.name == "ABS":
            kinds = self.expr(node.args[0], owner, counter)
            emit(OP_ABS, pops=1)
            return _arith_result(kinds)
        if node.name == "ROUND":
            self.expr(node.args[0], owner, counter)
            self.expr(node.args[1], owner, counter)
            emit(OP_ROUND, pops=2)
            return _K_NUM | _K_ERR
        count = 0
        for arg in node.args:
            if isinstance(arg, Range):
                count += self.range_members(arg)
            else:
                self.expr(arg, owner, counter)
                count += 1
        emit(_AGG_OPS[node.name], count, pops=count)
        return _K_NUM | _K_ERR

    def range_members(self, rng: Range) -> int:
        sheet = self.workbook.sheet(rng.start.sheet)
        if sheet is None:
            self.emitter.emit(OP_ERR, TAG_ERR_REF)
            return 1
        count = 0
        for cell in expand_range(sheet, rng):
            self.ref(cell.address)
            count += 1
        return count


def _arith_result(operand_kinds: int) -> int:
    mask = _K_NUM
    if operand_kinds & (_K_TEXT | _K_ERR):
        mask |= _K_ERR
    return mask


def _kind_of_tag(tag: int) -> int:
    return {TAG_EMPTY: _K_EMPTY, TAG_NUMBER: _K_NUM, TAG_BOOLEAN: _K_BOOL,
            TAG_TEXT: _K_TEXT}.get(tag, _K_ERR)


def _literal_tag(value) -> tuple[int, float]:
    if value.kind == "number":
        return TAG_NUMBER, value.number_value
    if value.kind == "boolean":
        return TAG_BOOLEAN, 1.0 if value.bool_value else 0.0
    if value.kind == "text":
        return TAG_TEXT, 0.0
    return TAG_EMPTY, 0.0


def compile_program(workbook: Workbook, asts: dict[CellAddress, Node],
                    slot_index: dict[tuple[CellAddress, int], int],
                    targets: tuple[CellAddress, ...]) -> Program:
    """Compile the targets' dependency cone; TapeUnsupported when the
    workbook compares text."""
    return _Compiler(workbook, asts, slot_index, targets).compile()


# ---------------------------------------------------------------------------
# pure executor


def run_pure(program: Program, genomes: np.ndarray,
             out_tags: np.ndarray, out_vals: np.ndarray) -> None:
    """Reference executor; one row of ``genomes`` per candidate.

    Mirrors _kernel.pyx operation for operation: keep the two in step.
    """
    code = program.code
    arg = program.arg
    farg = program.farg
    n_ops = len(code)
    n_out = len(program.out_regs)
    tags0 = program.reg_tags.tolist()
    vals0 = program.reg_vals.tolist()
    for row in range(genomes.shape[0]):
        genome = genomes[row]
        rt = tags0[:]
        rv = vals0[:]
        st: list[int] = []
        sv: list[float] = []
        for i in range(n_ops):
            op = code[i]
            if op == OP_CONST:
                st.append(TAG_NUMBER)
                sv.append(float(farg[i]))
            elif op == OP_BOOL:
                st.append(TAG_BOOLEAN)
                sv.append(float(farg[i]))
            elif op == OP_EMPTY:
                st.append(TAG_EMPTY)
                sv.append(0.0)
            elif op == OP_TEXT:
                st.append(TAG_TEXT)
                sv.append(0.0)
            elif op == OP_ERR:
                st.append(int(arg[i]))
                sv.append(0.0)
            elif op == OP_CELL:
                r = arg[i]
                st.append(rt[r])
                sv.append(rv[r])
            elif op == OP_GENE:
                st.append(TAG_NUMBER)
                sv.append(float(genome[arg[i]]))
            elif op == OP_STORE:
                r = arg[i]
                rt[r] = st.pop()
                rv[r] = sv.pop()
            elif op <= OP_POW:  # ADD..POW
                bt = st.pop()
                bv = sv.pop()
                at = st.pop()
                av = sv.pop()
                if at >= TAG_ERR_DIV0:
                    t, v = at, 0.0
                elif at == TAG_TEXT:
                    t, v = TAG_ERR_VALUE, 0.0
                elif bt >= TAG_ERR_DIV0:
                    t, v = bt, 0.0
                elif bt == TAG_TEXT:
                    t, v = TAG_ERR_VALUE, 0.0
                else:
                    t, v = _pure_arith(op, av, bv)
                st.append(t)
                sv.append(v)
            elif op == OP_NEG:
                at = st.pop()
                av = sv.pop()
                if at >= TAG_ERR_DIV0:
                    st.append(at)
                    sv.append(0.0)
                elif at == TAG_TEXT:
                    st.append(TAG_ERR_VALUE)
                    sv.append(0.0)
                else:
                    st.append(TAG_NUMBER)
                    sv.append(-av)
            elif op == OP_CONCAT:
                bt = st.pop()
                sv.pop()
                at = st.pop()
                sv.pop()
                if at >= TAG_ERR_DIV0:
                    st.append(at)
                elif bt >= TAG_ERR_DIV0:
                    st.append(bt)
                else:
                    st.append(TAG_TEXT)
                sv.append(0.0)
            elif op <= OP_GE:  # EQ..GE
                bt = st.pop()
                bv = sv.pop()
                at = st.pop()
                av = sv.pop()
                if at >= TAG_ERR_DIV0:
                    st.append(at)
                    sv.append(0.0)
                elif bt >= TAG_ERR_DIV0:
                    st.append(bt)
                    sv.append(0.0)
                else:
                    t, v = _pure_compare(op, at, av, bt, bv)
                    st.append(t)
                    sv.append(v)
            elif op == OP_IFSEL:
                et = st.pop()
                ev = sv.pop()
                tt = st.pop()
                tv = sv.pop()
                ct = st.pop()
                cv = sv.pop()
                if ct >= TAG_ERR_DIV0:
                    st.append(ct)
                    sv.append(0.0)
                elif ct == TAG_TEXT:
                    st.append(TAG_ERR_VALUE)
                    sv.append(0.0)
                elif cv != 0.0:
                    st.append(tt)
                    sv.append(tv)
                else:
                    st.append(et)
                    sv.append(ev)
            elif op == OP_ABS:
                at = st.pop()
                av = sv.pop()
                if at >= TAG_ERR_DIV0:
                    st.append(at)
                    sv.append(0.0)
                elif at == TAG_TEXT:
                    st.append(TAG_ERR_VALUE)
                    sv.append(0.0)
                else:
                    st.append(TAG_NUMBER)
                    sv.append(abs(av))
            elif op == OP_ROUND:
                bt = st.pop()
                bv = sv.pop()
                at = st.pop()
                av = sv.pop()
                if at >= TAG_ERR_DIV0:
                    t, v = at, 0.0
                elif at == TAG_TEXT:
                    t, v = TAG_ERR_VALUE, 0.0
                elif bt >= TAG_ERR_DIV0:
                    t, v = bt, 0.0
                elif bt == TAG_TEXT:
                    t, v = TAG_ERR_VALUE, 0.0
                else:
                    t, v = _pure_round(av, bv)
                st.append(t)
                sv.append(v)
            else:  # aggregates
                n = arg[i]
                base = len(st) - n
                err = 0
                for j in range(base, base + n):
                    if st[j] >= TAG_ERR_DIV0:
                        err = st[j]
                        break
                if err:
                    del st[base:]
                    del sv[base:]
                    st.append(err)
                    sv.append(0.0)
                else:
                    t, v = _pure_fold(op, st, sv, base, n)
                    del st[base:]
                    del sv[base:]
                    st.append(t)
                    sv.append(v)
        for j in range(n_out):
            r = program.out_regs[j]
            out_tags[row, j] = rt[r]
            out_vals[row, j] = rv[r] if rt[r] == TAG_NUMBER else 0.0


def _pure_arith(op: int, a: float, b: float) -> tuple[int, float]:
    if op == OP_ADD:
        r = a + b
    elif op == OP_SUB:
        r = a - b
    elif op == OP_MUL:
        r = a * b
    elif op == OP_DIV:
        if b == 0.0:
            return TAG_ERR_DIV0, 0.0
        r = a / b
    else:
        if a == 0.0 and b < 0.0:
            return TAG_ERR_DIV0, 0.0
        try:
            r = math.pow(a, b)
        except (ValueError, OverflowError):
            return TAG_ERR_VALUE, 0.0
    if not math.isfinite(r):
        return TAG_ERR_VALUE, 0.0
    return TAG_NUMBER, r


def _pure_compare(op: int, at: int, av: float, bt: int,
                  bv: float) -> tuple[int, float]:
    ak = TAG_NUMBER if at == TAG_EMPTY else at
    bk = TAG_NUMBER if bt == TAG_EMPTY else bt
    if ak != bk:
        if op == OP_EQ:
            return TAG_BOOLEAN, 0.0
        if op == OP_NE:
            return TAG_BOOLEAN, 1.0
        return TAG_ERR_VALUE, 0.0
    if op == OP_EQ:
        ok = av == bv
    elif op == OP_NE:
        ok = av != bv
    elif op == OP_LT:
        ok = av < bv
    elif op == OP_LE:
        ok = av <= bv
    elif op == OP_GT:
        ok = av > bv
    else:
        ok = av >= bv
    return TAG_BOOLEAN, 1.0 if ok else 0.0


def _pure_round(x: float, d: float) -> tuple[int, float]:
    if d > 308.0:
        dd = 308
    elif d < -308.0:
        dd = -308
    else:
        dd = int(d)
    scale = math.pow(10.0, float(dd))
    r = math.floor(abs(x) * scale + 0.5) / scale
    if not math.isfinite(r):
        return TAG_ERR_VALUE, 0.0
    return TAG_NUMBER, -r if x < 0.0 else r


def _pure_fold(op: int, st: list[int], sv: list[float], base: int,
               n: int) -> tuple[int, float]:
    count = 0
    total = 0.0
    acc = 0.0
    started = False
    for j in range(base, base + n):
        if st[j] != TAG_NUMBER:
            continue
        v = sv[j]
        count += 1
        total += v
        if not started:
            acc = v
            started = True
        elif op == OP_MIN:
            if v < acc:
                acc = v
        elif op == OP_MAX:
            if v > acc:
                acc = v
    if op == OP_COUNT:
        return TAG_NUMBER, float(count)
    if op == OP_MIN or op == OP_MAX:
        if not started:
            return TAG_NUMBER, 0.0
        if not math.isfinite(acc):
            return TAG_ERR_VALUE, 0.0
        return TAG_NUMBER, acc
    if op == OP_AVG:
        if count == 0:
            return TAG_ERR_DIV0, 0.0
        r = total / float(count)
    else:
        r = total
    if not math.isfinite(r):
        return TAG_ERR_VALUE, 0.0
    return TAG_NUMBER, r
