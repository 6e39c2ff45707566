"""Deterministic workbook evaluation.

Formula cells are ordered by Kahn's algorithm with a heap keyed by cell
address, so ties always break the same way and evaluating a dependency
cone reproduces the exact order the full run would visit it in.  Cells on
reference cycles (strongly connected components of size > 1, or direct
self-references) are flagged Error(CYCLE) and evaluation continues.

Value semantics, shared verbatim with the compiled fitness kernel:

* arithmetic coerces Boolean to 1/0 and Empty to 0; Text is Error(VALUE)
* any non-finite arithmetic result is Error(VALUE); x/0 and 0^negative
  are Error(DIV0)
* "&" renders both sides as text (numbers shortest-decimal, booleans
  TRUE/FALSE, Empty "")
* comparisons: Empty first coerces to the number 0; then number/number,
  text/text (code-point order, case-sensitive) and boolean/boolean
  compare directly, while mixed kinds give FALSE for "=", TRUE for "<>"
  and Error(VALUE) for the ordering operators
* IF evaluates all three arguments, picks by the condition (boolean, or
  number with 0 false, Empty false, Text Error(VALUE)) and discards any
  error in the branch not taken
* aggregate calls treat every argument alike: a range contributes its
  instantiated cells in row-major order, a scalar contributes itself;
  numbers aggregate, Text/Boolean/Empty are ignored, the first error in
  scan order propagates; AVERAGE of no numbers is Error(DIV0), MIN/MAX
  of no numbers is 0, COUNT counts numbers only
* ROUND(x, d) truncates d toward zero (clamped to |d| <= 308) and rounds
  half away from zero
* a reference to an unknown sheet is Error(REF); to an absent cell on a
  known sheet, Empty; a range where a scalar is required is Error(VALUE)
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .errors import UnknownCell
from .dataflow import expand_range
from .formula import (Binary, BoolLit, Call, Node, NumberLit, Range, Ref,
                      TextLit, Unary, parse_workbook_formulas, walk)
from .model import (CellAddress, CellValue, ErrorKind, Workbook,
                    format_number)

_DIV0 = CellValue.error(ErrorKind.DIV0)
_VALUE = CellValue.error(ErrorKind.VALUE)
_CYCLE = CellValue.error(ErrorKind.CYCLE)
_REF = CellValue.error(ErrorKind.REF)


@dataclass
class EvalResult:
    """values covers every evaluated cell (literals included); order lists
    formula cells in evaluation sequence; cycles lists each reference
    cycle's members."""

    values: dict[CellAddress, CellValue] = field(default_factory=dict)
    order: list[CellAddress] = field(default_factory=list)
    cycles: list[list[CellAddress]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# scalar semantics


def _to_number(v: CellValue) -> float | CellValue:
    """Numeric coercion; returns the error CellValue to propagate when the
    operand has no numeric reading."""
    if v.kind == "number":
        return v.number_value
    if v.kind == "boolean":
        return 1.0 if v.bool_value else 0.0
    if v.kind == "empty":
        return 0.0
    if v.kind == "error":
        return v
    return _VALUE


def _to_text(v: CellValue) -> str | CellValue:
    if v.kind == "text":
        return v.text_value
    if v.kind == "number":
        return format_number(v.number_value)
    if v.kind == "boolean":
        return "TRUE" if v.bool_value else "FALSE"
    if v.kind == "empty":
        return ""
    return v


def _number_result(x: float) -> CellValue:
    if not math.isfinite(x):
        return _VALUE
    return CellValue("number", number_value=x)


def _arith(op: str, a: float, b: float) -> CellValue:
    if op == "+":
        return _number_result(a + b)
    if op == "-":
        return _number_result(a - b)
    if op == "*":
        return _number_result(a * b)
    if op == "/":
        if b == 0.0:
            return _DIV0
        return _number_result(a / b)
    if op == "^":
        if a == 0.0 and b < 0.0:
            return _DIV0
        try:
            return _number_result(math.pow(a, b))
        except (ValueError, OverflowError):
            return _VALUE
    raise ValueError(f"not an arithmetic operator: {op}")


_CMP_OK = {"=": (0,), "<>": (-1, 1), "<": (-1,), "<=": (-1, 0),
           ">": (1,), ">=": (1, 0)}


def _compare(op: str, left: CellValue, right: CellValue) -> CellValue:
    if left.kind == "empty":
        left = CellValue("number")
    if right.kind == "empty":
        right = CellValue("number")
    if left.kind != right.kind:
        if op == "=":
            return CellValue.boolean(False)
        if op == "<>":
            return CellValue.boolean(True)
        return _VALUE
    if left.kind == "number":
        a, b = left.number_value, right.number_value
    elif left.kind == "boolean":
        a, b = int(left.bool_value), int(right.bool_value)
    else:
        a, b = left.text_value, right.text_value
    sign = -1 if a < b else (1 if a > b else 0)
    return CellValue.boolean(sign in _CMP_OK[op])


def round_half_away(x: float, d: float) -> CellValue:
    """ROUND's rounding rule, mirrored exactly by the compiled kernel."""
    if d > 308.0:
        dd = 308
    elif d < -308.0:
        dd = -308
    else:
        dd = int(d)
    scale = math.pow(10.0, float(dd))
    r = math.floor(abs(x) * scale + 0.5) / scale
    if not math.isfinite(r):
        return _VALUE
    return CellValue("number", number_value=-r if x < 0.0 else r)


# ---------------------------------------------------------------------------
# expression evaluation

_AGGREGATES = ("SUM", "AVERAGE", "MIN", "MAX", "COUNT")


class _Evaluator:
    def __init__(self, workbook: Workbook,
                 values: dict[CellAddress, CellValue]):
        self.workbook = workbook
        self.values = values

    def lookup(self, address: CellAddress) -> CellValue:
        resolved = self.workbook.resolve(address)
        if resolved is None:
            return _REF
        return self.values.get(resolved, CellValue.empty())

    def scalar(self, node: Node) -> CellValue:
        if isinstance(node, NumberLit):
            return _number_result(node.value)
        if isinstance(node, TextLit):
            return CellValue.text(node.value)
        if isinstance(node, BoolLit):
            return CellValue.boolean(node.value)
        if isinstance(node, Ref):
            return self.lookup(node.address)
        if isinstance(node, Range):
            return _VALUE
        if isinstance(node, Unary):
            operand = _to_number(self.scalar(node.operand))
            if isinstance(operand, CellValue):
                return operand
            return _number_result(-operand)
        if isinstance(node, Binary):
            return self.binary(node)
        if isinstance(node, Call):
            return self.call(node)
        raise TypeError(f"not an AST node: {node!r}")

    def binary(self, node: Binary) -> CellValue:
        left = self.scalar(node.left)
        if node.op == "&":
            a = _to_text(left)
            if isinstance(a, CellValue):
                return a
            b = _to_text(self.scalar(node.right))
            if isinstance(b, CellValue):
                return b
            return CellValue.text(a + b)
        right = self.scalar(node.right)
        if node.op in _CMP_OK:
            if left.is_error:
                return left
            if right.is_error:
                return right
            return _compare(node.op, left, right)
        a = _to_number(left)
        if isinstance(a, CellValue):
            return a
        b = _to_number(right)
        if isinstance(b, CellValue):
            return b
        return _arith(node.op, a, b)

    def call(self, node: Call) -> CellValue:
        if node.name == "IF":
            cond, then, other = (self.scalar(a) for a in node.args)
            if cond.is_error:
                return cond
            if cond.kind == "boolean":
                taken = cond.bool_value
            else:
                flag = _to_number(cond)
                if isinstance(flag, CellValue):
                    return flag
                taken = flag != 0.0
            return then if taken else other
        if node.name == "ABS":
            x = _to_number(self.scalar(node.args[0]))
            if isinstance(x, CellValue):
                return x
            return _number_result(abs(x))
        if node.name == "ROUND":
            x = _to_number(self.scalar(node.args[0]))
            if isinstance(x, CellValue):
                return x
            d = _to_number(self.scalar(node.args[1]))
            if isinstance(d, CellValue):
                return d
            return round_half_away(x, d)
        if node.name in _AGGREGATES:
            return self.aggregate(node)
        raise ValueError(f"no such function: {node.name}")

    def aggregate(self, node: Call) -> CellValue:
        numbers: list[float] = []
        for arg in node.args:
            if isinstance(arg, Range):
                sheet = self.workbook.sheet(arg.start.sheet)
                if sheet is None:
                    return _REF
                members = [self.values.get(c.address, CellValue.empty())
                           for c in expand_range(sheet, arg)]
            else:
                members = [self.scalar(arg)]
            for v in members:
                if v.kind == "error":
                    return v
                if v.kind == "number":
                    numbers.append(v.number_value)
        return _fold(node.name, numbers)


def _fold(name: str, numbers: list[float]) -> CellValue:
    if name == "COUNT":
        return CellValue("number", number_value=float(len(numbers)))
    if name in ("MIN", "MAX"):
        if not numbers:
            return CellValue("number")
        acc = numbers[0]
        for v in numbers[1:]:
            if (v < acc) if name == "MIN" else (v > acc):
                acc = v
        return _number_result(acc)
    total = 0.0
    for v in numbers:
        total += v
    if name == "AVERAGE":
        if not numbers:
            return _DIV0
        return _number_result(total / float(len(numbers)))
    return _number_result(total)


# ---------------------------------------------------------------------------
# dependency ordering


def direct_precedents(workbook: Workbook, address: CellAddress,
                      ast: Node) -> list[CellAddress]:
    """Instantiated cells this formula reads, deduplicated, in reference
    order (ranges row-major)."""
    seen: set[CellAddress] = set()
    out: list[CellAddress] = []
    for node, _ in walk(ast):
        if isinstance(node, Ref):
            cell = workbook.cell(node.address)
            hits = [cell] if cell is not None else []
        elif isinstance(node, Range):
            sheet = workbook.sheet(node.start.sheet)
            hits = expand_range(sheet, node) if sheet is not None else []
        else:
            continue
        for hit in hits:
            if hit.address not in seen:
                seen.add(hit.address)
                out.append(hit.address)
    return out


def _strongly_connected(nodes: list[CellAddress],
                        deps: dict[CellAddress, list[CellAddress]],
                        ) -> list[list[CellAddress]]:
    """Tarjan, iterative; deps already restricted to ``nodes``."""
    index: dict[CellAddress, int] = {}
    low: dict[CellAddress, int] = {}
    on_stack: set[CellAddress] = set()
    stack: list[CellAddress] = []
    components: list[list[CellAddress]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work: list[tuple[CellAddress, int]] = [(root, 0)]
        while work:
            v, i = work.pop()
            if i == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            descended = False
            targets = deps[v]
            for j in range(i, len(targets)):
                w = targets[j]
                if w not in index:
                    work.append((v, j + 1))
                    work.append((w, 0))
                    descended = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if descended:
                continue
            if low[v] == index[v]:
                component = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    component.append(w)
                    if w == v:
                        break
                components.append(component)
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return components


def _evaluate_cells_of(workbook: Workbook, asts: dict[CellAddress, Node],
                       addresses: list[CellAddress]) -> EvalResult:
    """Evaluate exactly the given instantiated cells (assumed closed under
    dependencies)."""
    result = EvalResult()
    formula_addrs: list[CellAddress] = []
    for addr in addresses:
        cell = workbook.cell(addr)
        if cell.is_formula:
            formula_addrs.append(addr)
        else:
            result.values[addr] = cell.value

    in_set = set(formula_addrs)
    deps_all = {a: direct_precedents(workbook, a, asts[a])
                for a in formula_addrs}
    deps_f = {a: [d for d in deps_all[a] if d in in_set]
              for a in formula_addrs}

    components = _strongly_connected(formula_addrs, deps_f)
    cyclic: set[CellAddress] = set()
    cycles: list[list[CellAddress]] = []
    for component in components:
        if len(component) > 1 or component[0] in deps_f[component[0]]:
            members = sorted(component, key=CellAddress.sort_key)
            cycles.append(members)
            cyclic.update(members)
    cycles.sort(key=lambda ms: ms[0].sort_key())
    result.cycles = cycles
    for addr in cyclic:
        result.values[addr] = _CYCLE

    dependents: dict[CellAddress, list[CellAddress]] = {}
    indegree: dict[CellAddress, int] = {}
    for addr in formula_addrs:
        if addr in cyclic:
            continue
        pending = [d for d in deps_f[addr] if d not in cyclic]
        indegree[addr] = len(pending)
        for d in pending:
            dependents.setdefault(d, []).append(addr)

    ready = [(a.sort_key(), a) for a in indegree if indegree[a] == 0]
    heapq.heapify(ready)
    evaluator = _Evaluator(workbook, result.values)
    while ready:
        _, addr = heapq.heappop(ready)
        result.order.append(addr)
        result.values[addr] = evaluator.scalar(asts[addr])
        for dep in dependents.get(addr, ()):
            indegree[dep] -= 1
            if indegree[dep] == 0:
                heapq.heappush(ready, (dep.sort_key(), dep))
    return result


def evaluate(workbook: Workbook) -> EvalResult:
    """Evaluate every cell; raises ParseFailure if any formula is bad."""
    asts = parse_workbook_formulas(workbook)
    return _evaluate_cells_of(workbook, asts, workbook.addresses())


def evaluate_cells(workbook: Workbook,
                   targets: set[CellAddress] | list[CellAddress],
                   asts: dict[CellAddress, Node] | None = None) -> EvalResult:
    """Evaluate the targets and their transitive precedents only; the
    outcome matches the same cells in a full evaluate bit for bit."""
    if asts is None:
        asts = parse_workbook_formulas(workbook)
    cone: set[CellAddress] = set()
    frontier: list[CellAddress] = []
    for target in targets:
        resolved = workbook.resolve(target)
        if resolved is None or workbook.cell(resolved) is None:
            raise UnknownCell(f"no cell {target}")
        if resolved not in cone:
            cone.add(resolved)
            frontier.append(resolved)
    while frontier:
        addr = frontier.pop()
        if addr in asts:
            for dep in direct_precedents(workbook, addr, asts[addr]):
                if dep not in cone:
                    cone.add(dep)
                    frontier.append(dep)
    ordered = sorted(cone, key=CellAddress.sort_key)
    return _evaluate_cells_of(workbook, asts, ordered)
