"""Workbook, sheet, cell and address model.

The 2D grid every other module reads.  Workbooks are immutable after
loading: analysis and evolution always build new values instead of
mutating in place, so sharing a workbook across threads is safe.

Coordinates are 1-based in ``CellAddress`` to match A1 notation; dense
matrix indices used by the segmenter are 0-based (that boundary is
documented there).
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import DuplicateCell, MalformedAddress, SchemaError

MAX_COL = 16384  # "XFD"
MAX_ROW = 1048576


# ---------------------------------------------------------------------------
# addresses


def col_to_index(letters: str) -> int:
    """Column letters to 1-based index ("A" -> 1, "XFD" -> 16384)."""
    n = 0
    for ch in letters.upper():
        n = n * 26 + (ord(ch) - ord("A") + 1)
    return n


def index_to_col(n: int) -> str:
    letters = ""
    while n > 0:
        n, rem = divmod(n - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return letters


_ADDR_RE = re.compile(
    r"""^
    (?:
        (?:'(?P<qsheet>[^']*(?:''[^']*)*)'|(?P<sheet>[A-Za-z_][A-Za-z0-9_]*))
        !
    )?
    (?P<cabs>\$?)(?P<col>[A-Za-z]{1,3})
    (?P<rabs>\$?)(?P<row>[1-9][0-9]*)
    $""",
    re.VERBOSE,
)


@dataclass(frozen=True, order=False)
class CellAddress:
    """A single cell position, optionally with absolute markers.

    Absolute flags matter for formula text round-trips only; identity of
    the cell pointed at is (sheet, row, col).
    """

    sheet: str
    row: int
    col: int
    row_absolute: bool = False
    col_absolute: bool = False

    def __post_init__(self):
        if not self.sheet:
            raise MalformedAddress("empty sheet name")
        if not (1 <= self.row <= MAX_ROW):
            raise MalformedAddress(f"row {self.row} out of range")
        if not (1 <= self.col <= MAX_COL):
            raise MalformedAddress(f"column {self.col} out of range")

    @property
    def coords(self) -> tuple[str, int, int]:
        """Identity of the cell pointed at, absolute flags stripped."""
        return (self.sheet, self.row, self.col)

    def plain(self) -> "CellAddress":
        """Copy with absolute markers cleared."""
        if not (self.row_absolute or self.col_absolute):
            return self
        return CellAddress(self.sheet, self.row, self.col)

    def shifted(self, drow: int, dcol: int) -> "CellAddress":
        return CellAddress(
            self.sheet, self.row + drow, self.col + dcol,
            self.row_absolute, self.col_absolute,
        )

    def sort_key(self) -> tuple:
        """Total order (sheet, row, col); the tie-break used everywhere."""
        return (self.sheet.lower(), self.sheet, self.row, self.col)

    def ref_text(self) -> str:
        """Local A1 text without the sheet qualifier."""
        return "{}{}{}{}".format(
            "$" if self.col_absolute else "", index_to_col(self.col),
            "$" if self.row_absolute else "", self.row,
        )

    def text(self, relative_to: str | None = None) -> str:
        """A1 text, sheet-qualified unless ``relative_to`` matches."""
        if relative_to is not None and self.sheet.lower() == relative_to.lower():
            return self.ref_text()
        name = self.sheet
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
            return f"{name}!{self.ref_text()}"
        return "'{}'!{}".format(name.replace("'", "''"), self.ref_text())

    def __str__(self) -> str:
        return self.text()


def parse_address(text: str, default_sheet: str) -> CellAddress:
    """Parse ``[Sheet!][$]Col[$]Row`` into a CellAddress.

    Sheet names containing spaces (or other non-identifier characters)
    are written in single quotes, with ``''`` escaping an embedded quote.
    Raises MalformedAddress when the grammar is not matched or limits
    ("XFD", 1,048,576) are exceeded.
    """
    m = _ADDR_RE.match(text)
    if not m:
        raise MalformedAddress(f"not an A1 address: {text!r}")
    if m.group("qsheet") is not None:
        sheet = m.group("qsheet").replace("''", "'")
    elif m.group("sheet") is not None:
        sheet = m.group("sheet")
    else:
        sheet = default_sheet
    col = col_to_index(m.group("col"))
    row = int(m.group("row"))
    if col > MAX_COL:
        raise MalformedAddress(f"column {m.group('col')!r} beyond XFD")
    if row > MAX_ROW:
        raise MalformedAddress(f"row {row} beyond {MAX_ROW}")
    return CellAddress(
        sheet=sheet, row=row, col=col,
        row_absolute=bool(m.group("rabs")), col_absolute=bool(m.group("cabs")),
    )


# ---------------------------------------------------------------------------
# values and cells


class ErrorKind(enum.Enum):
    DIV0 = "DIV0"
    VALUE = "VALUE"
    CYCLE = "CYCLE"
    REF = "REF"
    NAME = "NAME"


class DataType(enum.Enum):
    """Cell data-type tag used for type-continuity checks."""

    NUMBER = "NUMBER"
    TEXT = "TEXT"
    BOOLEAN = "BOOLEAN"
    FORMULA = "FORMULA"
    EMPTY = "EMPTY"


@dataclass(frozen=True)
class CellValue:
    """Tagged value: exactly one of number/text/boolean/empty/error.

    Use the ``number()``/``text()``/... constructors; stored numbers are
    always finite.
    """

    kind: str  # "number" | "text" | "boolean" | "empty" | "error"
    number_value: float = 0.0
    text_value: str = ""
    bool_value: bool = False
    error_kind: ErrorKind | None = None

    @staticmethod
    def number(x: float) -> "CellValue":
        x = float(x)
        if not math.isfinite(x):
            raise ValueError("stored numbers must be finite")
        return CellValue("number", number_value=x)

    @staticmethod
    def text(s: str) -> "CellValue":
        return CellValue("text", text_value=s)

    @staticmethod
    def boolean(b: bool) -> "CellValue":
        return CellValue("boolean", bool_value=bool(b))

    @staticmethod
    def empty() -> "CellValue":
        return _EMPTY

    @staticmethod
    def error(kind: ErrorKind) -> "CellValue":
        return CellValue("error", error_kind=kind)

    @property
    def is_error(self) -> bool:
        return self.kind == "error"

    def display(self) -> str:
        """Human form used by the CLI: numbers shortest-decimal, errors #KIND."""
        if self.kind == "number":
            return format_number(self.number_value)
        if self.kind == "text":
            return self.text_value
        if self.kind == "boolean":
            return "TRUE" if self.bool_value else "FALSE"
        if self.kind == "error":
            return f"#{self.error_kind.value}"
        return ""

    def to_json(self):
        """JSON form used by graph/value exports."""
        if self.kind == "number":
            return self.number_value
        if self.kind == "text":
            return self.text_value
        if self.kind == "boolean":
            return self.bool_value
        if self.kind == "error":
            return {"error": self.error_kind.value}
        return None


_EMPTY = CellValue("empty")


def format_number(x: float) -> str:
    """Shortest decimal that round-trips to ``x``; integral values drop ".0"."""
    s = repr(float(x))
    if s.endswith(".0"):
        s = s[:-2]
    return s


@dataclass(frozen=True)
class Cell:
    """One instantiated cell: a literal value or a formula source string."""

    address: CellAddress
    formula: str | None = None  # source text starting with "="
    value: CellValue | None = None  # literal content when formula is None

    def __post_init__(self):
        if (self.formula is None) == (self.value is None):
            raise ValueError("cell holds exactly one of formula/value")
        if self.formula is not None and not self.formula.startswith("="):
            raise ValueError("formula source must start with '='")

    @property
    def is_formula(self) -> bool:
        return self.formula is not None


def cell_data_type(cell: Cell) -> DataType:
    """Data-type tag for type-continuity: formulas tag FORMULA regardless
    of what they compute; literals tag by value variant."""
    if cell.is_formula:
        return DataType.FORMULA
    kind = cell.value.kind
    if kind == "number":
        return DataType.NUMBER
    if kind == "text":
        return DataType.TEXT
    if kind == "boolean":
        return DataType.BOOLEAN
    return DataType.EMPTY


# ---------------------------------------------------------------------------
# sheets and workbooks


@dataclass
class Sheet:
    """Sparse grid of instantiated cells, keyed by (row, col)."""

    name: str
    cells: dict[tuple[int, int], Cell] = field(default_factory=dict)

    def cell_at(self, row: int, col: int) -> Cell | None:
        return self.cells.get((row, col))

    def bounding_box(self) -> tuple[int, int, int, int] | None:
        """(min_row, min_col, max_row, max_col) of instantiated cells."""
        if not self.cells:
            return None
        rows = [rc[0] for rc in self.cells]
        cols = [rc[1] for rc in self.cells]
        return (min(rows), min(cols), max(rows), max(cols))

    def cells_in_box(self, r1: int, c1: int, r2: int,
                     c2: int) -> list[Cell]:
        """Instantiated cells inside the inclusive box, row-major order."""
        out = []
        for row in range(r1, r2 + 1):
            for col in range(c1, c2 + 1):
                cell = self.cells.get((row, col))
                if cell is not None:
                    out.append(cell)
        return out


@dataclass
class Workbook:
    """Ordered sheets plus free-form string metadata.

    Treat as immutable after construction; all mutation in this package
    builds new workbooks.
    """

    sheets: list[Sheet] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    def sheet(self, name: str) -> Sheet | None:
        low = name.lower()
        for s in self.sheets:
            if s.name.lower() == low:
                return s
        return None

    def has_sheet(self, name: str) -> bool:
        return self.sheet(name) is not None

    def cell(self, addr: CellAddress) -> Cell | None:
        s = self.sheet(addr.sheet)
        if s is None:
            return None
        return s.cell_at(addr.row, addr.col)

    def resolve(self, addr: CellAddress) -> CellAddress | None:
        """Canonical form of an address for map keys: declared sheet
        spelling, $-flags dropped.  None if the sheet does not exist."""
        s = self.sheet(addr.sheet)
        if s is None:
            return None
        if s.name == addr.sheet and not addr.row_absolute \
                and not addr.col_absolute:
            return addr
        return CellAddress(s.name, addr.row, addr.col)

    def iter_cells(self) -> Iterator[Cell]:
        """All instantiated cells in address order."""
        for sheet in self.sheets:
            for (row, col) in sorted(sheet.cells):
                yield sheet.cells[(row, col)]

    def addresses(self) -> list[CellAddress]:
        return [c.address for c in self.iter_cells()]

    def cell_count(self) -> int:
        return sum(len(s.cells) for s in self.sheets)


def workbook_from_cells(entries: Iterable[tuple[str, str | float | bool | None]],
                        sheet: str = "S1") -> Workbook:
    """Convenience builder for tests and fixtures.

    ``entries`` maps "A1"-style refs (optionally sheet-qualified) to a
    literal (number/str/bool) or a formula string starting with "=".
    A ``None`` content is skipped, mirroring the JSON loader.
    """
    wb = Workbook()
    for ref, content in entries:
        if content is None:
            continue
        addr = parse_address(ref, sheet).plain()
        target = wb.sheet(addr.sheet)
        if target is None:
            target = Sheet(addr.sheet)
            wb.sheets.append(target)
        key = (addr.row, addr.col)
        if key in target.cells:
            raise DuplicateCell(addr)
        if isinstance(content, str) and content.startswith("="):
            cell = Cell(addr, formula=content)
        else:
            cell = Cell(addr, value=_literal_value(content))
        target.cells[key] = cell
    return wb


def _literal_value(content) -> CellValue:
    if content is None:
        return CellValue.empty()
    if isinstance(content, bool):
        return CellValue.boolean(content)
    if isinstance(content, (int, float)):
        return CellValue.number(float(content))
    if isinstance(content, str):
        return CellValue.text(content)
    raise ValueError(f"unsupported literal {content!r}")


# ---------------------------------------------------------------------------
# canonical JSON format


def load_workbook(document: bytes | str) -> Workbook:
    """Load the canonical workbook JSON.

    Top level: ``{"sheets": [{"name": str, "cells": [entry, ...]}, ...]}``
    where an entry carries ``"ref"`` plus exactly one of ``"value"``
    (number/string/bool/null) or ``"formula"`` ("=...").  Unknown keys are
    ignored.  A ``"value": null`` entry is skipped: empty cells are not
    materialized.

    Raises SchemaError (with a JSON path) or DuplicateCell.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}", "$") from exc

    if not isinstance(data, dict):
        raise SchemaError("document must be an object", "$")
    sheets = data.get("sheets")
    if not isinstance(sheets, list):
        raise SchemaError("'sheets' must be a list", "$.sheets")

    wb = Workbook()
    seen_names: set[str] = set()
    for i, raw_sheet in enumerate(sheets):
        path = f"$.sheets[{i}]"
        if not isinstance(raw_sheet, dict):
            raise SchemaError("sheet must be an object", path)
        name = raw_sheet.get("name")
        if not isinstance(name, str) or not name:
            raise SchemaError("sheet 'name' must be a nonempty string", f"{path}.name")
        if name.lower() in seen_names:
            raise SchemaError(f"sheet name {name!r} clashes case-insensitively",
                              f"{path}.name")
        seen_names.add(name.lower())
        sheet = Sheet(name)
        wb.sheets.append(sheet)

        raw_cells = raw_sheet.get("cells", [])
        if not isinstance(raw_cells, list):
            raise SchemaError("'cells' must be a list", f"{path}.cells")
        for j, entry in enumerate(raw_cells):
            cpath = f"{path}.cells[{j}]"
            if not isinstance(entry, dict):
                raise SchemaError("cell entry must be an object", cpath)
            ref = entry.get("ref")
            if not isinstance(ref, str):
                raise SchemaError("cell 'ref' must be a string", f"{cpath}.ref")
            try:
                addr = parse_address(ref, name).plain()
            except MalformedAddress as exc:
                raise SchemaError(str(exc), f"{cpath}.ref") from exc
            if addr.sheet.lower() != name.lower():
                raise SchemaError("cell ref must be local to its sheet",
                                  f"{cpath}.ref")
            addr = CellAddress(name, addr.row, addr.col)
            has_value = "value" in entry
            has_formula = "formula" in entry
            if has_value == has_formula:
                raise SchemaError("exactly one of 'value'/'formula' required", cpath)
            key = (addr.row, addr.col)
            if key in sheet.cells:
                raise DuplicateCell(addr)
            if has_formula:
                formula = entry["formula"]
                if not isinstance(formula, str) or not formula.startswith("="):
                    raise SchemaError("'formula' must be a string starting with '='",
                                      f"{cpath}.formula")
                sheet.cells[key] = Cell(addr, formula=formula)
            else:
                value = entry["value"]
                if value is None:
                    continue  # empty cells stay unmaterialized
                if isinstance(value, bool):
                    cv = CellValue.boolean(value)
                elif isinstance(value, (int, float)):
                    if not math.isfinite(float(value)):
                        raise SchemaError("numbers must be finite", f"{cpath}.value")
                    cv = CellValue.number(float(value))
                elif isinstance(value, str):
                    cv = CellValue.text(value)
                else:
                    raise SchemaError("'value' must be number/string/bool/null",
                                      f"{cpath}.value")
                sheet.cells[key] = Cell(addr, value=cv)

    meta = data.get("metadata")
    if meta is not None:
        if not isinstance(meta, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
        ):
            raise SchemaError("'metadata' must map strings to strings", "$.metadata")
        wb.metadata = dict(meta)
    return wb


def save_workbook(workbook: Workbook) -> bytes:
    """Serialize to the canonical JSON format (UTF-8).

    load_workbook(save_workbook(wb)) reproduces the canonical field set.
    """
    doc: dict = {"sheets": []}
    for sheet in workbook.sheets:
        entries = []
        for (row, col) in sorted(sheet.cells):
            cell = sheet.cells[(row, col)]
            ref = cell.address.ref_text()
            if cell.is_formula:
                entries.append({"ref": ref, "formula": cell.formula})
            else:
                entries.append({"ref": ref, "value": cell.value.to_json()})
        doc["sheets"].append({"name": sheet.name, "cells": entries})
    if workbook.metadata:
        doc["metadata"] = dict(workbook.metadata)
    return (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8")
