"""Exception hierarchy shared across the package."""


class WiaError(Exception):
    """Base class for all errors raised by this package."""


class MalformedAddress(WiaError):
    """A1-notation text that does not match the address grammar."""


class SchemaError(WiaError):
    """Workbook JSON that violates the canonical schema.

    Carries the JSON path of the offending element in ``path``.
    """

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class DuplicateCell(WiaError):
    """Two cell entries share one address within a sheet."""

    def __init__(self, address):
        super().__init__(f"duplicate cell {address}")
        self.address = address


class ParseError(WiaError):
    """Formula text rejected by the lexer or parser.

    ``offset`` is the byte offset of the failure in the source string and
    ``expected`` the set of token descriptions that were legal there.
    """

    def __init__(self, message: str, offset: int = 0, expected=()):
        super().__init__(f"at offset {offset}: {message}")
        self.offset = offset
        self.expected = tuple(expected)


class UnknownFunction(ParseError):
    """Function name outside the supported set."""

    def __init__(self, name: str, offset: int = 0):
        super().__init__(f"unknown function {name!r}", offset)
        self.name = name


class UnknownSlot(WiaError):
    """Literal-slot ordinal that does not exist in the target formula."""


class ParseFailure(WiaError):
    """One or more workbook formulas failed to parse.

    ``addresses`` lists the offending cells.
    """

    def __init__(self, addresses):
        self.addresses = list(addresses)
        listing = ", ".join(str(a) for a in self.addresses)
        super().__init__(f"unparseable formulas at: {listing}")


class UnknownCell(WiaError):
    """Operation addressed a cell that is not part of the graph/workbook."""


class EmptyAnnotationSet(WiaError):
    """A fitness function needs at least one annotation."""


class NoAnnotations(WiaError):
    """An evolution step was requested before any annotation exists."""


class AnchorMismatch(WiaError):
    """Annotation anchor disagrees with the value of the model it targets."""


class UnknownGenome(WiaError):
    """Genome id that is not among the candidates of the last step."""


class SessionStateError(WiaError):
    """Operation not legal in the session's current status."""
