"""Exception hierarchy shared by every vdbb module."""

from __future__ import annotations


class VdbbError(Exception):
    """Base class for all errors raised by this package."""


class DensityViolation(VdbbError, ValueError):
    """A block holds more non-zeros than the format allows."""

    def __init__(self, count: int, bound: int, coord: tuple[int, int] | None = None):
        self.count = count
        self.bound = bound
        self.coord = coord
        where = f" at block {coord}" if coord is not None else ""
        super().__init__(f"density violation{where}: {count} > {bound}")


class MalformedBlock(VdbbError, ValueError):
    pass


class DimensionMismatch(VdbbError, ValueError):
    pass


class BadGeometry(VdbbError, ValueError):
    pass


class UnsupportedGeometry(VdbbError, ValueError):
    """The hardware unit cannot stream this geometry; use software lowering."""


class ModeMismatch(VdbbError, ValueError):
    pass


class UncalibratedModel(VdbbError, RuntimeError):
    pass


class InsufficientAnchors(VdbbError, ValueError):
    pass


class NegativeCoefficient(VdbbError, ValueError):
    pass


class EmptySpace(VdbbError, ValueError):
    pass


class ParseError(VdbbError, ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field!r}")
        prefix = f"{', '.join(loc)}: " if loc else ""
        super().__init__(prefix + message)


class ValidationError(VdbbError, ValueError):
    pass
