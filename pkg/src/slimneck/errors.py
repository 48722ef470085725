"""Exception types shared across the package."""


class SlimneckError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SlimneckError, ValueError):
    """An input tensor or parameter has the wrong shape.

    ``dim`` names the offending dimension (e.g. ``"c"``, ``"weight[1]"``).
    """

    def __init__(self, dim, message):
        self.dim = dim
        super().__init__(f"{dim}: {message}")


class GeometryError(SlimneckError, ValueError):
    """Kernel, stride and padding produce an empty output."""


class SpecError(SlimneckError, ValueError):
    """A ``.spec`` text could not be parsed or failed validation.

    Exactly one of ``line`` / ``layer`` is usually set, locating the problem.
    """

    def __init__(self, reason, *, line=None, layer=None):
        self.reason = reason
        self.line = line
        self.layer = layer
        where = []
        if line is not None:
            where.append(f"line {line}")
        if layer is not None:
            where.append(f"layer '{layer}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {reason}" if prefix else reason)


class WeightError(SlimneckError, ValueError):
    """A weight store is incomplete, malformed, or mismatched with a graph."""


class FormatError(SlimneckError, ValueError):
    """A binary file has a bad magic, version, or is truncated."""
