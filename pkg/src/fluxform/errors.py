"""Exception hierarchy shared by every fluxform module."""

from __future__ import annotations

import numpy as np


class FluxFormError(Exception):
    """Base class for library errors."""

    def payload(self) -> dict:
        return {"type": type(self).__name__, "message": str(self)}


class DegreeError(FluxFormError, ValueError):
    """A form degree or multi-index length is out of range."""


class ShapeError(FluxFormError, ValueError):
    """Arguments have the wrong number of vectors or the wrong dimension."""


class AxisError(FluxFormError, IndexError):
    """A face axis or a multi-index entry is outside its admissible range."""


class SamplingError(FluxFormError):
    """A sampler could not produce a value at ``point``."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = None if point is None else np.asarray(point, dtype=float).tolist()

    def payload(self) -> dict:
        out = super().payload()
        out["point"] = self.point
        return out


class FormSyntaxError(FluxFormError, ValueError):
    """A form expression could not be parsed."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column

    def payload(self) -> dict:
        out = super().payload()
        out.update(line=self.line, column=self.column)
        return out


class UnknownIdentifierError(FormSyntaxError):
    """An expression names a variable or function that does not exist."""


class BracketingError(FluxFormError):
    """The trisection search found no sign change of the flux mismatch."""

    def __init__(self, message: str, depth: int, point=None):
        super().__init__(message)
        self.depth = depth
        self.point = None if point is None else np.asarray(point, dtype=float).tolist()

    def payload(self) -> dict:
        out = super().payload()
        out.update(depth=self.depth, point=self.point)
        return out


class MissingDerivativeError(FluxFormError):
    """An operation needs an analytic derivative the field does not carry."""
