"""Exception hierarchy shared by the codec, grammar, kernel and harness."""

from __future__ import annotations


class PointerCADError(Exception):
    """Base class for every error raised by this package."""


# -- codec ------------------------------------------------------------------


class RangeError(PointerCADError, ValueError):
    def __init__(self, value, interval, path: str = ""):
        self.value = value
        self.interval = interval
        self.path = path
        where = f" at {path}" if path else ""
        super().__init__(f"value {value!r} outside {interval}{where}")


class DecodeError(PointerCADError):
    """Token stream cannot be turned into a program."""


class UnknownToken(DecodeError):
    def __init__(self, position: int, token: int):
        self.position = position
        self.token = token
        super().__init__(f"unknown token id {token} at position {position}")


class UnsupportedOperation(PointerCADError):
    pass


class MalformedProgram(PointerCADError):
    pass


# -- grammar ----------------------------------------------------------------


class GrammarError(PointerCADError):
    def __init__(self, position: int, expected: str, found=None, message: str = ""):
        self.position = position
        self.expected = expected
        self.found = found
        msg = message or f"at {position}: expected {expected}, found {found!r}"
        super().__init__(msg)


class TruncatedStream(DecodeError, GrammarError):
    """The stream ended in the middle of a derivation."""


class MissingTerminator(TruncatedStream):
    """The stream ended without the end-of-model token."""


class TrailingTokens(GrammarError):
    pass


class ValidationFailed(PointerCADError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(str(d) for d in self.diagnostics[:5])
        super().__init__(f"{len(self.diagnostics)} violation(s): {lines}")


# -- kernel -----------------------------------------------------------------


class KernelError(PointerCADError):
    step_index: int | None = None


class NonPlanarSketchTarget(KernelError):
    pass


class DegenerateDirection(KernelError):
    pass


class DegenerateProjection(KernelError):
    pass


class SelfIntersectingLoop(KernelError):
    pass


class AmbiguousRegion(KernelError):
    pass


class SnapFailure(KernelError):
    pass


class EmptyResult(KernelError):
    pass


class NonManifoldResult(KernelError):
    pass


class UnsupportedEdge(KernelError):
    pass


class ChamferTooLarge(KernelError):
    pass


class FilletTooLarge(KernelError):
    pass


class DegenerateGeometry(KernelError):
    pass


# -- pointers ---------------------------------------------------------------


class PointerResolutionFailed(PointerCADError):
    step_index: int | None = None


class NoCandidates(PointerCADError):
    pass


class UnknownEntity(PointerCADError):
    pass


class NonManifoldInput(PointerCADError):
    pass


# -- neural -----------------------------------------------------------------


class ShapeError(PointerCADError, ValueError):
    pass


class ConfigError(PointerCADError, ValueError):
    pass
