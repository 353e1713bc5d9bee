"""Exception hierarchy.

``DataError`` subclasses describe bad inputs (CLI exit code 2);
``NumericalError`` subclasses describe a well-formed problem the math
cannot handle (exit code 3).
"""


class ContourCalError(Exception):
    pass


class DataError(ContourCalError, ValueError):
    pass


class NumericalError(ContourCalError, RuntimeError):
    pass


class OutOfRange(DataError):
    pass


class BadFov(DataError):
    pass


class JointLimit(DataError):
    pass


class DegeneratePolygon(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class EmptyGroundTruth(DataError):
    pass


class NoFrames(DataError):
    pass


class NoAnnotatedFrames(DataError):
    pass


class NoPairs(DataError):
    pass


class EmptyCatalog(DataError):
    pass


class NonRigidRotation(DataError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class UnsupportedDirective(DataError):
    pass


class DanglingIndex(DataError):
    pass


class UnknownPart(DataError):
    pass


class SchemaError(DataError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class AllProjectionsEmpty(NumericalError):
    pass
