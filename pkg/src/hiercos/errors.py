"""Exception types raised across the package.

Parse-level problems (malformed files) derive from :class:`ParseError`,
tree-shape problems from :class:`StructureError`, and evaluation-time
problems from :class:`EvaluationError`.  The CLI maps these three families
to exit codes 1, 2 and 3.
"""


class HierCosError(Exception):
    """Base class for every error raised by hiercos."""


class ParseError(HierCosError, ValueError):
    """Malformed input text (wrong column count, empty ids, bad numbers)."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        super().__init__(_locate(message, line, path))


class StructureError(HierCosError, ValueError):
    """The input parses but does not describe a valid rooted tree."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        super().__init__(_locate(message, line, path))


class DuplicateNode(StructureError):
    pass


class MultipleRoots(StructureError):
    pass


class MissingRoot(StructureError):
    pass


class CycleDetected(StructureError):
    pass


class DanglingParent(StructureError):
    pass


class UnknownNode(HierCosError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown node"


class NotALeaf(HierCosError, ValueError):
    pass


class LevelOutOfRange(HierCosError, ValueError):
    pass


class AxisOutOfRange(HierCosError, IndexError):
    pass


class NonPositiveMagnitude(HierCosError, ValueError):
    pass


class NonPositiveDepth(HierCosError, ValueError):
    pass


class NonFiniteInput(HierCosError, ValueError):
    pass


class DimensionMismatch(HierCosError, ValueError):
    pass


class DivergenceDetected(HierCosError, RuntimeError):
    pass


class EvaluationError(HierCosError, ValueError):
    """Raised when a batch cannot be scored as requested."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        super().__init__(_locate(message, line, path))


class KOutOfRange(EvaluationError):
    pass


class NotAPermutation(EvaluationError):
    pass


class UnequalLeafDepths(EvaluationError):
    pass


class MissingLevelPredictions(EvaluationError):
    pass


class UnknownClassInPredictions(EvaluationError):
    pass


class RowLengthMismatch(EvaluationError):
    pass


def _locate(message, line, path):
    where = []
    if path is not None:
        where.append(str(path))
    if line is not None:
        where.append(f"line {line}")
    if where:
        return f"{':'.join(where)}: {message}"
    return message
