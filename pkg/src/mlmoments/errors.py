"""Exception hierarchy.

Every failure the library can report maps to exactly one class here; the CLI
translates them to exit codes.
"""


class MomentsError(Exception):
    """Base class for all library errors."""


class ValidationError(MomentsError, ValueError):
    pass


class TooFewGroups(ValidationError):
    def __init__(self, n):
        self.n = n
        super().__init__(f"need at least 3 groups, got {n}")


class GroupTooSmall(ValidationError):
    def __init__(self, index, size):
        self.index = index
        self.size = size
        super().__init__(f"group {index} has {size} observations, need at least 3")


class SubgroupCountTooSmall(ValidationError):
    def __init__(self, index, count):
        self.index = index
        self.count = count
        super().__init__(f"group {index} has {count} subgroups, need at least 3")


class SubgroupTooSmall(ValidationError):
    def __init__(self, group, subgroup, size):
        self.group = group
        self.subgroup = subgroup
        self.size = size
        super().__init__(
            f"subgroup {subgroup} of group {group} has {size} observations, need at least 3"
        )


class NonFiniteValue(ValidationError):
    def __init__(self, position, value):
        self.position = tuple(position)
        self.value = value
        super().__init__(f"non-finite value {value!r} at position {self.position}")


class UnsupportedOrder(MomentsError, ValueError):
    pass


class UnsupportedKind(MomentsError, ValueError):
    pass


class SingularSystem(MomentsError, ArithmeticError):
    """The 2x2 fourth-moment system cannot be inverted for this design."""

    def __init__(self, kind, det):
        self.kind = kind
        self.det = det
        super().__init__(f"fourth-moment system '{kind}' is singular (det={det})")


class MissingWithinFourth(MomentsError):
    """A between-group fourth moment needs within-group fourth-order plug-ins."""


class EnumerationTooLarge(MomentsError):
    def __init__(self, outcomes, bound):
        self.outcomes = outcomes
        self.bound = bound
        super().__init__(f"enumeration needs {outcomes} outcomes, budget is {bound}")


class InvalidDistribution(MomentsError, ValueError):
    pass


class IngestError(MomentsError, ValueError):
    pass


class MissingHeader(IngestError):
    pass


class BadColumnCount(IngestError):
    def __init__(self, row, expected, got):
        self.row = row
        super().__init__(f"row {row}: expected {expected} columns, got {got}")


class UnparseableValue(IngestError):
    def __init__(self, row, column, text):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column}: cannot parse {text!r}")
