"""Exception hierarchy shared by all modules.

Parameter errors map to CLI exit code 1, contract violations to exit code 2.
"""


class C3TraceError(Exception):
    """Base class for all library errors."""


class ParameterError(C3TraceError, ValueError):
    """Invalid argument, malformed input file, or violated precondition."""


class ContractViolation(C3TraceError, RuntimeError):
    """A runtime guarantee failed (not a caller mistake)."""


class MarkingAssumptionError(ContractViolation):
    """An attack word altered an undetectable column."""

    def __init__(self, message: str, columns=(), trial_index=None):
        super().__init__(message)
        self.columns = tuple(columns)
        self.trial_index = trial_index


class InfeasibleError(ContractViolation):
    """No code length below the search ceiling satisfies the requested bound."""


class ExpansionOverflowError(ContractViolation):
    """Materializing a compressed triple family would exceed the size cap."""

    def __init__(self, message: str, class_counts=None):
        super().__init__(message)
        self.class_counts = class_counts
