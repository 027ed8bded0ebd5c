"""Exception hierarchy shared by every rfsisso module."""


class RFSissoError(Exception):
    """Base class for all library errors."""


class SchemaError(RFSissoError):
    pass


class ParseError(RFSissoError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ValidationError(RFSissoError):
    pass


class StratificationError(RFSissoError):
    pass


class SpecError(RFSissoError):
    """A synthetic-formula description references something that does not exist."""


class DimensionError(RFSissoError):
    """An operator was refused by the unit rules.

    ``reason`` is a short machine-readable code such as ``"unit-mismatch"``.
    """

    def __init__(self, reason, message=None):
        super().__init__(message or reason)
        self.reason = reason


class DomainError(RFSissoError):
    """Evaluation left an operator's domain; ``row`` is the first offending row."""

    def __init__(self, reason, row):
        super().__init__(f"{reason} at row {row}")
        self.reason = reason
        self.row = row


class CapacityError(RFSissoError):
    def __init__(self, cap_name, cap_value, requested):
        super().__init__(
            f"feature space exceeds {cap_name}={cap_value} (needs {requested})"
        )
        self.cap_name = cap_name
        self.cap_value = cap_value
        self.requested = requested


class DegenerateDesignError(RFSissoError):
    pass


class NoModelError(RFSissoError):
    pass


class UnsupportedDimensionError(RFSissoError):
    pass


class EmptySelectionError(RFSissoError):
    pass
