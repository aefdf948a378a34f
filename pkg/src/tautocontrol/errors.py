"""Exception types shared across the package."""


class TautoError(Exception):
    pass


class ValidationError(TautoError):
    """Malformed input: bad syntax, schema violations, inconsistent dimensions."""


class ExprSyntaxError(ValidationError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class NumericError(TautoError):
    """Failure during a numerical computation."""


class DomainError(NumericError):
    def __init__(self, message, subtree=None):
        self.subtree = subtree
        super().__init__(message)


class ChartEscape(NumericError):
    def __init__(self, message, trajectory=None):
        self.trajectory = trajectory
        super().__init__(message)


class NotAnEquilibrium(NumericError):
    pass
