"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` which the CLI echoes
in its JSON error payload.
"""


class FragdistError(ValueError):
    code = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message}


class InvalidParameter(FragdistError):
    code = "invalid-parameter"


class OutOfRange(FragdistError):
    code = "out-of-range"


class ConditioningOnNullEvent(FragdistError):
    code = "conditioning-on-null-event"


class TruncationTooSmall(FragdistError):
    code = "truncation-too-small"


class SolverFailure(FragdistError):
    code = "solver-failure"


class PreconditionViolated(FragdistError):
    code = "precondition-violated"


class DomainError(FragdistError):
    code = "domain-error"


class ResolutionError(FragdistError):
    code = "resolution-error"


class InsufficientData(FragdistError):
    code = "insufficient-data"
