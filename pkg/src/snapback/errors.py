"""Exception hierarchy.

Every error carries a machine-readable ``code`` and a ``context`` dict so the
CLI can serialize it as ``{code, message, context}``.
"""

from __future__ import annotations


class SnapbackError(Exception):
    code = "error"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def as_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "context": self.context}


class ConvergenceError(SnapbackError):
    code = "no-convergence"


class SingularMatrixError(SnapbackError):
    code = "singular-matrix"


class BranchDomainError(SnapbackError):
    """An inverse branch cannot be continued over the requested ball."""

    code = "branch-domain-violation"


class NotExpandingError(SnapbackError):
    code = "not-expanding"


class PreconditionError(SnapbackError):
    code = "precondition"


class HypothesisError(PreconditionError):
    """The bracket does not satisfy the one-parameter family hypotheses."""

    code = "hypothesis"


class NotFold(SnapbackError):
    """Raised by :func:`snapback.homoclinic.fold_test`; ``failed`` names the
    certificate inequalities that did not hold."""

    code = "not-fold"

    def __init__(self, message: str, failed: list[str], **context):
        super().__init__(message, failed=failed, **context)
        self.failed = failed


class ConfigError(SnapbackError):
    code = "config"
