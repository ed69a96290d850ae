"""Exception hierarchy.

Every exception carries the name of the module that raised it and the
invariant that was violated, so that batch reports can name both.
"""


class QkdvError(Exception):
    """Base class for all package errors."""

    module = "qkdv"
    invariant = "unspecified"

    def __init__(self, message, *, module=None, invariant=None):
        super().__init__(message)
        if module is not None:
            self.module = module
        if invariant is not None:
            self.invariant = invariant

    def describe(self):
        return {"module": self.module, "invariant": self.invariant, "message": str(self)}


class InvalidArgument(QkdvError, ValueError):
    invariant = "invalid-argument"


class DegeneratePhaseError(QkdvError):
    invariant = "distinct-phases"


class BudgetExceeded(QkdvError):
    invariant = "combinatorial-budget"


class TermBudgetExceeded(BudgetExceeded):
    invariant = "term-budget"


class HorizonExceeded(QkdvError):
    invariant = "horizon"


class NoContraction(QkdvError):
    invariant = "contraction"


class UnresolvedRootCluster(QkdvError):
    invariant = "resolved-band-edges"


class InconsistentInitialData(QkdvError):
    invariant = "equal-initial-data"


class EnvelopeBudgetExceeded(QkdvError):
    invariant = "envelope-budget"
