"""Exception types shared across the package."""


class BundleError(ValueError):
    """A graph bundle directory is missing files or violates the format."""


class BudgetError(ValueError):
    """The requested perturbation budget is infeasible for the graph."""


class DegenerateGradientError(RuntimeError):
    """No sign-consistent edge candidate exists; the attack cannot proceed.

    When raised from a running attack, ``partial_log`` and ``partial_graph``
    carry whatever was completed before the abort.
    """

    def __init__(self, message, partial_log=None, partial_graph=None):
        super().__init__(message)
        self.partial_log = partial_log
        self.partial_graph = partial_graph


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss, typically a divergent step size."""
