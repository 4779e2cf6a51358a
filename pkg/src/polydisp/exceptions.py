"""Exception types raised by polydisp."""


class DatasetValidationError(ValueError):
    """Input data violate the grouped longitudinal layout (totals, missing rows)."""


class DegenerateDataError(ValueError):
    """A category or cell carries no information (zero total count or zero
    expected variance)."""


class RankDeficiencyError(ValueError):
    """Fixed-effect design columns are linearly dependent.

    Attributes
    ----------
    aliased : list of str
        Names of the columns that are linear combinations of earlier ones.
    """

    def __init__(self, aliased):
        self.aliased = list(aliased)
        super().__init__(
            "design matrix is rank deficient; aliased columns: " + ", ".join(self.aliased)
        )


class NotConvergedError(RuntimeError):
    """An operation needs a converged fit but was given an unconverged one."""


class NestingError(ValueError):
    """Two models passed to a likelihood-ratio test are not nested."""


class OptimizerFailureError(RuntimeError):
    """A larger nested model has a clearly larger deviance than the smaller one."""
