"""Exception hierarchy shared by every module."""


class PredInferError(ValueError):
    """Base class. ``tag`` is the short label written to failure rows."""

    tag = "error"


class DimensionMismatch(PredInferError):
    tag = "dimension_mismatch"


class RankDeficient(PredInferError):
    tag = "rank_deficient"


class DegenerateInput(PredInferError):
    tag = "degenerate_input"


class TooFewPoints(PredInferError):
    tag = "too_few_points"


class UndefinedSE(PredInferError):
    tag = "undefined_se"


class ZeroSE(PredInferError):
    tag = "zero_se"
