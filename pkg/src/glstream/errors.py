"""Exception types shared by the streaming pipeline."""


class GraphletError(Exception):
    """Base class for all errors raised by glstream."""


class ParseError(GraphletError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CapacityError(GraphletError):
    pass


class ScanError(GraphletError):
    """An I/O failure in the middle of a pass; the pass is not counted."""

    def __init__(self, message, partial=True):
        super().__init__(message)
        self.partial = partial


class BudgetError(GraphletError):
    def __init__(self, iteration, needed_words, budget_words):
        super().__init__(
            f"memory budget exceeded at iteration {iteration}: "
            f"{needed_words} words needed, budget is {budget_words} words"
        )
        self.iteration = iteration
        self.needed_words = needed_words
        self.budget_words = budget_words


class InconsistencyError(GraphletError):
    """Internal state contradicts an invariant (broken order/positivity pair, bad probabilities)."""


class ClassificationError(GraphletError):
    pass


class GuardError(GraphletError):
    """The exact oracle refuses inputs above its size guard."""


class DimensionError(GraphletError, ValueError):
    pass


class NoGraphletError(GraphletError):
    def __init__(self, k):
        super().__init__(f"no {k}-graphlet exists in this graph (Z = 0)")
        self.k = k
