"""Exception hierarchy for the market solvers."""


class MarketError(Exception):
    """Base class for every error raised by sponsornet."""


class InvalidConfig(MarketError, ValueError):
    pass


class InvalidInstance(MarketError, ValueError):
    pass


class SingularSystem(MarketError):
    pass


class NotPositiveDefinite(MarketError):
    pass


class IndexOutOfRange(MarketError, IndexError):
    pass


class NonPositiveDemand(MarketError):
    """Stage II demand has non-positive components (positive-demand assumption fails)."""

    def __init__(self, indices, demand=None):
        self.indices = tuple(int(i) for i in indices)
        self.demand = demand
        shown = list(self.indices[:10])
        more = "" if len(self.indices) <= 10 else f" (+{len(self.indices) - 10} more)"
        super().__init__(f"non-positive demand for users {shown}{more}")


class NoConvergence(MarketError):
    def __init__(self, message, residual=float("nan"), history=None):
        self.residual = residual
        self.history = list(history) if history is not None else []
        super().__init__(f"{message} (last residual {residual:.3e})")


class DegeneratePrice(MarketError, ValueError):
    pass


class AllSponsored(MarketError):
    pass


class DegenerateQ(UserWarning):
    """Zero effective price: the strategy is not identifiable, a placeholder is returned."""


class EmptyInput(MarketError, ValueError):
    pass
