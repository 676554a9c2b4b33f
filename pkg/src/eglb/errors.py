class ScenarioError(ValueError):
    """Scenario files or values are malformed or violate invariants."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class DomainError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


class InfeasibleError(RuntimeError):
    """Demand cannot be routed within the available capacity."""

    def __init__(self, message, step=None, source=None):
        super().__init__(message)
        self.step = step
        self.source = source
