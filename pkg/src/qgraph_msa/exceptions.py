"""Error types raised by the toolkit."""


class QGraphError(Exception):
    """Base class for every toolkit failure."""


class GeometryError(QGraphError, ValueError):
    """A ball, region or covering precondition does not hold."""


class ResonanceError(QGraphError, ArithmeticError):
    """The energy sits on (or within 1e-10 of) the spectrum of a restriction."""


class ParameterError(QGraphError, ValueError):
    """A multiscale or initial-scale parameter relation is violated."""

    def __init__(self, relation: str, message: str):
        self.relation = relation
        super().__init__(f"{relation}: {message}")


class ConvergenceError(QGraphError, RuntimeError):
    """An iterative solver did not reach its tolerance."""
