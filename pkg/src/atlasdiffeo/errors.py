"""Exception types shared across the library.

The names follow the failure conditions of the numerical contracts: they say
what went wrong operationally (a geodesic left its chart, a Newton solve did
not converge, ...) so callers can branch on them.  The CLI maps any of these
to exit code 2 when they indicate bad input, and certificate failures (which
are values, not exceptions) to exit code 1.
"""

from __future__ import annotations

__all__ = [
    "AtlasDiffeoError",
    "SpecError",
    "InvariantViolation",
    "MissingTransition",
    "LeftChartDomain",
    "StepSizeUnderflow",
    "NoConvergence",
    "OutsideInjectivityRadius",
    "DegenerateRegion",
    "SigmaOutOfRange",
    "DeltaTooLarge",
    "SingularDifferential",
    "OrderUnavailable",
    "NotSubordinate",
    "EmptyIntersection",
    "MultiplierConditionUnverified",
    "CoverViolation",
    "ExplosionGuard",
    "ConstantsIncompatible",
    "ConstantsMissing",
    "NoContainingChart",
    "GaugeViolation",
    "LogDomainExceeded",
    "NewtonFailure",
    "OutsideTrustRegion",
    "RadiiOrderViolation",
]


class AtlasDiffeoError(Exception):
    """Base class for all library errors."""


class SpecError(AtlasDiffeoError):
    """A manifold description file could not be read or parsed."""


class InvariantViolation(SpecError):
    """One or more structural invariants of a loaded spec failed.

    Carries the full list of human-readable violation messages.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__(
            f"{len(self.violations)} invariant violation(s): "
            + "; ".join(self.violations)
        )


class MissingTransition(SpecError):
    def __init__(self, from_id: str, to_id: str):
        self.pair = (from_id, to_id)
        super().__init__(
            f"transition {from_id!r} -> {to_id!r} is declared without "
            f"its reverse {to_id!r} -> {from_id!r}"
        )


class LeftChartDomain(AtlasDiffeoError):
    """A geodesic exited the chart domain at parameter ``t_exit``."""

    def __init__(self, t_exit: float):
        self.t_exit = float(t_exit)
        super().__init__(f"geodesic left the chart domain at t = {self.t_exit:.6g}")


class StepSizeUnderflow(AtlasDiffeoError):
    pass


class NoConvergence(AtlasDiffeoError):
    """An iterative solve exhausted its iteration budget."""

    def __init__(self, iterations: int, residual: float | None = None):
        self.iterations = int(iterations)
        self.residual = residual
        msg = f"no convergence after {self.iterations} iterations"
        if residual is not None:
            msg += f" (residual {residual:.3g})"
        super().__init__(msg)


class OutsideInjectivityRadius(AtlasDiffeoError):
    pass


class DegenerateRegion(AtlasDiffeoError):
    """The metric is non-SPD or non-finite somewhere in the sampled region."""


class SigmaOutOfRange(AtlasDiffeoError):
    pass


class DeltaTooLarge(AtlasDiffeoError):
    pass


class SingularDifferential(AtlasDiffeoError):
    pass


class OrderUnavailable(AtlasDiffeoError):
    pass


class NotSubordinate(AtlasDiffeoError):
    pass


class EmptyIntersection(AtlasDiffeoError):
    pass


class MultiplierConditionUnverified(AtlasDiffeoError):
    pass


class CoverViolation(AtlasDiffeoError):
    pass


class ExplosionGuard(AtlasDiffeoError):
    def __init__(self, count: int, cap: int):
        self.count, self.cap = count, cap
        super().__init__(f"weight construction produced {count} > cap {cap} entries")


class ConstantsIncompatible(AtlasDiffeoError):
    pass


class ConstantsMissing(AtlasDiffeoError):
    pass


class NoContainingChart(AtlasDiffeoError):
    pass


class GaugeViolation(AtlasDiffeoError):
    """A field does not satisfy a gauge threshold; names the clause."""

    def __init__(self, clause: str, value: float, threshold: float):
        self.clause = clause
        self.value = float(value)
        self.threshold = float(threshold)
        super().__init__(
            f"gauge clause {clause!r} violated: {self.value:.6g} >= {self.threshold:.6g}"
        )


class LogDomainExceeded(AtlasDiffeoError):
    pass


class NewtonFailure(AtlasDiffeoError):
    pass


class OutsideTrustRegion(AtlasDiffeoError):
    pass


class RadiiOrderViolation(AtlasDiffeoError):
    pass
