"""
Exception hierarchy for homgeo

Every error carries the process exit code the CLI reports for it, the way an HTTP
error carries a status code and a detail message.
"""
from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_DOMAIN = 3


class HomGeoError(Exception):
    """Base class for all homgeo errors"""
    exit_code: int = EXIT_VALIDATION

    def __init__(self, detail: str, **context: Any):
        super().__init__(detail)
        self.detail = detail
        self.context: Dict[str, Any] = context

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "type": type(self).__name__,
            "detail": self.detail,
        }
        if self.context:
            payload["context"] = self.context
        return payload


# Validation and parse errors (exit 1)

class DimensionMismatch(HomGeoError):
    pass


class DegenerateOnH(HomGeoError):
    pass


class NotSubalgebra(HomGeoError):
    pass


class NotReductive(HomGeoError):
    pass


class InvalidInnerProduct(HomGeoError):
    pass


class InvalidMetric(HomGeoError):
    pass


class NotUnitVector(HomGeoError):
    pass


class PhiParseError(HomGeoError):
    """Raised by the φ-expression parser; carries the byte offset and expected tokens"""

    def __init__(self, detail: str, offset: int, expected: Optional[list] = None):
        super().__init__(detail, offset=offset, expected=sorted(expected or []))
        self.offset = offset
        self.expected = sorted(expected or [])


class ConstraintViolation(HomGeoError):
    pass


class InvariantVectorViolation(HomGeoError):
    pass


class InstanceError(HomGeoError):
    pass


# Numerical errors (exit 2)

class NumericalFailure(HomGeoError):
    exit_code = EXIT_NUMERICAL


class NoConvergence(NumericalFailure):
    pass


class DomainExhausted(NumericalFailure):
    pass


class ResidualTooLarge(NumericalFailure):
    pass


class PredictionMismatch(NumericalFailure):
    pass


class RicciDegenerate(NumericalFailure):
    pass


# Domain errors (exit 3)

class OutsideDomain(HomGeoError):
    exit_code = EXIT_DOMAIN


class ZeroVector(OutsideDomain):
    pass


class ZeroProjection(OutsideDomain):
    pass


class PhiDomainError(OutsideDomain):
    """φ evaluated outside its domain (division by zero, log of a nonpositive number)"""
    pass
