"""
Three-dimensional non-unimodular metric Lie algebras in a Milnor basis

[e1, e2] = α e2 + β e3, [e1, e3] = γ e2 + δ e3, [e2, e3] = 0 with α + δ != 0 and
αγ + βδ = 0, the basis being orthonormal. With D = (β + γ)² - 4αδ and distinct
Ricci eigenvalues, the number of geodesic axes through a point is 1, 2 or 3 as
D < 0, D = 0 or D > 0. The count carries over to Randers metrics of Douglas type.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import (ConstraintViolation, PredictionMismatch,
                                 RicciDegenerate)
from app.services import linalg
from app.services.geodesic_solver import (AxisSet, SearchConfig, douglas_check,
                                          find_geodesic_vectors)
from app.services.lie_core import (LieAlgebraSpec, ReductiveSpace,
                                   lie_group_space, nonunimodular, validate)
from app.services.metric_core import (InnerProduct, MetricFamily, MetricSpec,
                                      levi_civita_ricci, riemannian)
from app.workers.tasks import seeded_draws

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NonUnimodularParams:
    milnor_alpha: float
    milnor_beta: float
    milnor_gamma: float
    milnor_delta: float

    @property
    def D(self) -> float:
        return (self.milnor_beta + self.milnor_gamma) ** 2 - 4.0 * self.milnor_alpha * self.milnor_delta

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.milnor_alpha, self.milnor_beta, self.milnor_gamma, self.milnor_delta)

    def scaled(self, c: float) -> "NonUnimodularParams":
        return NonUnimodularParams(*(c * v for v in self.as_tuple()))

    def to_dict(self) -> dict:
        return {
            "alpha": self.milnor_alpha,
            "beta": self.milnor_beta,
            "gamma": self.milnor_gamma,
            "delta": self.milnor_delta,
            "D": self.D,
        }


def check_params(params: NonUnimodularParams, tol: Optional[float] = None) -> None:
    tol = settings.MILNOR_TOL if tol is None else tol
    a, b, c, d = params.as_tuple()
    if abs(a + d) <= tol:
        raise ConstraintViolation("alpha + delta must be nonzero", alpha=a, delta=d)
    if abs(a * c + b * d) > tol:
        raise ConstraintViolation("alpha*gamma + beta*delta must vanish",
                                  value=a * c + b * d)


def build(params: NonUnimodularParams) -> Tuple[LieAlgebraSpec, InnerProduct]:
    check_params(params)
    algebra = nonunimodular(*params.as_tuple())
    report = validate(algebra)
    if not report.passed:
        raise ConstraintViolation("bracket table violates the Jacobi identity",
                                  worst_triple=report.worst_triple)
    return algebra, InnerProduct.identity(3)


def zero_discriminant_params(alpha: float, delta: float) -> NonUnimodularParams:
    """Exact D = 0 family: β² = 4α³δ/(α - δ)², γ = -βδ/α (αδ > 0, α != δ)"""
    if alpha * delta <= 0.0 or alpha == delta:
        raise ConstraintViolation("D = 0 family needs alpha*delta > 0 and alpha != delta")
    beta = math.sqrt(4.0 * alpha ** 3 * delta / (alpha - delta) ** 2)
    return NonUnimodularParams(alpha, beta, -beta * delta / alpha, delta)


def random_params(rng: np.random.Generator, scale: float = 2.0) -> NonUnimodularParams:
    """Draw with γ = -βδ/α so that αγ + βδ = 0 holds to rounding"""
    while True:
        alpha = rng.uniform(0.2, scale) * rng.choice([-1.0, 1.0])
        beta = rng.normal(0.0, scale)
        delta = rng.normal(0.0, scale)
        if abs(alpha + delta) > 1e-3:
            return NonUnimodularParams(alpha, beta, -beta * delta / alpha, delta)


def ricci_milnor(params: NonUnimodularParams) -> np.ndarray:
    """Diagonal Ricci values Ric(e1, e1), Ric(e2, e2), Ric(e3, e3) in the Milnor basis"""
    a, b, c, d = params.as_tuple()
    r1 = -a * a - d * d - 0.5 * (b + c) ** 2
    r2 = 0.5 * (c * c - b * b) - a * (a + d)
    r3 = 0.5 * (b * b - c * c) - d * (a + d)
    return np.array([r1, r2, r3])


def ricci_distinct(eigenvalues: np.ndarray, gap: Optional[float] = None) -> bool:
    gap = settings.RICCI_GAP if gap is None else gap
    return bool(np.all(np.diff(np.sort(eigenvalues)) > gap))


def predicted_axis_count(params: NonUnimodularParams, tol: Optional[float] = None) -> int:
    """
    1, 2 or 3 axes as D < 0, D = 0 or D > 0. Raises RicciDegenerate when the Ricci
    eigenvalues are not distinct, since the count is only asserted in that case.
    """
    ricci = levi_civita_ricci(lie_group_space(build(params)[0]), InnerProduct.identity(3))
    if not ricci_distinct(ricci):
        raise RicciDegenerate("Ricci eigenvalues are not distinct",
                              ricci=ricci.tolist())
    return _count_from_D(params.D, tol)


def _count_from_D(D: float, tol: Optional[float] = None) -> int:
    tol = settings.MILNOR_TOL if tol is None else tol
    if D < -tol:
        return 1
    if D > tol:
        return 3
    return 2


@dataclass
class Classify3dReport:
    params: NonUnimodularParams
    axes: AxisSet
    ricci: np.ndarray
    ricci_distinct: bool
    predicted: int
    match: bool
    orthogonality: str

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "ricci_eigenvalues": self.ricci.tolist(),
            "ricci_distinct": self.ricci_distinct,
            "predicted": self.predicted,
            "prediction_asserted": self.ricci_distinct,
            "found": self.axes.count,
            "match": self.match,
            "orthogonality": self.orthogonality,
            "axes": self.axes.to_dict(),
        }


def orthogonality_pattern(axes: np.ndarray, G: np.ndarray, tol: float = 1e-8) -> str:
    k = axes.shape[0]
    if k <= 1:
        return "single" if k == 1 else "none"
    gram = axes @ G @ axes.T
    off = np.abs(gram - np.diag(np.diag(gram)))
    if np.all(off <= tol):
        return "mutually_orthogonal"
    if linalg.matrix_rank(axes, 1e-8) == k:
        return "independent_not_orthogonal"
    return "dependent"


def enumerate_and_verify(params: NonUnimodularParams, m: Optional[MetricSpec] = None,
                         cfg: Optional[SearchConfig] = None) -> Classify3dReport:
    """
    Enumerate geodesic axes for the Riemannian metric (or a Douglas-type Randers
    metric) and compare with the discriminant prediction

    Raises:
        PredictionMismatch: Ricci eigenvalues distinct and the count or orthogonality
            pattern disagrees with the prediction
    """
    algebra, ip = build(params)
    s: ReductiveSpace = lie_group_space(algebra)
    m = m or riemannian(ip)
    if m.family is MetricFamily.RANDERS:
        if not douglas_check(s, m.inner, m.X):
            raise ConstraintViolation("Randers metric is not of Douglas type: X must be "
                                      "orthogonal to [g, g] = span{e2, e3}")
    elif m.family is not MetricFamily.RIEMANNIAN:
        raise ConstraintViolation("classification applies to Riemannian and Douglas-type "
                                  "Randers metrics")

    ricci = levi_civita_ricci(s, m.inner)
    distinct = ricci_distinct(ricci)
    predicted = _count_from_D(params.D)
    axes = find_geodesic_vectors(s, m, cfg)
    pattern = orthogonality_pattern(axes.axes, m.inner.matrix) if not axes.manifold else "manifold"

    match = axes.count == predicted
    if match and predicted == 2:
        match = pattern == "mutually_orthogonal"
    elif match and predicted == 3:
        match = pattern == "independent_not_orthogonal"

    report = Classify3dReport(params=params, axes=axes, ricci=ricci, ricci_distinct=distinct,
                              predicted=predicted, match=match, orthogonality=pattern)
    if not distinct:
        logger.info("Ricci eigenvalues %s not distinct; prediction not asserted", ricci.tolist())
    elif not match:
        raise PredictionMismatch(
            f"found {axes.count} axes ({pattern}) but D = {params.D:.6g} predicts {predicted}",
            report=report.to_dict())
    return report


def random_sweep(count: int, seed: int, cfg: Optional[SearchConfig] = None,
                 workers: Optional[int] = None) -> List[Classify3dReport]:
    """
    Classify count random Riemannian instances drawn by random_params. Each draw has
    its own generator spawned from seed, so the reports come back in draw order and
    do not depend on the worker count. Draws whose Ricci eigenvalues are not distinct
    are reported without asserting the count; a PredictionMismatch from any other draw
    propagates.
    """
    cfg = cfg or SearchConfig(samples=4000, seed=0, workers=1)

    def draw(rng: np.random.Generator) -> Classify3dReport:
        return enumerate_and_verify(random_params(rng), cfg=cfg)

    reports = seeded_draws(draw, count, seed, workers)
    counts = {k: sum(1 for r in reports if r.predicted == k) for k in (1, 2, 3)}
    degenerate = sum(1 for r in reports if not r.ricci_distinct)
    logger.info("random sweep of %d draws: %d with D < 0, %d with D = 0, %d with D > 0, "
                "%d with repeated Ricci eigenvalues", count, counts[1], counts[2], counts[3],
                degenerate)
    return reports
