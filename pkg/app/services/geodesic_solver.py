"""
Geodesic-vector criteria and search

A vector Y of g is a geodesic vector when g_{Y_m}([Y, Z]_m, Y_m) = 0 for every Z in m.
Three evaluations are provided: the Riemannian criterion, the Kropina closed form and
the general Finsler criterion through the fundamental tensor. Candidates Y are given in
g-coordinates; search results are expressed in m-coordinates.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from app.core.config import settings
from app.core.exceptions import (DimensionMismatch, HomGeoError, InvalidMetric,
                                 OutsideDomain, ZeroProjection,
                                 ZeroVector)
from app.services import linalg
from app.services.lie_core import ReductiveSpace, derived_series
from app.services.metric_core import (InnerProduct, MetricFamily, MetricSpec,
                                      F_eval, F_values, fundamental_tensor,
                                      gradient_values, kropina)
from app.workers.tasks import PolishTaskManager

logger = logging.getLogger(__name__)


class Verdict(str, enum.Enum):
    GEODESIC = "geodesic"
    NOT_GEODESIC = "not_geodesic"
    OUTSIDE_DOMAIN = "outside_domain"


@dataclass
class GeodesicReport:
    candidate: np.ndarray
    family: MetricFamily
    residuals: Optional[np.ndarray]
    max_residual: Optional[float]
    verdict: Verdict
    tolerance: float
    detail: Optional[str] = None

    @property
    def is_geodesic(self) -> bool:
        return self.verdict is Verdict.GEODESIC

    def to_dict(self) -> dict:
        return {
            "candidate": self.candidate.tolist(),
            "family": self.family.value,
            "residuals": None if self.residuals is None else self.residuals.tolist(),
            "max_residual": self.max_residual,
            "verdict": self.verdict.value,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


@dataclass
class SearchConfig:
    samples: int = field(default_factory=lambda: settings.SEARCH_SAMPLES)
    seed: int = field(default_factory=lambda: settings.SEARCH_SEED)
    tol: float = field(default_factory=lambda: settings.GEODESIC_TOL)
    dedup_angle: float = field(default_factory=lambda: settings.DEDUP_ANGLE)
    sampling: str = "uniform"
    # None: identify ±Y for Riemannian metrics and Douglas-type Randers metrics
    identify_antipodes: Optional[bool] = None
    workers: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "seed": self.seed,
            "tol": self.tol,
            "dedup_angle": self.dedup_angle,
            "sampling": self.sampling,
        }


@dataclass
class AxisSet:
    """Canonical unit representatives of geodesic axes, in m-coordinates"""
    axes: np.ndarray
    gram: np.ndarray
    angles: np.ndarray
    family: MetricFamily
    identify_antipodes: bool
    manifold: bool
    samples: int
    converged: int
    rejected: int
    config: SearchConfig

    @property
    def count(self) -> Optional[int]:
        return None if self.manifold else int(self.axes.shape[0])

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "count": self.count,
            "solution_manifold": self.manifold,
            "identify_antipodes": self.identify_antipodes,
            "axes": self.axes.tolist(),
            "gram": self.gram.tolist(),
            "angles": self.angles.tolist(),
            "samples": self.samples,
            "converged": self.converged,
            "rejected": self.rejected,
            "config": self.config.to_dict(),
        }


# Per-vector criteria

def _split_candidate(s: ReductiveSpace, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (s.algebra.dim,):
        raise DimensionMismatch(
            f"candidate must have length {s.algebra.dim}, got {Y.shape}")
    if not np.any(Y):
        raise ZeroVector("candidate vector is zero")
    y = s.m_coords(Y)
    if not np.any(np.abs(y) > 1e-14):
        raise ZeroProjection("candidate has zero m-projection")
    return y


def _brackets(s: ReductiveSpace, Y: np.ndarray) -> np.ndarray:
    """Rows j: m-coordinates of [Y, z_j]_m"""
    return np.array([s.bracket_m(Y, j) for j in range(s.dim_m)]).reshape(s.dim_m, s.dim_m)


def riemannian_residual(s: ReductiveSpace, ip: InnerProduct, Y) -> np.ndarray:
    """Entries ⟨[Y, z_j]_m, Y_m⟩"""
    Y = np.asarray(Y, dtype=float)
    if Y.shape == (s.algebra.dim,) and not np.any(Y):
        raise ZeroVector("candidate vector is zero")
    y = s.m_coords(Y)
    return _brackets(s, Y) @ ip.matrix @ y


def kropina_residual(s: ReductiveSpace, ip: InnerProduct, X, Y) -> np.ndarray:
    """Entries ⟨[Y, z_j]_m, 2 Y_m / F(Y_m) - X⟩"""
    y = _split_candidate(s, Y)
    m = kropina(ip, X)
    F = F_eval(m, y)
    return _brackets(s, np.asarray(Y, dtype=float)) @ ip.matrix @ (2.0 * y / F - m.X)


def finsler_residual(s: ReductiveSpace, m: MetricSpec, Y) -> np.ndarray:
    """Entries g_{Y_m}([Y, z_j]_m, Y_m) through the fundamental tensor"""
    y = _split_candidate(s, Y)
    g = fundamental_tensor(m, y)
    return _brackets(s, np.asarray(Y, dtype=float)) @ g @ y


def metric_residual(s: ReductiveSpace, m: MetricSpec, Y) -> np.ndarray:
    """Residual with the cheapest exact criterion for the metric family"""
    if m.family is MetricFamily.RIEMANNIAN:
        return riemannian_residual(s, m.inner, Y)
    if m.family is MetricFamily.KROPINA:
        return kropina_residual(s, m.inner, m.X, Y)
    return finsler_residual(s, m, Y)


def check_geodesic(s: ReductiveSpace, m: MetricSpec, Y, tol: Optional[float] = None) -> GeodesicReport:
    tol = settings.GEODESIC_TOL if tol is None else tol
    Y = np.asarray(Y, dtype=float)
    try:
        r = metric_residual(s, m, Y)
    except ZeroVector:
        raise
    except OutsideDomain as e:
        return GeodesicReport(candidate=Y, family=m.family, residuals=None,
                              max_residual=None, verdict=Verdict.OUTSIDE_DOMAIN,
                              tolerance=tol, detail=e.detail)
    worst = float(np.max(np.abs(r))) if r.size else 0.0
    verdict = Verdict.GEODESIC if worst <= tol else Verdict.NOT_GEODESIC
    return GeodesicReport(candidate=Y, family=m.family, residuals=r, max_residual=worst,
                          verdict=verdict, tolerance=tol)


# Batched residuals over rows of m-coordinates (Y in m)

def batched_residual(s: ReductiveSpace, m: MetricSpec) -> Callable[[np.ndarray], np.ndarray]:
    """
    Residual system used while polishing. The Kropina system is scaled by F/2,
    ⟨[Y, z_j]_m, Y - (F/2) X⟩, and the general system uses the first variation
    F dF_Y([Y, z_j]_m) = g_Y([Y, z_j]_m, Y). Rows outside the domain are NaN.
    """
    L = s.bracket_maps
    G = m.inner.matrix
    family = m.family

    def residual(Y: np.ndarray) -> np.ndarray:
        B = np.einsum("jka,sa->sjk", L, Y)
        if family is MetricFamily.RIEMANNIAN:
            return np.einsum("sjk,kl,sl->sj", B, G, Y)
        F = F_values(m, Y)
        if family is MetricFamily.KROPINA:
            target = Y - 0.5 * F[:, None] * m.X[None, :]
            return np.einsum("sjk,kl,sl->sj", B, G, target)
        grad = gradient_values(m, Y)
        return F[:, None] * np.einsum("sjk,sk->sj", B, grad)

    return residual


def _sup(r: np.ndarray) -> np.ndarray:
    out = np.max(np.abs(r), axis=1) if r.shape[1] else np.zeros(r.shape[0])
    return np.where(np.isfinite(out), out, np.inf)


def _normalize(Y: np.ndarray, G: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("si,ij,sj->s", Y, G, Y))
    return Y / norms[:, None]


def sphere_samples(ip: InnerProduct, n: int, seed: int, method: str = "uniform") -> np.ndarray:
    """
    n points on the ⟨,⟩-unit sphere of m. "uniform" draws normalized Gaussians from
    numpy's default_rng(seed); "fibonacci" uses the golden-angle lattice (dim 3 only).
    """
    p = ip.dim
    if method == "fibonacci":
        if p != 3:
            raise DimensionMismatch("fibonacci sampling is defined for dim m = 3 only")
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        r = np.sqrt(1.0 - z * z)
        phi = np.pi * (3.0 - np.sqrt(5.0)) * i
        U = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    elif method == "uniform":
        rng = np.random.default_rng(seed)
        U = rng.standard_normal((n, p))
        U /= np.linalg.norm(U, axis=1)[:, None]
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    # whitened unit vectors u map to ⟨,⟩-unit vectors L^{-T} u
    Lc = linalg.spd_whitener(ip.matrix)
    return np.linalg.solve(Lc.T, U.T).T


def newton_polish(residual: Callable[[np.ndarray], np.ndarray], Y0: np.ndarray, G: np.ndarray,
                  max_iter: Optional[int] = None, halvings: Optional[int] = None,
                  step: Optional[float] = None, tol: Optional[float] = None):
    """
    Damped Gauss-Newton on the unit sphere for a batch of starting points.

    Each iteration solves [J; (G y)^T] d = [-r; 0] in the least-squares sense with a
    forward-difference Jacobian, then halves the step until the sup-norm of the
    residual decreases.

    Returns:
        (Y, sup_residual) after polishing, both row-aligned with Y0
    """
    max_iter = settings.NEWTON_MAX_ITER if max_iter is None else max_iter
    halvings = settings.NEWTON_HALVINGS if halvings is None else halvings
    step = settings.NEWTON_STEP if step is None else step
    tol = settings.NEWTON_TOL if tol is None else tol

    Y = _normalize(np.array(Y0, dtype=float), G)
    S, p = Y.shape
    r = residual(Y)
    nr = _sup(r)
    active = np.isfinite(nr) & (nr > tol)

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ya, ra = Y[idx], r[idx]
        J = np.empty((idx.size, ra.shape[1], p))
        for a in range(p):
            shifted = ya.copy()
            shifted[:, a] += step
            J[:, :, a] = (residual(shifted) - ra) / step
        A = np.concatenate([J, (ya @ G)[:, None, :]], axis=1)
        rhs = np.concatenate([-ra, np.zeros((idx.size, 1))], axis=1)
        with np.errstate(all="ignore"):
            delta = np.einsum("sij,sj->si", np.linalg.pinv(np.nan_to_num(A)), rhs)

        lam = np.ones(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        base = nr[idx]
        for _ in range(halvings + 1):
            todo = np.flatnonzero(~accepted)
            if todo.size == 0:
                break
            trial = _normalize(ya[todo] + lam[todo, None] * delta[todo], G)
            rt = residual(trial)
            nt = _sup(rt)
            ok = nt < base[todo]
            hit = todo[ok]
            Y[idx[hit]] = trial[ok]
            r[idx[hit]] = rt[ok]
            nr[idx[hit]] = nt[ok]
            accepted[hit] = True
            lam[todo] *= 0.5
        active[idx[~accepted]] = False
        active &= nr > tol
    return Y, nr


def canonical(Y: np.ndarray, G: np.ndarray, identify_antipodes: bool) -> np.ndarray:
    """Unit rows; with antipodes identified the first coordinate above 1e-8 is positive"""
    Y = _normalize(np.atleast_2d(np.asarray(Y, dtype=float)), G)
    if identify_antipodes:
        for row in Y:
            lead = np.flatnonzero(np.abs(row) > 1e-8)
            if lead.size and row[lead[0]] < 0.0:
                row *= -1.0
    return Y


def axis_angles(axes: np.ndarray, G: np.ndarray, identify_antipodes: bool):
    gram = axes @ G @ axes.T if axes.size else np.zeros((0, 0))
    cos = np.abs(gram) if identify_antipodes else gram
    return gram, np.arccos(np.clip(cos, -1.0, 1.0))


def _dedup(candidates: np.ndarray, G: np.ndarray, identify_antipodes: bool, angle: float,
           cap: float):
    """Greedy clustering in lexicographic order; stops once more than cap axes appear"""
    order = np.lexsort(candidates.T[::-1])
    reps: List[np.ndarray] = []
    for i in order:
        v = candidates[i]
        if reps:
            cos = np.array(reps) @ G @ v
            if identify_antipodes:
                cos = np.abs(cos)
            if np.min(np.arccos(np.clip(cos, -1.0, 1.0))) < angle:
                continue
        reps.append(v)
        if len(reps) > cap:
            return np.array(reps), True
    return np.array(reps).reshape(-1, G.shape[0]), False


def _default_antipodes(s: ReductiveSpace, m: MetricSpec) -> bool:
    if m.family is MetricFamily.RIEMANNIAN:
        return True
    if m.family is MetricFamily.RANDERS:
        return douglas_check(s, m.inner, m.X)
    return False


def find_geodesic_vectors(s: ReductiveSpace, m: MetricSpec,
                          cfg: Optional[SearchConfig] = None) -> AxisSet:
    """
    Sample the unit sphere of m, polish every sample with damped Newton, keep the
    converged points, deduplicate them by angle and re-verify each representative
    with the per-vector criterion. Kropina searches stay in the half-space ⟨X, y⟩ > 0.
    """
    cfg = cfg or SearchConfig()
    p = s.dim_m
    if p > settings.MAX_SEARCH_DIM:
        raise DimensionMismatch(
            f"geodesic search supports dim m <= {settings.MAX_SEARCH_DIM}, got {p}")
    if m.dim != p:
        raise DimensionMismatch(f"metric lives on a {m.dim}-dimensional space, dim m = {p}")
    G = m.inner.matrix
    identify = _default_antipodes(s, m) if cfg.identify_antipodes is None else cfg.identify_antipodes

    Y0 = sphere_samples(m.inner, cfg.samples, cfg.seed, cfg.sampling)
    if m.family is MetricFamily.KROPINA:
        beta = Y0 @ G @ m.X
        Y0 = np.where(beta[:, None] < 0.0, -Y0, Y0)
        Y0 = Y0[np.abs(Y0 @ G @ m.X) > 1e-12]

    residual = batched_residual(s, m)
    manager = PolishTaskManager(workers=cfg.workers)

    def polish(chunk: np.ndarray) -> np.ndarray:
        Y, nr = newton_polish(residual, chunk, G)
        return np.column_stack([Y, nr])

    polished = manager.map_rows(polish, Y0, label="newton-polish")
    Y, nr = polished[:, :p], polished[:, p]
    ok = nr <= cfg.tol
    if m.family is MetricFamily.KROPINA:
        margin = (Y @ G @ m.X) / m.b
        ok &= margin > settings.KROPINA_DOMAIN_MARGIN
    converged = int(np.sum(ok))
    failures = Y0.shape[0] - converged
    if failures:
        logger.debug("%d of %d samples did not converge", failures, Y0.shape[0])

    candidates = canonical(Y[ok], G, identify) if converged else np.zeros((0, p))
    cap = max(settings.MANIFOLD_FRACTION * converged, settings.MANIFOLD_MIN_AXES)
    reps, manifold = _dedup(candidates, G, identify, cfg.dedup_angle, cap)

    rejected = 0
    if not manifold and reps.size:
        keep = []
        for v in reps:
            report = check_geodesic(s, m, s.from_m(v), cfg.tol)
            if report.is_geodesic:
                keep.append(v)
            else:
                rejected += 1
        reps = np.array(keep).reshape(-1, p)
    gram, angles = axis_angles(reps, G, identify)

    if manifold:
        logger.info("solution manifold detected: more than %d distinct axes among %d converged samples",
                    int(cap), converged)
    else:
        logger.info("found %d geodesic axes (%s, %d/%d samples converged)",
                    reps.shape[0], m.family.value, converged, Y0.shape[0])
    return AxisSet(axes=reps, gram=gram, angles=angles, family=m.family,
                   identify_antipodes=identify, manifold=manifold, samples=int(Y0.shape[0]),
                   converged=converged, rejected=rejected, config=cfg)


def same_axes(a: np.ndarray, b: np.ndarray, G: np.ndarray, identify_antipodes: bool,
              angle: Optional[float] = None) -> bool:
    """True when the two axis lists match one-to-one within angle"""
    angle = settings.DEDUP_ANGLE if angle is None else angle
    if a.shape[0] != b.shape[0]:
        return False
    if a.shape[0] == 0:
        return True
    cos = a @ G @ b.T
    if identify_antipodes:
        cos = np.abs(cos)
    close = np.arccos(np.clip(cos, -1.0, 1.0)) < angle
    return bool(np.all(close.any(axis=0)) and np.all(close.any(axis=1)))


# Structural checks

def douglas_check(s: ReductiveSpace, ip: InnerProduct, X, tol: float = 1e-10) -> bool:
    """X ⊥ [z_i, z_j]_m for every pair of m-basis vectors"""
    X = np.asarray(X, dtype=float)
    # [z_a, z_j]_m = L[j] @ e_a
    values = np.einsum("jka,kl,l->ja", s.bracket_maps, ip.matrix, X)
    return bool(np.all(np.abs(values) <= tol))


def naturally_reductive_check(s: ReductiveSpace, ip: InnerProduct, tol: float = 1e-10) -> bool:
    """⟨X, [Z, Y]_m⟩ + ⟨[Z, X]_m, Y⟩ = 0 over all m-basis triples"""
    T = np.einsum("cka->ack", s.bracket_maps)  # T[a, c] = [z_a, z_c]_m
    A = np.einsum("xk,zyk->xzy", ip.matrix, T)  # A[x, z, y] = ⟨z_x, [z_z, z_y]_m⟩
    return bool(np.all(np.abs(A + np.transpose(A, (2, 1, 0))) <= tol))


@dataclass
class TransferReport:
    """Pointwise hypotheses under which Riemannian geodesic vectors stay geodesic for F"""
    candidate: np.ndarray
    x_orthogonal: bool
    x_violation: float
    r: float
    phi_second: float
    phi_concave: bool
    riemannian_geodesic: bool
    finsler_max_residual: Optional[float] = None
    verified: Optional[bool] = None

    @property
    def applies(self) -> bool:
        return self.x_orthogonal and self.phi_concave

    def to_dict(self) -> dict:
        return {
            "candidate": self.candidate.tolist(),
            "applies": self.applies,
            "conditions": {
                "x_orthogonal_to_brackets": self.x_orthogonal,
                "x_violation": self.x_violation,
                "r": self.r,
                "phi_second_derivative": self.phi_second,
                "phi_concave_at_r": self.phi_concave,
            },
            "riemannian_geodesic": self.riemannian_geodesic,
            "finsler_max_residual": self.finsler_max_residual,
            "verified": self.verified,
        }


def transfer_check(s: ReductiveSpace, m: MetricSpec, Y, tol: Optional[float] = None,
                   verify_tol: float = 1e-6) -> TransferReport:
    """
    Checks ⟨X, [Y, z_j]_m⟩ = 0 for all j and φ''(r) <= 0 with r = ⟨X, Y_m⟩/|Y_m|.
    When both hold and Y is a Riemannian geodesic vector, the Finsler residual must
    vanish; that verification is recorded in the report.
    """
    tol = settings.GEODESIC_TOL if tol is None else tol
    Y = np.asarray(Y, dtype=float)
    y = _split_candidate(s, Y)
    G = m.inner.matrix
    B = _brackets(s, Y)
    x_values = B @ G @ m.X
    x_violation = float(np.max(np.abs(x_values))) if x_values.size else 0.0
    r = float(m.inner.dot(m.X, y) / m.inner.norm(y))
    phi2 = float(m.ddphi.values(np.asarray(r)))
    riem = float(np.max(np.abs(B @ G @ y))) if B.size else 0.0
    report = TransferReport(candidate=Y, x_orthogonal=x_violation <= tol, x_violation=x_violation,
                            r=r, phi_second=phi2, phi_concave=bool(np.isfinite(phi2) and phi2 <= 0.0),
                            riemannian_geodesic=riem <= tol)
    if report.applies and report.riemannian_geodesic:
        try:
            fr = finsler_residual(s, m, Y)
            report.finsler_max_residual = float(np.max(np.abs(fr))) if fr.size else 0.0
            report.verified = report.finsler_max_residual <= verify_tol
        except HomGeoError as e:
            logger.warning("transfer verification failed at %s: %s", Y.tolist(), e.detail)
            report.verified = False
        if not report.verified:
            logger.warning("transfer hypotheses hold at %s but the Finsler residual is %s",
                           Y.tolist(), report.finsler_max_residual)
    return report


def riemannian_geodesic_transfer(s: ReductiveSpace, m: MetricSpec, candidates: Sequence,
                                 tol: Optional[float] = None) -> List[TransferReport]:
    """
    Transfer a list of Riemannian geodesic vectors (m-coordinates) to F. Candidates
    that are not Riemannian geodesic vectors are rejected up front.
    """
    tol = settings.GEODESIC_TOL if tol is None else tol
    reports = []
    for y in candidates:
        Y = s.from_m(np.asarray(y, dtype=float))
        rr = riemannian_residual(s, m.inner, Y)
        if rr.size and float(np.max(np.abs(rr))) > tol:
            raise InvalidMetric(f"{np.asarray(y).tolist()} is not a Riemannian geodesic vector")
        reports.append(transfer_check(s, m, Y, tol))
    return reports


@dataclass
class DerivedSeriesCase:
    """
    Either some derived algebra g^(i+1) projects onto a proper subspace of m while
    g^(i) projects onto m, or every term projects onto m (then G is semisimple)
    """
    proper_projection: bool
    index: Optional[int]
    projected_ranks: List[int]

    def to_dict(self) -> dict:
        return {
            "case": "proper_projection" if self.proper_projection else "semisimple",
            "index": self.index,
            "projected_ranks": self.projected_ranks,
        }


def derived_series_case(s: ReductiveSpace, tol: Optional[float] = None) -> DerivedSeriesCase:
    ranks = []
    for term in derived_series(s.algebra, tol):
        if term.shape[1] == 0:
            ranks.append(0)
            continue
        ranks.append(linalg.matrix_rank(s._m_coords @ term, tol))
    p = s.dim_m
    for i in range(len(ranks) - 1):
        if ranks[i] == p and ranks[i + 1] < p:
            return DerivedSeriesCase(True, i, ranks)
    return DerivedSeriesCase(False, None, ranks)
