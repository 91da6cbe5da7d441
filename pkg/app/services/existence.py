"""
Constructive existence of homogeneous geodesics for homogeneous Kropina spaces and
mutually orthogonal geodesics on semisimple groups

The construction follows the spectral decomposition of θ, K(u, v) = ⟨θ u, v⟩ on m:
  * rad K = m: W = ½(|X| Y + X) with Y a unit vector ⊥ [g, g]_m
  * X in V0 = ker θ: Y = X0 + |X0| f1 solves F(Y) = 2 directly
  * otherwise: Y(t) = X0 + Σ x_i/(1 - t λ_i) f_i and M(t) = F(Y(t)) - 2 is bisected
"""
import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.exceptions import (ConstraintViolation, DomainExhausted,
                                 InvalidMetric, InvariantVectorViolation,
                                 ResidualTooLarge)
from app.services import linalg
from app.services.geodesic_solver import (SearchConfig, TransferReport,
                                          check_geodesic, find_geodesic_vectors,
                                          kropina_residual, transfer_check)
from app.services.lie_core import (KillingData, ReductiveSpace,
                                   check_invariant_vector, derived_algebra_m,
                                   is_semisimple, killing_form)
from app.services.metric_core import (InnerProduct, MetricFamily, MetricSpec,
                                      F_values, kropina)

logger = logging.getLogger(__name__)


class ExistenceCase(str, enum.Enum):
    RAD_EQUALS_M = "RadEqualsM"
    EIGENSPLIT_X_IN_V0 = "EigenSplit_XequalsX0"
    EIGENSPLIT_GENERAL = "EigenSplit_General"


@dataclass(frozen=True, eq=False)
class EigenSplit:
    """
    m = V0 + V1 + ... + Vs for θ. Columns of `vectors` are a ⟨,⟩-orthonormal basis
    f_1..f_r of the nonzero eigenspaces, ordered |λ_1| >= ... >= |λ_r| > 0; the
    columns of V0 are a ⟨,⟩-orthonormal basis of ker θ.
    """
    killing: KillingData
    eigenvalues: np.ndarray
    vectors: np.ndarray
    V0: np.ndarray
    radical_matches: bool

    @property
    def rank(self) -> int:
        return int(self.eigenvalues.size)

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvectors": self.vectors.T.tolist(),
            "V0": self.V0.T.tolist(),
            "radical_matches_V0": self.radical_matches,
        }


def theta_eigensplit(s: ReductiveSpace, ip: InnerProduct, K: Optional[KillingData] = None,
                     zero_tol: Optional[float] = None) -> EigenSplit:
    """
    Solve K_m f = λ G f. With G = L L^T the problem becomes the symmetric matrix
    L^-1 K_m L^-T, diagonalized by Jacobi rotations; f = L^-T w is ⟨,⟩-orthonormal.
    """
    zero_tol = settings.EIGEN_ZERO_TOL if zero_tol is None else zero_tol
    K = K if K is not None else killing_form(s.algebra)
    M = s.m_basis
    K_m = M @ K.K @ M.T
    G = ip.matrix
    Lc = linalg.spd_whitener(G)
    Linv = np.linalg.inv(Lc)
    w, W = linalg.jacobi_eigh(Linv @ K_m @ Linv.T)
    Fvec = Linv.T @ W
    theta = np.linalg.solve(G, K_m)

    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if scale <= zero_tol:
        nonzero = np.zeros(w.size, dtype=bool)
    else:
        nonzero = np.abs(w) > zero_tol * scale
    # |λ| descending, ties keep ascending-λ order
    idx = np.flatnonzero(nonzero)
    idx = idx[np.argsort(-np.abs(w[idx]), kind="stable")]
    zero_idx = np.flatnonzero(~nonzero)

    radical_m = linalg.null_space(K.K @ M.T)
    V0 = Fvec[:, zero_idx]
    matches = linalg.same_subspace(V0, radical_m, 1e-8)
    if not matches:
        logger.warning("ker θ differs from rad K ∩ m for this decomposition")

    killing = replace(K, K_m=K_m, theta=theta, eigenvalues=w[idx], eigenvectors=Fvec[:, idx])
    return EigenSplit(killing=killing, eigenvalues=w[idx], vectors=Fvec[:, idx], V0=V0,
                      radical_matches=matches)


@dataclass
class ExistenceCertificate:
    case: ExistenceCase
    X: np.ndarray
    Y: np.ndarray
    residual: float
    F_value: float
    eigen_data: Optional[EigenSplit] = None
    X0: Optional[np.ndarray] = None
    x_components: Optional[np.ndarray] = None
    y_components: Optional[np.ndarray] = None
    t0: Optional[float] = None
    bracket: Optional[List[float]] = None
    M_bracket: Optional[List[float]] = None
    M0: Optional[float] = None
    system_residual: Optional[float] = None
    bisection_iterations: Optional[int] = None
    scan_trace: List[Dict[str, Any]] = field(default_factory=list)
    case1_path: Optional[str] = None
    case1_identity: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "case": self.case.value,
            "X": self.X.tolist(),
            "Y": self.Y.tolist(),
            "residual": self.residual,
            "F_value": self.F_value,
            "eigen_data": self.eigen_data.to_dict() if self.eigen_data else None,
            "X0": None if self.X0 is None else self.X0.tolist(),
            "x_components": None if self.x_components is None else self.x_components.tolist(),
            "y_components": None if self.y_components is None else self.y_components.tolist(),
            "t0": self.t0,
            "bracket": self.bracket,
            "M_bracket": self.M_bracket,
            "M0": self.M0,
            "system_residual": self.system_residual,
            "bisection_iterations": self.bisection_iterations,
            "scan_trace": self.scan_trace,
            "case1_path": self.case1_path,
            "case1_identity": self.case1_identity,
        }


def _max_abs(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _check_x(s: ReductiveSpace, ip: InnerProduct, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if ip.norm(X) <= 1e-12:
        raise InvalidMetric("X must be nonzero")
    if not check_invariant_vector(s, X):
        raise InvariantVectorViolation("X is not Ad(H)-invariant: [h, X] != 0")
    return X


def _verify(s: ReductiveSpace, ip: InnerProduct, X: np.ndarray, y: np.ndarray,
            tol: float) -> float:
    residual = _max_abs(kropina_residual(s, ip, X, s.from_m(y)))
    if residual > tol:
        raise ResidualTooLarge(
            f"existence certificate failed verification: residual {residual:.3e} > {tol:.1e}",
            residual=residual)
    return residual


def _check_system(F_Y: float, system: float, tol: float, **context) -> None:
    """Reject a certificate whose normalization F(Y) = 2 or curve equations fail"""
    if abs(F_Y - 2.0) > tol or not system <= tol:
        raise ResidualTooLarge(
            f"existence certificate failed its system check: |F(Y) - 2| = {abs(F_Y - 2.0):.3e}, "
            f"system residual {system:.3e} > {tol:.1e}",
            F_value=F_Y, system_residual=system, **context)


def _case_rad_equals_m(s: ReductiveSpace, ip: InnerProduct, X: np.ndarray,
                       tol: float) -> ExistenceCertificate:
    G = ip.matrix
    D = derived_algebra_m(s)
    if D.shape[1] == 0:
        complement = np.eye(s.dim_m)
    else:
        complement = linalg.null_space(D.T @ G)
    if complement.shape[1] == 0:
        raise DomainExhausted("[g, g]_m is all of m although rad K = m")

    both = linalg.null_space(np.vstack([D.T @ G, (G @ X)[None, :]])) if D.shape[1] else \
        linalg.null_space((G @ X)[None, :])
    Y = both[:, 0] if both.shape[1] else complement[:, 0]
    Y = Y / ip.norm(Y)
    if ip.dot(X, Y) < 0.0:
        Y = -Y
    nx = ip.norm(X)
    W = 0.5 * (nx * Y + X)
    m = kropina(ip, X)
    F_W = float(F_values(m, W[None, :])[0])
    path = "construction"

    # ⟨[W, z_j]_m, |X| Y⟩ vanishes for Y ⊥ [g, g]_m
    identity = _max_abs(np.array([s.bracket_m(s.from_m(W), j) for j in range(s.dim_m)])
                        @ G @ (nx * Y))
    try:
        residual = _verify(s, ip, X, W, tol)
        if not abs(F_W - 1.0) <= 1e-9:
            raise ResidualTooLarge(f"F(W) = {F_W!r} differs from 1")
    except ResidualTooLarge as e:
        logger.warning("Case rad K = m construction rejected (%s); falling back to search", e.detail)
        path = "search"
        axes = find_geodesic_vectors(s, m, SearchConfig(samples=2000, seed=0))
        if axes.manifold or axes.axes.shape[0] == 0:
            raise DomainExhausted("fallback search found no geodesic vector")
        W = axes.axes[0]
        F_W = float(F_values(m, W[None, :])[0])
        residual = _verify(s, ip, X, W, tol)

    logger.info("existence: rad K = m, path %s, F(W) = %.17g", path, F_W)
    return ExistenceCertificate(case=ExistenceCase.RAD_EQUALS_M, X=X, Y=W, residual=residual,
                                F_value=F_W, case1_path=path, case1_identity=identity)


def _components(split: EigenSplit, ip: InnerProduct, X: np.ndarray):
    x = split.vectors.T @ ip.matrix @ X
    X0 = X - split.vectors @ x
    return X0, x


def _curve(split: EigenSplit, X0: np.ndarray, x: np.ndarray, t: float):
    """y_i(t) and Y(t) = X0 + Σ y_i f_i"""
    lam = split.eigenvalues
    y = x / (1.0 - t * lam)
    return y, X0 + split.vectors @ y


def _M(m: MetricSpec, split: EigenSplit, X0, x, t: float) -> float:
    # Y(t) - X = Σ x_i tλ_i/(1 - tλ_i) f_i keeps M(0) = F(X) - 2 exact
    lam = split.eigenvalues
    Y = m.X + split.vectors @ (x * t * lam / (1.0 - t * lam))
    return float(F_values(m, Y[None, :])[0]) - 2.0


def _scan_fractions(margin: float) -> np.ndarray:
    grid = np.linspace(1.0 / 64.0, 63.0 / 64.0, 63)
    approach = 1.0 - 0.5 ** np.arange(7, 64)
    approach = approach[approach < 1.0 - margin]
    return np.unique(np.concatenate([grid, approach, [1.0 - margin]]))


def _directions(split: EigenSplit, x: np.ndarray) -> List[Dict[str, Any]]:
    """Scan targets in both directions, nearest pole first"""
    lam = split.eigenvalues
    active = np.abs(x) > 1e-14 * max(1.0, _max_abs(x))
    far = 1e3 / float(np.max(np.abs(lam)))
    out = []
    for sign in (1.0, -1.0):
        poles = [1.0 / l for l, a in zip(lam, active) if a and sign * l > 0.0]
        if poles:
            end = min(poles, key=abs)
            out.append({"direction": sign, "end": float(end), "pole": True})
        else:
            out.append({"direction": sign, "end": sign * far, "pole": False})
    out.sort(key=lambda d: (not d["pole"], abs(d["end"]), -d["direction"]))
    return out


def _bisect(f, lo: float, hi: float, f_lo: float, f_hi: float, max_iter: int, tol: float):
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        f_mid = f(mid)
        if not np.isfinite(f_mid):
            raise DomainExhausted(f"M(t) undefined inside the bracket at t = {mid!r}")
        if abs(f_mid) <= tol:
            return mid, lo, hi, f_lo, f_hi, it
        if f_mid < 0.0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    t = lo if abs(f_lo) <= abs(f_hi) else hi
    return t, lo, hi, f_lo, f_hi, it


def _case_general(s: ReductiveSpace, ip: InnerProduct, X: np.ndarray, split: EigenSplit,
                  tol: float) -> ExistenceCertificate:
    m = kropina(ip, X)
    X0, x = _components(split, ip, X)
    M = lambda t: _M(m, split, X0, x, t)
    M0 = M(0.0)
    fractions = _scan_fractions(settings.POLE_MARGIN)

    trace: List[Dict[str, Any]] = []
    found = None
    for target in _directions(split, x):
        t_prev, m_prev = 0.0, M0
        entry = dict(target, evaluations=0, sign_change=None, left_domain=None)
        trace.append(entry)
        for frac in fractions:
            t = float(frac * target["end"])
            value = M(t)
            entry["evaluations"] += 1
            if not np.isfinite(value):
                entry["left_domain"] = t
                break
            if m_prev < 0.0 < value:
                entry["sign_change"] = [t_prev, t]
                found = (t_prev, t, m_prev, value)
                break
            t_prev, m_prev = t, value
        if found:
            break
    if found is None:
        logger.warning("no sign change of M(t) found; scan trace %s", trace)
        raise DomainExhausted("no admissible bracket for M(t) = F(Y(t)) - 2", scan_trace=trace)

    # M(lo) < 0 < M(hi); lo may lie on either side of hi
    lo, hi, f_lo, f_hi = found
    t0, lo, hi, f_lo, f_hi, iterations = _bisect(
        M, lo, hi, f_lo, f_hi, settings.BISECTION_MAX_ITER, settings.BISECTION_TOL)

    y, Y = _curve(split, X0, x, t0)
    F_Y = float(F_values(m, Y[None, :])[0])
    lam = split.eigenvalues
    system = max(abs(F_Y - 2.0), _max_abs((y - x) / lam - t0 * y))
    M_t0 = M(t0)
    if abs(M_t0) > settings.BISECTION_TOL:
        logger.warning("bisection stopped at |M(t0)| = %.3e after %d iterations", abs(M_t0), iterations)
    _check_system(F_Y, system, tol, t0=t0, bracket=[lo, hi], M_t0=M_t0)
    residual = _verify(s, ip, X, Y, tol)
    logger.info("existence: general eigensplit, t0 = %.17g after %d bisections", t0, iterations)
    return ExistenceCertificate(
        case=ExistenceCase.EIGENSPLIT_GENERAL, X=X, Y=Y, residual=residual, F_value=F_Y,
        eigen_data=split, X0=X0, x_components=x, y_components=y, t0=t0,
        bracket=[lo, hi], M_bracket=[f_lo, f_hi], M0=M0, system_residual=system,
        bisection_iterations=iterations, scan_trace=trace)


def kropina_existence(s: ReductiveSpace, ip: InnerProduct, X, tol: Optional[float] = None,
                      K: Optional[KillingData] = None) -> ExistenceCertificate:
    """
    Construct a geodesic vector of the homogeneous Kropina space (s, ⟨,⟩, X) and
    verify it with the Kropina criterion

    Args:
        s: reductive decomposition
        ip: inner product on m
        X: invariant drift vector in m-coordinates
        tol: verification tolerance on the Kropina residual

    Returns:
        ExistenceCertificate recording the case taken and its verification data
    """
    tol = settings.CERTIFICATE_TOL if tol is None else tol
    X = _check_x(s, ip, X)
    split = theta_eigensplit(s, ip, K)
    if split.rank == 0:
        return _case_rad_equals_m(s, ip, X, tol)

    X0, x = _components(split, ip, X)
    if _max_abs(x) <= settings.EIGEN_ZERO_TOL * ip.norm(X):
        n0 = ip.norm(X0)
        y = np.zeros(split.rank)
        y[0] = n0
        Y = X0 + n0 * split.vectors[:, 0]
        m = kropina(ip, X)
        F_Y = float(F_values(m, Y[None, :])[0])
        t0 = 1.0 / float(split.eigenvalues[0])
        _check_system(F_Y, abs(F_Y - 2.0), tol, t0=t0)
        residual = _verify(s, ip, X, Y, tol)
        logger.info("existence: X in V0, F(Y) = %.17g", F_Y)
        return ExistenceCertificate(
            case=ExistenceCase.EIGENSPLIT_X_IN_V0, X=X, Y=Y, residual=residual, F_value=F_Y,
            eigen_data=split, X0=X0, x_components=x, y_components=y, t0=t0,
            system_residual=abs(F_Y - 2.0))
    return _case_general(s, ip, X, split, tol)


def m_curve(s: ReductiveSpace, ip: InnerProduct, X, t_samples: Sequence[float]) -> pd.DataFrame:
    """
    Samples of M(t) = F(Y(t)) - 2 with columns t, M, domain_flag. domain_flag marks
    poles 1 - tλ_i = 0 (x_i != 0) and points where Y(t) leaves ⟨X, y⟩ > 0.
    """
    X = _check_x(s, ip, X)
    split = theta_eigensplit(s, ip)
    if split.rank == 0:
        raise ConstraintViolation("M(t) needs rad K to be a proper subspace of m")
    X0, x = _components(split, ip, X)
    if _max_abs(x) <= settings.EIGEN_ZERO_TOL * ip.norm(X):
        raise ConstraintViolation("M(t) needs X outside ker θ")
    m = kropina(ip, X)
    lam = split.eigenvalues
    active = np.abs(x) > 1e-14 * max(1.0, _max_abs(x))

    rows = []
    for t in t_samples:
        t = float(t)
        at_pole = bool(np.any(active & (np.abs(1.0 - t * lam) <= 1e-12)))
        value = np.nan if at_pole else _M(m, split, X0, x, t)
        flag = at_pole or not np.isfinite(value)
        rows.append({"t": t, "M": float(value) if not flag else np.nan, "domain_flag": flag})
    return pd.DataFrame(rows, columns=["t", "M", "domain_flag"])


@dataclass
class OrthogonalGeodesics:
    axes: np.ndarray
    eigenvalues: np.ndarray
    passed: List[bool]
    gram: np.ndarray
    orthogonal: bool
    transfer: List[TransferReport]
    note: Optional[str] = None

    @property
    def count(self) -> int:
        return int(self.axes.shape[1])

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "axes": self.axes.T.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "passed": self.passed,
            "gram": self.gram.tolist(),
            "mutually_orthogonal": self.orthogonal,
            "transfer": [r.to_dict() for r in self.transfer],
            "note": self.note,
        }


def orthogonal_geodesic_count(result: OrthogonalGeodesics) -> int:
    return result.count


def semisimple_orthogonal_geodesics(s: ReductiveSpace, ip: InnerProduct, m: MetricSpec,
                                    tol: Optional[float] = None) -> OrthogonalGeodesics:
    """
    θ-eigenvectors are Riemannian geodesic vectors on semisimple groups; each one is
    checked under F, after the transfer hypotheses for non-Riemannian metrics.
    """
    tol = settings.GEODESIC_TOL if tol is None else tol
    if not is_semisimple(s.algebra):
        raise ConstraintViolation("g is not semisimple (Killing form degenerate)")
    split = theta_eigensplit(s, ip)
    G = ip.matrix
    basis = np.hstack([split.vectors, split.V0])
    eigenvalues = np.concatenate([split.eigenvalues, np.zeros(split.V0.shape[1])])

    passed, keep, reports = [], [], []
    note = None
    for i in range(basis.shape[1]):
        f = basis[:, i]
        if m.family is not MetricFamily.RIEMANNIAN and ip.dot(m.X, f) < 0.0:
            f = -f
        if m.family is not MetricFamily.RIEMANNIAN:
            report = transfer_check(s, m, s.from_m(f), tol)
            reports.append(report)
            if not report.x_orthogonal:
                note = "hypotheses unsatisfiable for X != 0: [g, g] = g forces X = 0"
        ok = check_geodesic(s, m, s.from_m(f), tol).is_geodesic
        passed.append(ok)
        if ok:
            keep.append(f)
    axes = np.array(keep).T.reshape(s.dim_m, -1)
    gram = axes.T @ G @ axes
    off = gram - np.diag(np.diag(gram))
    orthogonal = _max_abs(off) <= 1e-9
    logger.info("semisimple: %d of %d θ-eigenvectors geodesic", axes.shape[1], basis.shape[1])
    return OrthogonalGeodesics(axes=axes, eigenvalues=eigenvalues, passed=passed, gram=gram,
                               orthogonal=orthogonal, transfer=reports, note=note)
