"""
Invariant (α,β)-metrics on m: Riemannian, Randers, Kropina and general φ.
Evaluation, exact gradients, fundamental tensors, Zermelo navigation data and
Levi-Civita / Ricci data of left-invariant Riemannian metrics.

All vectors here are in m-coordinates.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.core.config import settings
from app.core.exceptions import (DimensionMismatch, InvalidInnerProduct,
                                 InvalidMetric, NotReductive, NotUnitVector,
                                 NumericalFailure, OutsideDomain, ZeroVector)
from app.services import linalg
from app.services.lie_core import ReductiveSpace, bracket
from app.services.phi_expr import (KROPINA_PHI, RANDERS_PHI, RIEMANNIAN_PHI,
                                   PhiExpr, phi_derivatives)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class InnerProduct:
    """Symmetric positive-definite matrix on m in the m_basis"""
    matrix: np.ndarray
    min_eigenvalue: float = field(init=False)

    def __post_init__(self):
        G = np.array(self.matrix, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] == 0:
            raise InvalidInnerProduct(f"inner product must be a square matrix, got {G.shape}")
        if np.max(np.abs(G - G.T)) > 1e-12 * max(1.0, np.max(np.abs(G))):
            raise InvalidInnerProduct("inner product matrix is not symmetric")
        G = 0.5 * (G + G.T)
        w, _ = linalg.jacobi_eigh(G)
        if w[0] <= 0.0:
            raise InvalidInnerProduct(
                f"inner product is not positive definite (smallest eigenvalue {w[0]:.3e})",
                min_eigenvalue=float(w[0]))
        G.setflags(write=False)
        object.__setattr__(self, "matrix", G)
        object.__setattr__(self, "min_eigenvalue", float(w[0]))

    @classmethod
    def identity(cls, p: int) -> "InnerProduct":
        return cls(np.eye(p))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dot(self, u, v) -> float:
        return float(np.asarray(u, dtype=float) @ self.matrix @ np.asarray(v, dtype=float))

    def norm(self, u) -> float:
        return float(np.sqrt(max(self.dot(u, u), 0.0)))


class MetricFamily(str, enum.Enum):
    RIEMANNIAN = "riemannian"
    RANDERS = "randers"
    KROPINA = "kropina"
    ALPHABETA = "alphabeta"


_BUILTIN_PHI = {
    MetricFamily.RIEMANNIAN: RIEMANNIAN_PHI,
    MetricFamily.RANDERS: RANDERS_PHI,
    MetricFamily.KROPINA: KROPINA_PHI,
}


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """
    F = α φ(β/α) with α² = ⟨y, y⟩ and β = ⟨X, y⟩. X is the drift vector in
    m-coordinates; phi is only given for the general (α,β) family.
    """
    inner: InnerProduct
    family: MetricFamily
    X: Optional[np.ndarray] = None
    phi: Optional[PhiExpr] = None
    dphi: PhiExpr = field(init=False, repr=False)
    ddphi: PhiExpr = field(init=False, repr=False)

    def __post_init__(self):
        family = MetricFamily(self.family)
        object.__setattr__(self, "family", family)
        p = self.inner.dim
        if family is MetricFamily.RIEMANNIAN:
            X = np.zeros(p) if self.X is None else np.asarray(self.X, dtype=float)
        else:
            if self.X is None:
                raise InvalidMetric(f"{family.value} metric needs a drift vector X")
            X = np.asarray(self.X, dtype=float)
            if X.shape != (p,):
                raise DimensionMismatch(f"X must have length {p}, got {X.shape}")
            if self.inner.norm(X) <= 1e-12:
                raise InvalidMetric("X must be nonzero")
        if family is MetricFamily.RANDERS and self.inner.norm(X) >= 1.0:
            raise InvalidMetric(
                f"Randers drift must satisfy ||X|| < 1, got {self.inner.norm(X):.6g}")
        if family is MetricFamily.ALPHABETA:
            if self.phi is None:
                raise InvalidMetric("alphabeta metric needs a phi expression")
            phi = self.phi
        else:
            phi = _BUILTIN_PHI[family]
        X = X.copy()
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "phi", phi)
        d1, d2 = phi_derivatives(phi)
        object.__setattr__(self, "dphi", d1)
        object.__setattr__(self, "ddphi", d2)

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def b(self) -> float:
        """‖β‖_α = ‖X‖"""
        return self.inner.norm(self.X)

    def in_domain(self, Y) -> bool:
        try:
            F_eval(self, Y)
        except OutsideDomain:
            return False
        return True


def riemannian(inner: InnerProduct) -> MetricSpec:
    return MetricSpec(inner=inner, family=MetricFamily.RIEMANNIAN)


def randers(inner: InnerProduct, X) -> MetricSpec:
    return MetricSpec(inner=inner, family=MetricFamily.RANDERS, X=np.asarray(X, dtype=float))


def kropina(inner: InnerProduct, X) -> MetricSpec:
    return MetricSpec(inner=inner, family=MetricFamily.KROPINA, X=np.asarray(X, dtype=float))


def alpha_beta(inner: InnerProduct, X, phi: PhiExpr) -> MetricSpec:
    return MetricSpec(inner=inner, family=MetricFamily.ALPHABETA,
                      X=np.asarray(X, dtype=float), phi=phi)


def _vector(m: MetricSpec, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (m.dim,):
        raise DimensionMismatch(f"vector must have length {m.dim}, got {Y.shape}")
    return Y


# Batched evaluation (rows of Y), NaN outside the domain

def F_values(m: MetricSpec, Y: np.ndarray) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    G = m.inner.matrix
    a2 = np.einsum("si,ij,sj->s", Y, G, Y)
    beta = Y @ (G @ m.X)
    with np.errstate(all="ignore"):
        alpha = np.sqrt(a2)
        if m.family is MetricFamily.RIEMANNIAN:
            F = alpha
        elif m.family is MetricFamily.RANDERS:
            F = alpha + beta
        elif m.family is MetricFamily.KROPINA:
            F = np.where(beta > 0.0, a2 / np.where(beta > 0.0, beta, 1.0), np.nan)
        else:
            s = np.where(alpha > 0.0, beta / np.where(alpha > 0.0, alpha, 1.0), np.nan)
            F = alpha * m.phi.values(s)
    F = np.where(np.isfinite(F) & (F > 0.0) & (a2 > 0.0), F, np.nan)
    return F


def gradient_values(m: MetricSpec, Y: np.ndarray) -> np.ndarray:
    """
    Exact gradient of F: (φ - sφ′) G y / α + φ′ G X, NaN rows outside the domain
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    G = m.inner.matrix
    GY = Y @ G
    GX = G @ m.X
    a2 = np.einsum("si,si->s", Y, GY)
    beta = Y @ GX
    F = F_values(m, Y)
    with np.errstate(all="ignore"):
        alpha = np.sqrt(a2)
        if m.family is MetricFamily.KROPINA:
            grad = 2.0 * GY / beta[:, None] - (a2 / beta ** 2)[:, None] * GX[None, :]
        else:
            s = beta / alpha
            phi = m.phi.values(s)
            dphi = m.dphi.values(s)
            grad = ((phi - s * dphi) / alpha)[:, None] * GY + dphi[:, None] * GX[None, :]
    bad = ~np.isfinite(F) | ~np.all(np.isfinite(grad), axis=1)
    grad[bad] = np.nan
    return grad


def F_eval(m: MetricSpec, Y) -> float:
    """
    F(Y) > 0. Raises ZeroVector for Y = 0 and OutsideDomain when Y leaves the
    Kropina half-space ⟨X, Y⟩ > 0 or φ is undefined at β/α.
    """
    Y = _vector(m, Y)
    if not np.any(Y):
        raise ZeroVector("F is not defined at the zero vector")
    if m.family is MetricFamily.KROPINA:
        beta = m.inner.dot(m.X, Y)
        if not beta > 0.0:
            raise OutsideDomain(
                f"Kropina metric is defined only where <X, Y> > 0 (got {beta:.6g})",
                beta=beta)
    F = float(F_values(m, Y[None, :])[0])
    if not np.isfinite(F):
        raise OutsideDomain(f"F is undefined or nonpositive at Y = {Y.tolist()}")
    return F


def F_gradient(m: MetricSpec, Y) -> np.ndarray:
    Y = _vector(m, Y)
    F_eval(m, Y)
    return gradient_values(m, Y[None, :])[0]


def fundamental_tensor(m: MetricSpec, Y, step: Optional[float] = None) -> np.ndarray:
    """
    g_Y = ½ Hess(F²) at Y. The Riemannian family returns the inner-product matrix.
    Otherwise the Hessian is the central-difference Jacobian of the exact gradient
    F ∇F with step step * ‖Y‖ and one Richardson extrapolation level.
    """
    Y = _vector(m, Y)
    F_eval(m, Y)
    if m.family is MetricFamily.RIEMANNIAN:
        return m.inner.matrix.copy()

    step = settings.HESSIAN_STEP if step is None else step
    p = m.dim
    h = step * float(np.linalg.norm(Y))
    H = _half_f2_jacobian(m, Y, h)
    H2 = _half_f2_jacobian(m, Y, h / 2.0)
    H = (4.0 * H2 - H) / 3.0

    scale = max(float(np.max(np.abs(H))), 1e-300)
    asym = float(np.max(np.abs(H - H.T))) / scale
    if asym > 1e-4:
        raise NumericalFailure(
            f"fundamental tensor Hessian is not symmetric (relative deviation {asym:.3e})",
            asymmetry=asym)
    return 0.5 * (H + H.T)


def _half_f2_jacobian(m: MetricSpec, Y: np.ndarray, h: float) -> np.ndarray:
    p = m.dim
    shifts = np.vstack([Y + h * np.eye(p), Y - h * np.eye(p)])
    F = F_values(m, shifts)
    grad = gradient_values(m, shifts)
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(grad))):
        raise OutsideDomain("fundamental tensor stencil leaves the metric domain",
                            step=h)
    half_grad = F[:, None] * grad
    # column j = d(F ∇F)/dy_j
    return ((half_grad[:p] - half_grad[p:]) / (2.0 * h)).T


def first_variation(m: MetricSpec, Y, u) -> float:
    """g_Y(u, Y) = F(Y) dF_Y(u), exact by Euler's theorem"""
    Y = _vector(m, Y)
    return float(F_eval(m, Y) * (F_gradient(m, Y) @ np.asarray(u, dtype=float)))


def kropina_directional_identity(m: MetricSpec, Y, u) -> float:
    """g_Y(u, Y) = F³(Y)/⟨Y, Y⟩ · ⟨u, 2Y/F(Y) - X⟩ for a Kropina metric"""
    if m.family is not MetricFamily.KROPINA:
        raise InvalidMetric("the closed form applies to Kropina metrics only")
    Y = _vector(m, Y)
    F = F_eval(m, Y)
    ip = m.inner
    return F ** 3 / ip.dot(Y, Y) * ip.dot(u, 2.0 * Y / F - m.X)


# Zermelo navigation data

@dataclass(frozen=True, eq=False)
class NavigationData:
    h: InnerProduct
    W: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.shape != (self.h.dim,):
            raise DimensionMismatch(f"W must have length {self.h.dim}, got {W.shape}")
        object.__setattr__(self, "W", W)


def kropina_from_navigation(nav: NavigationData, tol: float = 1e-9) -> MetricSpec:
    """
    Kropina metric solving Zermelo's problem for (h, W) with ‖W‖_h = 1:
    F(y) = h(y, y) / (2 h(W, y)), i.e. inner = h and X = 2W
    """
    norm = nav.h.norm(nav.W)
    if abs(norm - 1.0) > tol:
        raise NotUnitVector(f"navigation vector must have unit h-norm, got {norm:.12g}",
                            norm=norm)
    return kropina(nav.h, 2.0 * nav.W)


def navigation_from_kropina(m: MetricSpec) -> NavigationData:
    """Inverse correspondence: h = 4⟨,⟩/⟨X, X⟩, W = X/2"""
    if m.family is not MetricFamily.KROPINA:
        raise InvalidMetric("navigation data is defined for Kropina metrics only")
    xx = m.inner.dot(m.X, m.X)
    return NavigationData(h=InnerProduct(4.0 * m.inner.matrix / xx), W=0.5 * m.X)


def zermelo_defect(nav: NavigationData, m: MetricSpec, y) -> float:
    """h(y/F - W, y/F - W) - 1"""
    y = np.asarray(y, dtype=float)
    v = y / F_eval(m, y) - nav.W
    return nav.h.dot(v, v) - 1.0


# Levi-Civita and Ricci data for left-invariant metrics

def orthonormal_structure(s: ReductiveSpace, ip: InnerProduct) -> np.ndarray:
    """Structure constants c[a, b, c] of g in an ⟨,⟩-orthonormal frame (h = 0)"""
    if s.dim_h != 0:
        raise NotReductive("Levi-Civita data is computed for Lie groups (h = 0) only")
    L = linalg.spd_whitener(ip.matrix)
    E = np.linalg.inv(L).T  # columns: orthonormal frame in m-coordinates
    Einv = L.T
    frame = [s.from_m(E[:, a]) for a in range(s.dim_m)]
    p = s.dim_m
    c = np.zeros((p, p, p))
    for a in range(p):
        for b in range(a + 1, p):
            coeffs = Einv @ s.m_coords(bracket(s.algebra, frame[a], frame[b]))
            c[a, b] = coeffs
            c[b, a] = -coeffs
    return c


def ricci_tensor(s: ReductiveSpace, ip: InnerProduct) -> np.ndarray:
    """Ricci form in an orthonormal frame, assembled from Koszul connection coefficients"""
    c = orthonormal_structure(s, ip)
    # Gamma[i, j, k] = ⟨∇_{e_i} e_j, e_k⟩
    Gamma = 0.5 * (c - np.transpose(c, (2, 0, 1)) + np.transpose(c, (1, 2, 0)))
    N = np.transpose(Gamma, (0, 2, 1))  # N[i] @ v = ∇_{e_i} v
    p = c.shape[0]
    ric = np.zeros((p, p))
    for i in range(p):
        for a in range(p):
            R = N[i] @ N[a] - N[a] @ N[i] - np.einsum("k,kxy->xy", c[i, a], N)
            ric[a] += R[i]
    return 0.5 * (ric + ric.T)


def levi_civita_ricci(s: ReductiveSpace, ip: InnerProduct) -> np.ndarray:
    """Sorted Ricci eigenvalues of the left-invariant metric ⟨,⟩"""
    w, _ = linalg.jacobi_eigh(ricci_tensor(s, ip))
    return np.sort(w)
