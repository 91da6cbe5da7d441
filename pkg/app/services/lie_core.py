"""
Finite-dimensional real Lie algebras given by structure constants: brackets,
adjoint matrices, the Killing form and its radical, derived series and reductive
decompositions g = h + m
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import (DegenerateOnH, DimensionMismatch,
                                 NotReductive, NotSubalgebra)
from app.services import linalg

logger = logging.getLogger(__name__)

BracketEntry = Tuple[int, int, int, float]


@dataclass(frozen=True)
class LieAlgebraSpec:
    """
    A Lie algebra by its sparse bracket table. Each entry (i, j, k, c) with i < j
    means [e_i, e_j] contributes c * e_k; [e_j, e_i] is synthesized by antisymmetry.
    """
    dim: int
    structure: Tuple[BracketEntry, ...] = ()
    basis_names: Tuple[str, ...] = ()
    tensor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatch(f"dim must be positive, got {self.dim}")
        names = tuple(self.basis_names) or tuple(f"e{i + 1}" for i in range(self.dim))
        if len(names) != self.dim:
            raise DimensionMismatch(
                f"{len(names)} basis names given for dimension {self.dim}")
        object.__setattr__(self, "basis_names", names)

        C = np.zeros((self.dim, self.dim, self.dim))
        for entry in self.structure:
            i, j, k, c = entry
            if not (0 <= i < j < self.dim and 0 <= k < self.dim):
                raise DimensionMismatch(
                    f"bracket entry {entry} must satisfy 0 <= i < j < {self.dim}")
            C[i, j, k] += float(c)
            C[j, i, k] -= float(c)
        C.setflags(write=False)
        object.__setattr__(self, "tensor", C)

    @classmethod
    def from_tensor(cls, C: np.ndarray, basis_names: Sequence[str] = (),
                    drop_below: float = 0.0) -> "LieAlgebraSpec":
        """Build from a dense antisymmetric tensor C[i, j, k]"""
        n = C.shape[0]
        entries = []
        for i, j in itertools.combinations(range(n), 2):
            for k in range(n):
                if abs(C[i, j, k]) > drop_below:
                    entries.append((i, j, k, float(C[i, j, k])))
        return cls(dim=n, structure=tuple(entries), basis_names=tuple(basis_names))

    def change_basis(self, P: np.ndarray) -> "LieAlgebraSpec":
        """
        Structure constants in the basis b_i = sum_a P[a, i] e_a (columns of P)
        """
        P = np.asarray(P, dtype=float)
        if P.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"basis change must be {self.dim}x{self.dim}")
        Pinv = np.linalg.inv(P)
        C = np.einsum("ai,bj,abc,kc->ijk", P, P, self.tensor, Pinv)
        return LieAlgebraSpec.from_tensor(C)

    def ad(self, u: np.ndarray) -> np.ndarray:
        """Matrix of ad u, so that ad(u) @ v == bracket(u, v)"""
        u = _check_vector(self, u)
        return np.einsum("i,ijk->kj", u, self.tensor)


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    max_violation: float
    worst_triple: Optional[Tuple[int, int, int]]
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_jacobi_violation": self.max_violation,
            "worst_triple": list(self.worst_triple) if self.worst_triple else None,
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True, eq=False)
class KillingData:
    """
    Killing form data. K and the radical are always present; K_m, theta and the
    eigenpairs are filled once a reductive space and an inner product are known.
    """
    K: np.ndarray
    radical_basis: np.ndarray
    K_m: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    eigenvalues: Optional[np.ndarray] = None
    eigenvectors: Optional[np.ndarray] = None

    @property
    def eigenpairs(self) -> List[Tuple[float, np.ndarray]]:
        if self.eigenvalues is None:
            return []
        return [(float(lam), self.eigenvectors[:, i])
                for i, lam in enumerate(self.eigenvalues)]


@dataclass(frozen=True, eq=False)
class ReductiveSpace:
    """
    Decomposition g = h + m. Bases are stored as rows in g-coordinates; vectors of m
    are handled in m-coordinates (coefficients on m_basis).
    """
    algebra: LieAlgebraSpec
    h_basis: np.ndarray
    m_basis: np.ndarray
    P_h: np.ndarray = field(init=False, repr=False, compare=False)
    P_m: np.ndarray = field(init=False, repr=False, compare=False)
    _m_coords: np.ndarray = field(init=False, repr=False, compare=False)
    _bracket_maps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.algebra.dim
        H = np.asarray(self.h_basis, dtype=float).reshape(-1, n)
        M = np.asarray(self.m_basis, dtype=float).reshape(-1, n)
        object.__setattr__(self, "h_basis", H)
        object.__setattr__(self, "m_basis", M)
        if H.shape[0] + M.shape[0] != n:
            raise NotReductive(
                f"dim h + dim m = {H.shape[0] + M.shape[0]} but dim g = {n}")
        B = np.vstack([H, M]).T
        if linalg.matrix_rank(B, settings.LIE_TOL) < n:
            raise NotReductive("h and m bases are not linearly independent")
        coords = np.linalg.inv(B)
        k = H.shape[0]
        m_coords = coords[k:, :]
        object.__setattr__(self, "_m_coords", m_coords)
        object.__setattr__(self, "P_m", M.T @ m_coords)
        object.__setattr__(self, "P_h", H.T @ coords[:k, :])

        # L[j] maps m-coordinates y to m-coordinates of [Y, z_j]_m, Y = M^T y
        C = self.algebra.tensor
        L = np.einsum("ai,ibc,jb,kc->jka", M, C, M, m_coords)
        object.__setattr__(self, "_bracket_maps", L)

    @property
    def dim_h(self) -> int:
        return self.h_basis.shape[0]

    @property
    def dim_m(self) -> int:
        return self.m_basis.shape[0]

    def m_coords(self, v: np.ndarray) -> np.ndarray:
        """m-coordinates of the m-projection of a g-vector"""
        return self._m_coords @ _check_vector(self.algebra, v)

    def from_m(self, y: np.ndarray) -> np.ndarray:
        """g-coordinates of the m-vector with m-coordinates y"""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim_m,):
            raise DimensionMismatch(
                f"m-vector must have length {self.dim_m}, got {y.shape}")
        return self.m_basis.T @ y

    @property
    def bracket_maps(self) -> np.ndarray:
        """Array L of shape (p, p, p): L[j] @ y = m-coords of [Y, z_j]_m for Y in m"""
        return self._bracket_maps

    def bracket_m(self, Y: np.ndarray, j: int) -> np.ndarray:
        """m-coordinates of [Y, z_j]_m for a g-vector Y"""
        return self.m_coords(bracket(self.algebra, Y, self.m_basis[j]))


def _check_vector(a: LieAlgebraSpec, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (a.dim,):
        raise DimensionMismatch(
            f"vector must have length {a.dim}, got shape {u.shape}")
    return u


def bracket(a: LieAlgebraSpec, u, v) -> np.ndarray:
    """Bilinear extension of the bracket table: sum_ij u^i v^j [e_i, e_j]"""
    u = _check_vector(a, u)
    v = _check_vector(a, v)
    return np.einsum("i,j,ijk->k", u, v, a.tensor)


def validate(a: LieAlgebraSpec, tol: Optional[float] = None) -> ValidationReport:
    """Jacobi identity check over all basis triples"""
    tol = settings.LIE_TOL if tol is None else tol
    C = a.tensor
    # J[i,j,k,:] = [e_i,[e_j,e_k]] + [e_j,[e_k,e_i]] + [e_k,[e_i,e_j]]
    t1 = np.einsum("jkm,iml->ijkl", C, C)
    J = t1 + np.transpose(t1, (1, 2, 0, 3)) + np.transpose(t1, (2, 0, 1, 3))
    norms = np.max(np.abs(J), axis=3) if a.dim else np.zeros((0, 0, 0))
    worst = float(norms.max()) if norms.size else 0.0
    triple = None
    if worst > 0.0:
        triple = tuple(int(x) for x in np.unravel_index(np.argmax(norms), norms.shape))
    passed = worst <= tol
    if not passed:
        logger.info("Jacobi identity fails: violation %.3e at %s", worst, triple)
    return ValidationReport(passed=passed, max_violation=worst,
                            worst_triple=triple, tolerance=tol)


def killing_form(a: LieAlgebraSpec, tol: Optional[float] = None) -> KillingData:
    """K(u, v) = trace(ad u . ad v) and its radical"""
    C = a.tensor
    # ad(e_i)[k, j] = C[i, j, k]
    K = np.einsum("ijk,lkj->il", C, C)
    K = 0.5 * (K + K.T)
    rad = linalg.null_space(K, tol)
    return KillingData(K=K, radical_basis=rad)


def derived_series(a: LieAlgebraSpec, tol: Optional[float] = None) -> List[np.ndarray]:
    """
    Chain g^(0) ⊇ g^(1) ⊇ ... with g^(i+1) = [g^(i), g^(i)], each term an
    orthonormal basis in the columns. Stops when two consecutive ranks agree.
    """
    tol = settings.LIE_TOL if tol is None else tol
    current = np.eye(a.dim)
    series = [current]
    while current.shape[1] > 0:
        nxt = _bracket_span(a, current, current, tol)
        series.append(nxt)
        if nxt.shape[1] == current.shape[1]:
            break
        current = nxt
    return series


def lower_central_series(a: LieAlgebraSpec, tol: Optional[float] = None) -> List[np.ndarray]:
    """g_0 = g, g_{i+1} = [g, g_i]"""
    tol = settings.LIE_TOL if tol is None else tol
    full = np.eye(a.dim)
    current = full
    series = [current]
    while current.shape[1] > 0:
        nxt = _bracket_span(a, full, current, tol)
        series.append(nxt)
        if nxt.shape[1] == current.shape[1]:
            break
        current = nxt
    return series


def is_solvable(a: LieAlgebraSpec) -> bool:
    return derived_series(a)[-1].shape[1] == 0


def is_nilpotent(a: LieAlgebraSpec) -> bool:
    return lower_central_series(a)[-1].shape[1] == 0


def _bracket_span(a: LieAlgebraSpec, U: np.ndarray, V: np.ndarray, tol: float) -> np.ndarray:
    if U.shape[1] == 0 or V.shape[1] == 0:
        return np.zeros((a.dim, 0))
    vectors = np.einsum("iu,jv,ijk->kuv", U, V, a.tensor).reshape(a.dim, -1)
    return linalg.column_span(vectors, tol)


def derived_algebra_m(s: ReductiveSpace, tol: Optional[float] = None) -> np.ndarray:
    """m-coordinates spanning [g, g]_m, as columns"""
    a = s.algebra
    vectors = np.einsum("ijk->kij", a.tensor).reshape(a.dim, -1)
    projected = s._m_coords @ vectors
    return linalg.column_span(projected, tol)


def is_semisimple(a: LieAlgebraSpec, tol: Optional[float] = None) -> bool:
    """Cartan criterion: smallest singular value of K above tol * ||K||"""
    tol = settings.RANK_TOL if tol is None else tol
    K = killing_form(a).K
    norm = float(np.linalg.norm(K, 2))
    if norm == 0.0:
        return False
    return linalg.smallest_singular_value(K) > tol * norm


def reductive_split(a: LieAlgebraSpec, h_basis, K: Optional[KillingData] = None,
                    tol: Optional[float] = None) -> ReductiveSpace:
    """
    m = K-orthogonal complement of h. Requires K|h nondegenerate and h a subalgebra.
    """
    tol = settings.RANK_TOL if tol is None else tol
    K = killing_form(a) if K is None else K
    H = np.asarray(h_basis, dtype=float).reshape(-1, a.dim)
    if H.shape[0] == 0:
        return ReductiveSpace(algebra=a, h_basis=H, m_basis=np.eye(a.dim))

    if linalg.matrix_rank(H.T, settings.LIE_TOL) < H.shape[0]:
        raise NotSubalgebra("h basis vectors are linearly dependent")
    _check_subalgebra(a, H)

    K_h = H @ K.K @ H.T
    sigma = linalg.smallest_singular_value(K_h)
    if sigma <= tol:
        raise DegenerateOnH(
            f"Killing form restricted to h is degenerate (smallest singular value "
            f"{sigma:.3e}); the K-orthogonal decomposition does not apply",
            smallest_singular_value=sigma)

    M = linalg.null_space(H @ K.K, tol).T
    space = ReductiveSpace(algebra=a, h_basis=H, m_basis=M)
    logger.debug("reductive split: dim h=%d, dim m=%d", space.dim_h, space.dim_m)
    return space


def reductive_space(a: LieAlgebraSpec, h_basis, m_basis,
                    tol: Optional[float] = None) -> ReductiveSpace:
    """Explicit decomposition; checks [h, h] ⊆ h and [h, m] ⊆ m"""
    tol = settings.LIE_TOL if tol is None else tol
    H = np.asarray(h_basis, dtype=float).reshape(-1, a.dim)
    M = np.asarray(m_basis, dtype=float).reshape(-1, a.dim)
    space = ReductiveSpace(algebra=a, h_basis=H, m_basis=M)
    if H.shape[0]:
        _check_subalgebra(a, H, tol)
        for h, m in itertools.product(H, M):
            leak = space.P_h @ bracket(a, h, m)
            if np.max(np.abs(leak)) > tol:
                raise NotReductive("[h, m] is not contained in m",
                                   violation=float(np.max(np.abs(leak))))
    return space


def _check_subalgebra(a: LieAlgebraSpec, H: np.ndarray, tol: Optional[float] = None):
    tol = settings.LIE_TOL if tol is None else tol
    span = linalg.column_span(H.T)
    projector = span @ span.T
    for u, v in itertools.combinations(H, 2):
        w = bracket(a, u, v)
        leak = w - projector @ w
        if np.max(np.abs(leak)) > tol:
            raise NotSubalgebra("[h, h] is not contained in h",
                                violation=float(np.max(np.abs(leak))))


def check_invariant_vector(s: ReductiveSpace, X, tol: Optional[float] = None) -> bool:
    """[h, X] = 0 for every basis vector of h (X given in m-coordinates)"""
    tol = settings.LIE_TOL if tol is None else tol
    Xg = s.from_m(np.asarray(X, dtype=float))
    for h in s.h_basis:
        if np.max(np.abs(bracket(s.algebra, h, Xg))) > tol:
            return False
    return True


# Catalogue of small algebras

def abelian(n: int) -> LieAlgebraSpec:
    return LieAlgebraSpec(dim=n)


def heisenberg() -> LieAlgebraSpec:
    return LieAlgebraSpec(dim=3, structure=((0, 1, 2, 1.0),))


def so3() -> LieAlgebraSpec:
    return LieAlgebraSpec(dim=3, structure=(
        (0, 1, 2, 1.0), (1, 2, 0, 1.0), (0, 2, 1, -1.0)))


def sl2() -> LieAlgebraSpec:
    """Basis (h, e, f): [h, e] = 2e, [h, f] = -2f, [e, f] = h"""
    return LieAlgebraSpec(dim=3, structure=(
        (0, 1, 1, 2.0), (0, 2, 2, -2.0), (1, 2, 0, 1.0)),
        basis_names=("h", "e", "f"))


def u2() -> LieAlgebraSpec:
    """so(3) ⊕ R"""
    return LieAlgebraSpec(dim=4, structure=(
        (0, 1, 2, 1.0), (1, 2, 0, 1.0), (0, 2, 1, -1.0)))


def filiform4() -> LieAlgebraSpec:
    """[e1, e2] = e3, [e1, e3] = e4"""
    return LieAlgebraSpec(dim=4, structure=((0, 1, 2, 1.0), (0, 2, 3, 1.0)))


def solvable2d() -> LieAlgebraSpec:
    """[e1, e2] = e2"""
    return LieAlgebraSpec(dim=2, structure=((0, 1, 1, 1.0),))


def nonunimodular(alpha: float, beta: float, gamma: float, delta: float) -> LieAlgebraSpec:
    """[e1, e2] = alpha e2 + beta e3, [e1, e3] = gamma e2 + delta e3, [e2, e3] = 0"""
    entries: List[BracketEntry] = []
    for k, c in ((1, alpha), (2, beta)):
        if c:
            entries.append((0, 1, k, float(c)))
    for k, c in ((1, gamma), (2, delta)):
        if c:
            entries.append((0, 2, k, float(c)))
    return LieAlgebraSpec(dim=3, structure=tuple(entries))


def lie_group_space(a: LieAlgebraSpec) -> ReductiveSpace:
    """h = 0, m = g with the standard basis"""
    return ReductiveSpace(algebra=a, h_basis=np.zeros((0, a.dim)), m_basis=np.eye(a.dim))
