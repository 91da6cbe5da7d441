"""
Random instance builders and tolerance helpers shared by the test modules
"""
import json
from pathlib import Path

import numpy as np

from app.services import lie_core
from app.services.metric_core import InnerProduct

FIXTURES = Path(__file__).parent / "fixtures"

CATALOGUE = {
    "heisenberg": lie_core.heisenberg,
    "so3": lie_core.so3,
    "sl2": lie_core.sl2,
    "u2": lie_core.u2,
    "filiform4": lie_core.filiform4,
    "solvable2d": lie_core.solvable2d,
    "nonunimodular": lambda: lie_core.nonunimodular(2.0, 2.0, 1.0, -1.0),
    "abelian5": lambda: lie_core.abelian(5),
}

# algebras whose derived algebra is a proper subspace, so Douglas drifts exist
PROPER_DERIVED = ("heisenberg", "filiform4", "solvable2d", "nonunimodular")


def random_basis_change(rng: np.random.Generator, n: int) -> np.ndarray:
    while True:
        P = rng.normal(size=(n, n))
        if np.linalg.cond(P) < 30.0:
            return P


def random_algebra(rng: np.random.Generator, name: str = None) -> lie_core.LieAlgebraSpec:
    name = name or str(rng.choice(sorted(CATALOGUE)))
    algebra = CATALOGUE[name]()
    return algebra.change_basis(random_basis_change(rng, algebra.dim))


def random_spd(rng: np.random.Generator, p: int, floor: float = 0.5) -> InnerProduct:
    A = rng.normal(size=(p, p))
    S = A @ A.T / p + floor * np.eye(p)
    return InnerProduct(0.5 * (S + S.T))


def random_group_instance(rng: np.random.Generator, name: str = None):
    """(ReductiveSpace with h = 0, InnerProduct) on a randomly rotated catalogue algebra"""
    algebra = random_algebra(rng, name)
    return lie_core.lie_group_space(algebra), random_spd(rng, algebra.dim)


def random_admissible(rng: np.random.Generator, ip: InnerProduct, X: np.ndarray,
                      min_cos: float = 0.2) -> np.ndarray:
    """Random y with ⟨X, y⟩ >= min_cos |X| |y|"""
    while True:
        y = rng.normal(size=ip.dim)
        if ip.dot(X, y) < 0.0:
            y = -y
        if ip.dot(X, y) >= min_cos * ip.norm(X) * ip.norm(y):
            return y


def random_drift(rng: np.random.Generator, ip: InnerProduct, norm: float) -> np.ndarray:
    X = rng.normal(size=ip.dim)
    return norm * X / ip.norm(X)


def all_close(a, b, t_rel: float, t_abs: float = 0.0) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    return bool(np.all(np.abs(a - b) <= t_abs + t_rel * scale))


def write_instance(path: Path, doc: dict) -> Path:
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return path
