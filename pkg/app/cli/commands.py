"""
Command handlers. Each returns (results, exit_code); errors propagate as HomGeoError.
"""
import io
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.cli.instance import Instance, load_instance
from app.core.config import settings
from app.core.exceptions import (EXIT_OK, EXIT_VALIDATION, ConstraintViolation,
                                 DimensionMismatch)
from app.services.classify3d import NonUnimodularParams, build, enumerate_and_verify
from app.services.existence import (ExistenceCase, kropina_existence, m_curve,
                                    theta_eigensplit)
from app.services.geodesic_solver import (SearchConfig, check_geodesic, douglas_check,
                                          find_geodesic_vectors, naturally_reductive_check)
from app.services.lie_core import (check_invariant_vector, is_nilpotent, is_semisimple,
                                   is_solvable, validate)
from app.services.metric_core import MetricFamily, randers, riemannian, zermelo_defect
from app.services.phi_expr import regularity_check

logger = logging.getLogger(__name__)

Result = Tuple[Dict[str, Any], int]


def write_csv(frame: pd.DataFrame, path: Optional[Path] = None) -> str:
    """header t,M,domain_flag; '.' decimal separator; LF line endings"""
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator="\n",
                 float_format=f"%.{settings.FLOAT_DIGITS}g", na_rep="NaN")
    text = buffer.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def cmd_validate(path: Path) -> Result:
    inst = load_instance(path, strict=False)
    report = validate(inst.algebra)
    s, m = inst.space, inst.metric
    results: Dict[str, Any] = {
        "algebra": dict(report.to_dict(), dim=inst.algebra.dim,
                        solvable=is_solvable(inst.algebra),
                        nilpotent=is_nilpotent(inst.algebra),
                        semisimple=is_semisimple(inst.algebra)),
        "reductive": {"dim_h": s.dim_h, "dim_m": s.dim_m,
                      "naturally_reductive": naturally_reductive_check(s, inst.inner)},
        "metric": {"family": m.family.value, "X": m.X.tolist(),
                   "inner_min_eigenvalue": inst.inner.min_eigenvalue},
    }
    ok = report.passed
    if m.family is not MetricFamily.RIEMANNIAN:
        invariant = check_invariant_vector(s, m.X)
        results["metric"]["X_invariant"] = invariant
        results["metric"]["douglas"] = douglas_check(s, m.inner, m.X)
        results["metric"]["b"] = m.b
        ok = ok and invariant
    if m.family is MetricFamily.ALPHABETA:
        results["metric"]["phi"] = m.phi.text
        results["metric"]["regularity"] = regularity_check(
            m.phi, m.b, settings.REGULARITY_GRID).to_dict()
    elif m.family is MetricFamily.RANDERS:
        results["metric"]["regularity"] = {"regular": True}
    elif m.family is MetricFamily.KROPINA:
        results["metric"]["regularity"] = {"regular": False, "reason": "phi(s) = 1/s is singular"}
    if inst.navigation is not None:
        results["navigation"] = {"W": inst.navigation.W.tolist(),
                                 "W_norm": inst.navigation.h.norm(inst.navigation.W),
                                 "zermelo_defect_at_W": zermelo_defect(inst.navigation, m,
                                                                       inst.navigation.W)}
    results["passed"] = ok
    if not ok:
        logger.info("validation failed for %s", path)
    return results, EXIT_OK if ok else EXIT_VALIDATION


def cmd_check(path: Path, Y: Sequence[float], tol: Optional[float] = None) -> Result:
    inst = load_instance(path)
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (inst.algebra.dim,):
        raise DimensionMismatch(f"--y must have {inst.algebra.dim} entries, got {Y.size}")
    report = check_geodesic(inst.space, inst.metric, Y, tol)
    return {"report": report.to_dict()}, EXIT_OK


def _search_config(samples: Optional[int], seed: Optional[int], tol: Optional[float],
                   workers: Optional[int] = None) -> SearchConfig:
    cfg = SearchConfig(workers=workers)
    if samples is not None:
        cfg.samples = samples
    if seed is not None:
        cfg.seed = seed
    if tol is not None:
        cfg.tol = tol
    return cfg


def cmd_find(path: Path, samples: Optional[int] = None, seed: Optional[int] = None,
             tol: Optional[float] = None, workers: Optional[int] = None) -> Result:
    inst = load_instance(path)
    axes = find_geodesic_vectors(inst.space, inst.metric,
                                 _search_config(samples, seed, tol, workers))
    return {"axes": axes.to_dict()}, EXIT_OK


def _curve_grid(inst: Instance, points: int = 201) -> np.ndarray:
    split = theta_eigensplit(inst.space, inst.inner)
    if split.rank == 0:
        raise ConstraintViolation("M(t) needs rad K to be a proper subspace of m")
    half = (points - 1) // 2
    T = (1.0 - settings.POLE_MARGIN) / float(np.max(np.abs(split.eigenvalues)))
    return T * np.arange(-half, half + 1) / half


def cmd_exist(path: Path, csv_path: Optional[Path] = None, tol: Optional[float] = None) -> Result:
    inst = load_instance(path)
    if inst.metric.family is not MetricFamily.KROPINA:
        raise ConstraintViolation("exist needs a Kropina metric (metric.family = kropina)")
    cert = kropina_existence(inst.space, inst.inner, inst.metric.X, tol)
    results: Dict[str, Any] = {"certificate": cert.to_dict()}
    if cert.case is ExistenceCase.EIGENSPLIT_GENERAL and csv_path is not None:
        frame = m_curve(inst.space, inst.inner, inst.metric.X, _curve_grid(inst))
        write_csv(frame, csv_path)
        results["m_curve"] = {"path": str(csv_path), "rows": int(len(frame))}
    return results, EXIT_OK


def cmd_mcurve(path: Path, t_min: Optional[float] = None, t_max: Optional[float] = None,
               points: int = 201) -> Tuple[pd.DataFrame, int]:
    inst = load_instance(path)
    if inst.metric.family is not MetricFamily.KROPINA:
        raise ConstraintViolation("mcurve needs a Kropina metric (metric.family = kropina)")
    if t_min is None or t_max is None:
        grid = _curve_grid(inst, points)
    else:
        grid = np.linspace(t_min, t_max, points)
    return m_curve(inst.space, inst.inner, inst.metric.X, grid), EXIT_OK


def cmd_classify3d(alpha: float, beta: float, gamma: float, delta: float,
                   metric: str = "riemannian", x: Optional[float] = None,
                   samples: Optional[int] = None, seed: Optional[int] = None,
                   tol: Optional[float] = None, workers: Optional[int] = None) -> Result:
    params = NonUnimodularParams(alpha, beta, gamma, delta)
    _, ip = build(params)
    if metric == "riemannian":
        m = riemannian(ip)
    elif metric == "randers":
        c = 0.5 if x is None else x
        m = randers(ip, np.array([c, 0.0, 0.0]))
    else:
        raise ConstraintViolation(f"classify3d supports riemannian and randers, got {metric!r}")
    report = enumerate_and_verify(params, m, _search_config(samples, seed, tol, workers))
    return {"classification": report.to_dict()}, EXIT_OK
