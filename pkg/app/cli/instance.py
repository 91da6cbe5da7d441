"""
Loading instance files into domain objects
"""
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import ValidationError

from app.cli.schemas import InstanceFile
from app.core.exceptions import DimensionMismatch, InstanceError, InvalidMetric
from app.services.lie_core import (LieAlgebraSpec, ReductiveSpace, lie_group_space,
                                   reductive_space, reductive_split, validate)
from app.services.metric_core import (InnerProduct, MetricFamily, MetricSpec,
                                      NavigationData, kropina_from_navigation)
from app.services.phi_expr import phi_parse

logger = logging.getLogger(__name__)


@dataclass
class Instance:
    source: InstanceFile
    digest: str
    algebra: LieAlgebraSpec
    space: ReductiveSpace
    inner: InnerProduct
    metric: MetricSpec
    navigation: Optional[NavigationData] = None


def file_digest(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def _key_path(loc) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def parse_instance(data: Union[str, bytes]) -> InstanceFile:
    try:
        return InstanceFile.model_validate_json(data)
    except ValidationError as e:
        problems = [{"path": _key_path(err["loc"]), "message": err["msg"]} for err in e.errors()]
        first = problems[0] if problems else {"path": "<root>", "message": str(e)}
        raise InstanceError(f"invalid instance file at {first['path']}: {first['message']}",
                            errors=problems)


def build_algebra(doc: InstanceFile) -> LieAlgebraSpec:
    entries = []
    for entry in doc.brackets:
        sign, i, j = (1.0, entry.i, entry.j) if entry.i < entry.j else (-1.0, entry.j, entry.i)
        for k, c in enumerate(entry.coeffs):
            if c:
                entries.append((i, j, k, sign * float(c)))
    return LieAlgebraSpec(dim=doc.dim, structure=tuple(entries),
                          basis_names=tuple(doc.basis or ()))


def build_space(doc: InstanceFile, algebra: LieAlgebraSpec) -> ReductiveSpace:
    if not doc.h_basis:
        if doc.m_basis is None:
            return lie_group_space(algebra)
        return reductive_space(algebra, np.zeros((0, doc.dim)), np.array(doc.m_basis))
    if doc.m_basis is None:
        return reductive_split(algebra, np.array(doc.h_basis))
    return reductive_space(algebra, np.array(doc.h_basis), np.array(doc.m_basis))


def build_metric(doc: InstanceFile, inner: InnerProduct):
    nav = None
    if doc.navigation is not None:
        if doc.metric.family not in ("riemannian", "kropina") or doc.metric.X is not None:
            raise InvalidMetric("navigation data defines a Kropina metric; "
                                "metric.X must be omitted")
        nav = NavigationData(h=InnerProduct(np.array(doc.navigation.h)),
                             W=np.array(doc.navigation.W))
        return kropina_from_navigation(nav), nav
    family = MetricFamily(doc.metric.family)
    X = None if doc.metric.X is None else np.array(doc.metric.X, dtype=float)
    phi = None
    if family is MetricFamily.ALPHABETA:
        if doc.metric.phi is None:
            raise InvalidMetric("alphabeta metric needs a phi expression")
        phi = phi_parse(doc.metric.phi)
    return MetricSpec(inner=inner, family=family, X=X, phi=phi), nav


def load_instance(path: Union[str, Path], strict: bool = True) -> Instance:
    """
    Read and build an instance file. With strict=True a bracket table that
    violates the Jacobi identity is rejected with the offending triple.
    """
    data = Path(path).read_bytes()
    doc = parse_instance(data)
    algebra = build_algebra(doc)
    if strict:
        report = validate(algebra)
        if not report.passed:
            raise InstanceError(
                f"bracket table violates the Jacobi identity at {report.worst_triple}",
                worst_triple=list(report.worst_triple), violation=report.max_violation)
    space = build_space(doc, algebra)
    if doc.inner_product is None:
        inner = InnerProduct.identity(space.dim_m)
    else:
        inner = InnerProduct(np.array(doc.inner_product, dtype=float))
    if inner.dim != space.dim_m:
        raise DimensionMismatch(
            f"inner_product is {inner.dim}x{inner.dim} but dim m = {space.dim_m}")
    metric, nav = build_metric(doc, inner)
    logger.debug("loaded instance %s: dim g = %d, dim m = %d, metric %s",
                 path, algebra.dim, space.dim_m, metric.family.value)
    return Instance(source=doc, digest=file_digest(data), algebra=algebra, space=space,
                    inner=metric.inner, metric=metric, navigation=nav)
