"""
Instance-file and report models
"""
import json
import math
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.config import settings


class BracketModel(BaseModel):
    """[e_i, e_j] = sum_k coeffs[k] e_k, indices 0-based"""
    model_config = ConfigDict(extra="forbid")

    i: int = Field(ge=0)
    j: int = Field(ge=0)
    coeffs: List[float]


class MetricModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: Literal["riemannian", "randers", "kropina", "alphabeta"] = "riemannian"
    X: Optional[List[float]] = None
    phi: Optional[str] = None


class NavigationModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    h: List[List[float]]
    W: List[float]


class InstanceFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dim: int = Field(gt=0)
    basis: Optional[List[str]] = None
    brackets: List[BracketModel] = []
    h_basis: List[List[float]] = []
    m_basis: Optional[List[List[float]]] = None
    inner_product: Optional[List[List[float]]] = None
    metric: MetricModel = MetricModel()
    navigation: Optional[NavigationModel] = None

    @model_validator(mode="after")
    def check_shapes(self) -> "InstanceFile":
        n = self.dim
        if self.basis is not None and len(self.basis) != n:
            raise ValueError(f"basis has {len(self.basis)} names for dim {n}")
        for idx, entry in enumerate(self.brackets):
            if entry.i >= n or entry.j >= n:
                raise ValueError(f"brackets.{idx}: index out of range for dim {n}")
            if entry.i == entry.j:
                raise ValueError(f"brackets.{idx}: [e_i, e_i] must not be listed")
            if len(entry.coeffs) != n:
                raise ValueError(f"brackets.{idx}.coeffs: expected {n} entries")
        for name in ("h_basis", "m_basis"):
            rows = getattr(self, name) or []
            for idx, row in enumerate(rows):
                if len(row) != n:
                    raise ValueError(f"{name}.{idx}: expected {n} entries")
        return self


class Report(BaseModel):
    command: str
    arguments: Dict[str, Any]
    input_digest: Optional[str] = None
    version: str = settings.VERSION
    status: Literal["ok", "failed", "error"] = "ok"
    exit_code: int = 0
    results: Optional[Dict[str, Any]] = None
    error: Optional[Dict[str, Any]] = None
    timings: Optional[Dict[str, float]] = None


def _encode(value: Any, digits: int, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    close = " " * (indent * level)
    if isinstance(value, BaseModel):
        value = value.model_dump()
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, np.generic):
        value = value.item()
    if value is None or isinstance(value, bool):
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return "null"
        return format(value, f".{digits}g")
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: "
                 f"{_encode(v, digits, indent, level + 1)}"
                 for k, v in sorted(value.items(), key=lambda kv: str(kv[0]))]
        return "{\n" + ",\n".join(items) + "\n" + close + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if all(isinstance(v, (int, float, np.generic)) and not isinstance(v, bool) for v in value):
            return "[" + ", ".join(_encode(v, digits, indent, level + 1) for v in value) + "]"
        items = [pad + _encode(v, digits, indent, level + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + close + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def render_json(payload: Any, digits: Optional[int] = None, indent: int = 2) -> str:
    """
    Deterministic JSON: keys sorted, floats with a fixed number of significant
    digits, non-finite floats as null, LF line endings
    """
    digits = settings.FLOAT_DIGITS if digits is None else digits
    return _encode(payload, digits, indent, 0) + "\n"
