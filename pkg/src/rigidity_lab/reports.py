"""Identity reports and their JSON/CSV serialization."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field


def _clean(value):
    """Make a value JSON friendly with stable float formatting."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "tolist"):
        return _clean(value.tolist())
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return repr(value)
        return float(f"{value:.17g}")
    if hasattr(value, "item"):
        return _clean(value.item())
    return value


@dataclass
class IdentityReport:
    """Comparison of the two sides of an identity or inequality.

    ``kind`` is ``"equality"`` (relative residual), ``"le"`` (lhs <= rhs) or
    ``"ge"`` (lhs >= rhs). For inequalities the residual is the normalized
    violation, zero when the inequality holds. Informational reports always
    pass; their numbers are recorded but no claim is asserted.
    """

    name: str
    lhs: float
    rhs: float
    tol: float
    kind: str = "equality"
    scale: float | None = None
    informational: bool = False
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)
        self.tol = float(self.tol)
        if self.kind not in ("equality", "le", "ge"):
            raise ValueError(f"unknown report kind {self.kind!r}")

    @property
    def abs_residual(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def rel_residual(self) -> float:
        denom = self.scale if self.scale is not None else max(abs(self.lhs), abs(self.rhs))
        if self.kind == "equality":
            gap = self.abs_residual
        elif self.kind == "le":
            gap = max(0.0, self.lhs - self.rhs)
        else:
            gap = max(0.0, self.rhs - self.lhs)
        if gap == 0.0:
            return 0.0
        return gap / denom if denom > 0 else math.inf

    @property
    def passed(self) -> bool:
        return self.informational or self.rel_residual <= self.tol

    def to_dict(self) -> dict:
        return _clean({
            "name": self.name,
            "kind": self.kind,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "abs_residual": self.abs_residual,
            "rel_residual": self.rel_residual,
            "tol": self.tol,
            "pass": self.passed,
            "informational": self.informational,
            "details": self.details,
        })


def reports_json(reports, meta: dict | None = None) -> str:
    body = [r.to_dict() for r in reports]
    if meta is not None:
        return json.dumps({"meta": _clean(meta), "reports": body}, indent=2, sort_keys=True)
    return json.dumps(body, indent=2, sort_keys=True)


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "lhs", "rhs", "rel_residual", "tol", "pass"])
    for r in reports:
        w.writerow([r.name, f"{r.lhs:.17g}", f"{r.rhs:.17g}", f"{r.rel_residual:.17g}",
                    f"{r.tol:.17g}", "true" if r.passed else "false"])
    return buf.getvalue()


def to_jsonable(obj):
    return _clean(obj)


def isoperimetric_report(cone, perimeter: float, volume: float, tol: float = 2e-2,
                         equality: bool = False) -> IdentityReport:
    """Relative isoperimetric ratio against 1.

    In convex cones the ratio is at least 1, with equality for spherical
    sectors; ``equality=True`` asserts the latter. Outside convex cones the
    bound can fail, so the report is informational there.
    """
    import warnings

    from .cone import relative_isoperimetric_ratio

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ratio = relative_isoperimetric_ratio(cone, perimeter, volume)
    return IdentityReport("isoperimetric_ratio", ratio, 1.0, tol,
                          kind="equality" if equality else "ge", scale=1.0,
                          informational=not cone.convex,
                          details={"perimeter": perimeter, "volume": volume})
