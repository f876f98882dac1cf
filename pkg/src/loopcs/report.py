"""Verification report records and their JSON/text renderings."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item") and getattr(x, "ndim", 1) == 0:
        x = x.item()
    if hasattr(x, "tolist"):
        return x.tolist()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


@dataclass
class CheckReport:
    """Outcome of one verification check.

    ``expected_fail`` marks negative controls: for those, ``passed`` means the
    check behaved as a control should (the identity was seen to break).
    """

    name: str
    samples: int
    max_deviation: float
    tolerance: float
    passed: bool
    expected_fail: bool = False
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tag = " (negative control)" if self.expected_fail else ""
        return (
            f"[{status}] {self.name}{tag}: samples={self.samples} "
            f"max_deviation={self.max_deviation:.3e} tolerance={self.tolerance:.1e}"
        )


def ratio_check(name: str, deviations, scales, tolerance: float, **details) -> CheckReport:
    """Relative check ``max |dev| / scale < tolerance`` with a zero-scale guard.

    A sample whose scale is exactly zero contributes its absolute deviation.
    """
    worst = 0.0
    n = 0
    for dev, sc in zip(deviations, scales):
        n += 1
        r = abs(dev) / sc if sc > 0 else abs(dev)
        worst = max(worst, float(r))
    return CheckReport(name, n, worst, tolerance, worst < tolerance, details=dict(details))


def dumps(reports: list[CheckReport], extra: dict | None = None) -> str:
    payload = {"checks": [r.to_dict() for r in reports]}
    if extra:
        payload.update(_jsonable(extra))
    return json.dumps(payload, indent=2, sort_keys=False)
