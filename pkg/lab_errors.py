from __future__ import annotations

from typing import Any, Dict, Optional


class LabError(RuntimeError):
    """Base error of the lab. ``kind`` and ``module`` travel to the CLI report."""

    kind = "lab-error"

    def __init__(self, message: str, *, module: str = "lab", **details: Any):
        super().__init__(message)
        self.module = module
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        payload = {"ok": False, "error": str(self), "kind": self.kind, "module": self.module}
        payload.update({k: v for k, v in self.details.items() if isinstance(v, (str, int, float, bool))})
        return payload


class InvalidArgument(LabError, ValueError):
    kind = "invalid-argument"


class IncompatibleGrids(LabError):
    kind = "incompatible-grids"


class NumericalFailure(LabError):
    kind = "numerical-failure"


class ResolutionError(LabError):
    kind = "resolution-error"


class GridTooCoarse(LabError):
    kind = "grid-too-coarse"


class SolvabilityViolation(LabError):
    kind = "solvability-violation"


class InvalidRegime(LabError):
    kind = "invalid-regime"


class ConstructionFailed(LabError):
    kind = "construction-failed"

    def __init__(self, message: str, *, bullet: Optional[str] = None, module: str = "modulation", **details: Any):
        super().__init__(message, module=module, bullet=bullet or "", **details)
        self.bullet = bullet


class ExtractionFailed(LabError):
    kind = "extraction-failed"


class InsufficientData(LabError):
    kind = "insufficient-data"


def require_k(k: int, *, module: str = "cli_harness") -> int:
    try:
        value = int(k)
    except (TypeError, ValueError):
        raise InvalidArgument("k ≥ 4 required", module=module) from None
    if value != k or value < 4:
        raise InvalidArgument("k ≥ 4 required", module=module)
    return value
