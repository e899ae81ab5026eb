"""
Verdict types shared by the criterion evaluators.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional


class VerdictStatus(Enum):
    DIVERGES = "diverges"
    CONVERGES = "converges"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class DivergenceVerdict:
    """
    Three-valued classification of a series or integral.

    `fitted_c` is the decisive exponent (the Gauss exponent for term-ratio fits);
    `evidence` holds partial sums or the closed-form quantities behind the call.
    """
    status: VerdictStatus
    fitted_c: Optional[float] = None
    evidence: Dict[str, Any] = field(default_factory=dict)
    partial_sums: List[float] = field(default_factory=list)

    @property
    def diverges(self) -> bool:
        return self.status is VerdictStatus.DIVERGES

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "fitted_c": self.fitted_c,
            "evidence": dict(self.evidence),
            "partial_sums": list(self.partial_sums),
        }


class CoverageOutcome(Enum):
    COVERS = "covers-a.s."
    DOES_NOT_COVER = "does-not-cover-a.s."
    POSITIVE_PROBABILITY = "positive-probability"
    ZERO_PROBABILITY = "zero-probability"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class RegimeReport:
    """Outcome of a coverage dichotomy together with the quantities it was decided on."""
    outcome: CoverageOutcome
    evidence: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"outcome": self.outcome.value, **{k: _finite_or_label(v) for k, v in self.evidence.items()}}


def _finite_or_label(value: Any) -> Any:
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value
