"""Per-cell risk records and their aggregation into global risk measures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from .tables import CellKey


@dataclass(frozen=True)
class CellRisk:
    key: CellKey
    p_unique: float      # estimate of P(F = 1 | f = 1)
    e_inv: float         # estimate of E[1/F | f = 1]
    rate: Optional[float] = None  # lambda-hat, mu, or pi-hat depending on method


@dataclass
class RiskEstimate:
    """Global risk estimates tau1 = sum of P-hat and tau2 = sum of E-hat over sample uniques."""

    method: str
    cells: List[CellRisk]
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.cells = sorted(self.cells, key=lambda c: c.key)

    @property
    def tau1(self) -> float:
        return math.fsum(c.p_unique for c in self.cells)

    @property
    def tau2(self) -> float:
        return math.fsum(c.e_inv for c in self.cells)

    @property
    def n_uniques(self) -> int:
        return len(self.cells)
