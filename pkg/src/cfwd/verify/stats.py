from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class StatReport:
    """Estimate with standard error, z-scored against a hypothesised value."""

    name: str
    estimate: float
    se: float
    hypothesis: float = 0.0
    count: int = 0
    threshold: float = 4.0
    details: dict = field(default_factory=dict)

    @property
    def z(self) -> float:
        diff = self.estimate - self.hypothesis
        if self.se > 0:
            return diff / self.se
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)

    @property
    def passed(self) -> bool:
        return abs(self.z) <= self.threshold

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(kind="z", z=self.z, passed=self.passed)
        return d

    def line(self) -> str:
        return (f"{'PASS' if self.passed else 'FAIL'} {self.name}: estimate={self.estimate:.6g} "
                f"se={self.se:.3g} z={self.z:+.2f} (|z|<={self.threshold:g}, n={self.count})")


@dataclass
class ToleranceReport:
    """A deterministic or aggregate quantity checked against a tolerance."""

    name: str
    value: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = "tolerance"
        return d

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: value={self.value:.6g} (tolerance {self.tolerance:g})"


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples for a standard error")
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(n))
