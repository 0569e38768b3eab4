"""Predictive distributions handed from regressors to the scoring metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveVariance


@dataclass(frozen=True)
class PredictiveDistribution:
    """Gaussian (mu, var) or sample-based predictive for one location."""

    kind: str  # "gaussian" | "samples"
    mu: float = 0.0
    var: float = 1.0
    samples: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == "gaussian":
            if not self.var > 0:
                raise NonPositiveVariance(f"var={self.var} must be > 0")
        elif self.kind == "samples":
            if self.samples is None or len(self.samples) == 0:
                raise ValueError("sample-based distribution needs at least one draw")
        else:
            raise ValueError(f"unknown kind {self.kind!r}")

    @classmethod
    def gaussian(cls, mu: float, var: float) -> "PredictiveDistribution":
        return cls(kind="gaussian", mu=float(mu), var=float(var))

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "PredictiveDistribution":
        samples = np.sort(np.asarray(samples, dtype=np.float64))
        return cls(kind="samples", mu=float(samples.mean()),
                   var=float(samples.var(ddof=1)) if samples.size > 1 else 0.0,
                   samples=samples)

    def mean(self) -> float:
        return self.mu
