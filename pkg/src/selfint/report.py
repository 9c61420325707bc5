"""Convergence bookkeeping shared by the quadrature-style computations."""
from __future__ import annotations

from dataclasses import dataclass, field


class ConvergenceWarning(RuntimeWarning):
    """A quadrature did not meet its declared tolerance."""


class SpectralAccuracyWarning(RuntimeWarning):
    """A Fourier inversion grid is below the exactness threshold."""


class NonConvergenceError(RuntimeError):
    """Raised where a caller demands a converged result."""


@dataclass
class QuadratureReport:
    value: float
    resolutions: list[tuple[int, float]] = field(default_factory=list)
    converged: bool = False
    tolerance: float = 0.0
    method: str = ""

    @property
    def monotone(self) -> bool:
        """Successive changes never grow (down to a round-off floor)."""
        vals = [v for _, v in self.resolutions]
        diffs = [abs(b - a) for a, b in zip(vals, vals[1:])]
        floor = 1e-14 * max(1.0, abs(self.value))
        return all(d2 <= max(d1, floor) for d1, d2 in zip(diffs, diffs[1:]))

    def spread(self, last: int = 3) -> float:
        vals = [v for _, v in self.resolutions[-last:]]
        return max(vals) - min(vals) if vals else float("inf")

    def resolution_string(self) -> str:
        return ";".join(f"{n}:{v:.17g}" for n, v in self.resolutions)
