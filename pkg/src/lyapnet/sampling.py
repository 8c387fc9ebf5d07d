from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lower, upper] in R^n."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("box bounds differ in length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box lower bound exceeds upper bound")

    @classmethod
    def cube(cls, n: int, C: float = 1.0) -> "Box":
        if not C > 0:
            raise ValueError("box half-width must be positive")
        return cls((-float(C),) * n, (float(C),) * n)

    @property
    def n(self) -> int:
        return len(self.lower)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.lower, dtype=float), np.array(self.upper, dtype=float)

    def uniform(self, count: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.as_arrays()
        return lo + (hi - lo) * rng.random((count, self.n))

    def corners(self, max_dim: int = 10) -> np.ndarray:
        if self.n > max_dim:
            return np.empty((0, self.n))
        lo, hi = self.as_arrays()
        return np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(self.n, -1).T

    def to_json(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


def sample_annulus(box: Box, count: int, r0: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples on ``box`` with sup-norm at least ``r0`` (rejection)."""
    out = np.empty((0, box.n))
    while len(out) < count:
        x = box.uniform(max(2 * (count - len(out)), 16), rng)
        x = x[np.max(np.abs(x), axis=1) >= r0]
        out = np.concatenate([out, x])
    return out[:count]
