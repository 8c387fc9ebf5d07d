"""Subsystem ISS data, the gain operators, a grid-based small-gain checker and
the composed Lyapunov function built from subsystem ISS Lyapunov functions.

The ISS inequality for subsystem ``i`` is read on Lyapunov values::

    DV_i(z_i) f_i(z_i, z_-i) <= -alpha_i(V_i(z_i)) + sum_j gamma_ij(V_j(z_j))

and the small-gain test is, for every r >= 0 with r != 0,

    eta(r) . Gamma(A(r)) < eta(r) . r
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from .comparison import (
    DEFAULT_TOL,
    KinfFn,
    PositiveDefiniteFn,
    ScalarProfile,
    compose,
    divergence_evidence,
    integrate_profile,
)


@dataclass(frozen=True)
class QuadraticV:
    """V(z) = z^T P z / 2 for a symmetric positive definite P."""

    P: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "QuadraticV":
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", z, self.P, z)

    def grad(self, z):
        return np.asarray(z, dtype=float) @ self.P.T


@dataclass(frozen=True)
class SubsystemISSData:
    index: int
    dim: int
    V: QuadraticV
    alpha: KinfFn
    eta: PositiveDefiniteFn
    gains: Mapping[int, KinfFn] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("subsystem dimension must be positive")
        if self.index in self.gains:
            raise ValueError("gamma_ii must be identically zero")
        if self.V.dim != self.dim:
            raise ValueError("V_i dimension does not match d_i")

    @property
    def profile(self) -> ScalarProfile:
        return compose(self.eta, self.alpha)


def partition_offsets(partition: Sequence[int]) -> list[int]:
    """Zero-based start index of each block."""
    return [int(v) for v in np.concatenate([[0], np.cumsum(partition)[:-1]])]


class GainOperators:
    """Gamma(r)_i = sum_j gamma_ij(r_j) and A(r)_i = alpha_i(r_i), batched over rows."""

    def __init__(self, spec: Sequence[SubsystemISSData]):
        self.spec = list(spec)
        self.s = len(self.spec)

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        if r.shape[-1] != self.s:
            raise ValueError(f"expected vectors of length {self.s}, got shape {r.shape}")
        return r

    def gamma(self, r):
        r = self._check(r)
        out = np.zeros_like(r)
        for i, sub in enumerate(self.spec):
            for j, g in sub.gains.items():
                out[..., i] += g(r[..., j])
        return out

    def A(self, r):
        r = self._check(r)
        out = np.empty_like(r)
        for i, sub in enumerate(self.spec):
            out[..., i] = sub.alpha(r[..., i])
        return out

    def eta(self, r):
        r = self._check(r)
        out = np.empty_like(r)
        for i, sub in enumerate(self.spec):
            out[..., i] = sub.eta(r[..., i])
        return out

    def margin(self, r):
        """eta(r).r - eta(r).Gamma(A(r)); positive where the small-gain test holds."""
        r = self._check(r)
        e = self.eta(r)
        return np.sum(e * r, axis=-1) - np.sum(e * self.gamma(self.A(r)), axis=-1)


def gamma_of(spec: Sequence[SubsystemISSData], r) -> np.ndarray:
    return GainOperators(spec).gamma(r)


# --------------------------------------------------------------------------
# small-gain checker


@dataclass(frozen=True)
class GridSpec:
    r_min: float = 1e-4
    r_max: float = 1e3
    points_per_axis: int = 25
    max_tensor_dim: int = 3
    rays: int = 1000
    radii: int = 50
    seed: int = 0
    points: tuple | None = None  # explicit grid, overrides the generated one

    def build(self, s: int) -> np.ndarray:
        if self.points is not None:
            pts = np.asarray(self.points, dtype=float).reshape(-1, s)
        else:
            if not (0 < self.r_min < self.r_max):
                raise ValueError("grid needs 0 < r_min < r_max")
            axis = np.concatenate([[0.0], np.geomspace(self.r_min, self.r_max, self.points_per_axis)])
            parts = []
            if s <= self.max_tensor_dim:
                mesh = np.stack(np.meshgrid(*([axis] * s), indexing="ij"), axis=-1).reshape(-1, s)
                parts.append(mesh[np.any(mesh > 0, axis=1)])
            if self.rays > 0 and self.radii > 0:
                rng = np.random.default_rng(self.seed)
                dirs = np.abs(rng.standard_normal((self.rays, s)))
                # some rays lie on faces of the orthant
                dirs *= rng.random((self.rays, s)) > 0.25
                dead = ~np.any(dirs > 0, axis=1)
                dirs[dead, rng.integers(0, s, dead.sum())] = 1.0
                dirs /= np.max(dirs, axis=1, keepdims=True)
                radii = np.geomspace(self.r_min, self.r_max, self.radii)
                parts.append((radii[None, :, None] * dirs[:, None, :]).reshape(-1, s))
            pts = np.concatenate(parts, axis=0) if parts else np.empty((0, s))
        if pts.size == 0:
            raise ValueError("empty small-gain grid")
        if np.any(pts < 0):
            raise ValueError("grid points must be nonnegative")
        if np.any(np.all(pts == 0, axis=1)):
            raise ValueError("grid must exclude the origin")
        return pts

    def describe(self, s: int) -> dict:
        d = {
            "s": s,
            "r_min": self.r_min,
            "r_max": self.r_max,
            "points_per_axis": self.points_per_axis,
            "tensor": s <= self.max_tensor_dim,
            "rays": self.rays,
            "radii": self.radii,
            "seed": self.seed,
        }
        if self.points is not None:
            d = {"s": s, "explicit_points": len(np.asarray(self.points).reshape(-1, s))}
        return d


@dataclass
class SmallGainCertificate:
    verdict: str  # "pass_on_grid" | "fail"
    grid: dict
    n_points: int
    min_margin: float
    min_relative_margin: float
    witness: list[float] | None = None
    divergence_evidence: list[bool] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass_on_grid"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "grid": self.grid,
            "n_points": self.n_points,
            "min_margin": self.min_margin,
            "min_relative_margin": self.min_relative_margin,
            "witness": self.witness,
            "divergence_evidence": self.divergence_evidence,
            "note": "finite-grid evidence, not a proof",
        }


def check_small_gain(spec: Sequence[SubsystemISSData], grid: GridSpec | None = None) -> SmallGainCertificate:
    grid = grid or GridSpec()
    ops = GainOperators(spec)
    pts = grid.build(ops.s)
    margin = ops.margin(pts)
    rhs = np.sum(ops.eta(pts) * pts, axis=1)
    bad = np.flatnonzero(~(margin > 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(rhs > 0, margin / rhs, -np.inf)
    return SmallGainCertificate(
        verdict="fail" if bad.size else "pass_on_grid",
        grid=grid.describe(ops.s),
        n_points=len(pts),
        min_margin=float(margin.min()),
        min_relative_margin=float(rel.min()),
        witness=pts[bad[0]].tolist() if bad.size else None,
        divergence_evidence=[divergence_evidence(sub.eta, sub.alpha) for sub in spec],
    )


# --------------------------------------------------------------------------
# composed Lyapunov function


@dataclass(frozen=True)
class IntegratedTerm:
    """z -> integral of the profile over [0, V_i(z)]."""

    V: QuadraticV
    profile: ScalarProfile
    tol: float = DEFAULT_TOL

    def value(self, z):
        z = np.atleast_2d(z)
        return integrate_profile(self.profile, self.V(z), self.tol)

    def grad(self, z):
        z = np.atleast_2d(z)
        return self.profile(self.V(z))[:, None] * self.V.grad(z)


@dataclass(frozen=True)
class ComposedLyapunov:
    """V(x) = mu * sum_i term_i(z_i), with z = T x when a transform is stored.

    ``terms`` are any objects exposing batched ``value(z)`` and ``grad(z)``.
    """

    terms: tuple
    partition: tuple[int, ...]
    mu: float = 1.0
    transform: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(sum(self.partition))

    @property
    def offsets(self) -> list[int]:
        return partition_offsets(self.partition)

    def _blocks(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n:
            raise ValueError(f"expected states of dimension {self.n}")
        xt = x if self.transform is None else x @ self.transform.T
        return [xt[:, o : o + d] for o, d in zip(self.offsets, self.partition)]

    def term_values(self, x) -> np.ndarray:
        """Unscaled per-subsystem values, shape (batch, s)."""
        return np.stack([t.value(z) for t, z in zip(self.terms, self._blocks(x))], axis=1)

    def value(self, x):
        out = self.mu * self.term_values(x).sum(axis=1)
        return float(out[0]) if np.ndim(x) == 1 else out

    def gradient(self, x):
        g = self.mu * np.concatenate([t.grad(z) for t, z in zip(self.terms, self._blocks(x))], axis=1)
        if self.transform is not None:
            g = g @ self.transform
        return g[0] if np.ndim(x) == 1 else g


def compose_lyapunov(
    spec: Sequence[SubsystemISSData], tol: float = DEFAULT_TOL, transform: np.ndarray | None = None
) -> ComposedLyapunov:
    terms = tuple(IntegratedTerm(sub.V, sub.profile, tol) for sub in spec)
    return ComposedLyapunov(terms, tuple(sub.dim for sub in spec), 1.0, transform)


def _box_samples(lo: np.ndarray, hi: np.ndarray, samples: int, seed: int) -> np.ndarray:
    d = len(lo)
    sob = qmc.Sobol(d, scramble=True, seed=seed)
    pts = sob.random_base2(int(np.ceil(np.log2(max(samples, 2)))))[:samples]
    pts = lo + (hi - lo) * pts
    if d <= 10:
        corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(d, -1).T
        pts = np.concatenate([pts, corners], axis=0)
    return pts


def normalize_to_W1(V: ComposedLyapunov, box, samples: int = 4096, seed: int = 0) -> ComposedLyapunov:
    """Rescale V so every term satisfies sum_k sup_box |d term / d z_k| <= 1.

    ``box`` is a (lower, upper) pair in the coordinates the terms read (the
    transformed coordinates when V stores a transform). The sup is estimated
    on scrambled Sobol points plus the box corners.
    """
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (V.n,)) for b in box)
    if np.any(lo > 0) or np.any(hi < 0):
        raise ValueError("box must contain the origin")
    worst = 0.0
    for t, o, d in zip(V.terms, V.offsets, V.partition):
        z = _box_samples(lo[o : o + d], hi[o : o + d], samples, seed)
        worst = max(worst, float(np.abs(t.grad(z)).max(axis=0).sum()))
    if not worst > 0:
        raise ValueError("degenerate Lyapunov function: gradient vanishes on the box")
    return replace(V, mu=1.0 / worst)
