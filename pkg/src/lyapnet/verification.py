"""Sampled checks of candidate Lyapunov functions.

A candidate is any object with batched ``value(X)`` and, for the pointwise
check, ``gradient(X)``. Every report carries its sample count: these are
statistical checks on finitely many points, never proofs.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import simpson

from .sampling import Box, sample_annulus
from .systems import rk4_states, time_grid


@dataclass(frozen=True)
class QuadraticMargin:
    """h(x) = kappa |x|^2."""

    kappa: float

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return self.kappa * np.sum(X * X, axis=-1)


@dataclass(frozen=True)
class QuadraticCandidate:
    """W(x) = scale |x|^2; handy for sign-flip sanity checks."""

    scale: float = 1.0

    def value(self, X):
        X = np.atleast_2d(X)
        return self.scale * np.sum(X * X, axis=1)

    def gradient(self, X):
        return 2.0 * self.scale * np.atleast_2d(X)


@dataclass
class VerificationReport:
    mode: str
    samples: int
    violations: int
    violation_rate: float
    worst_margin: float
    worst_point: list[float]
    tol: float
    horizon: float | None = None
    step: float | None = None
    diverged: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["note"] = "sampled evidence, not a proof"
        return d


def _field(sys):
    return sys.f if hasattr(sys, "f") else sys


def _report(mode, X, margin, tol, **extra) -> VerificationReport:
    finite = np.isfinite(margin)
    viol = ~finite | (margin < -tol)
    if finite.any():
        k = int(np.flatnonzero(finite)[np.argmin(margin[finite])])
        worst, point = float(margin[k]), X[k].tolist()
    else:
        worst, point = math.nan, []
    return VerificationReport(
        mode=mode,
        samples=len(X),
        violations=int(viol.sum()),
        violation_rate=float(viol.mean()) if len(X) else 0.0,
        worst_margin=worst,
        worst_point=point,
        tol=float(tol),
        **extra,
    )


def decrease_margin(W, sys, X, h) -> np.ndarray:
    """-h(x) - DW(x).f(x); nonnegative where the decrease inequality holds."""
    X = np.atleast_2d(X)
    return -h(X) - np.sum(W.gradient(X) * _field(sys)(X), axis=1)


def verify_pointwise(W, sys, box: Box, samples: int = 10_000, h=None, tol: float = 0.0, r0: float = 1e-3, seed=0):
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    h = h or QuadraticMargin(0.0)
    X = sample_annulus(box, samples, r0, np.random.default_rng(seed))
    return _report("pointwise", X, decrease_margin(W, sys, X, h), tol)


def integral_margin(W, sys, X0, horizon: float, step: float, h) -> np.ndarray:
    """W(x0) - int_0^T h(x(t)) dt - W(x(T)) along RK4 trajectories; nan if diverged."""
    X0 = np.atleast_2d(X0)
    t = time_grid(horizon, step)
    xs = rk4_states(_field(sys), X0, t)  # (K, B, n)
    with np.errstate(over="ignore", invalid="ignore"):
        hs = h(xs)  # (K, B)
        cost = simpson(hs, x=t, axis=0)
        margin = W.value(X0) - cost - W.value(np.nan_to_num(xs[-1], nan=0.0, posinf=0.0, neginf=0.0))
    ok = np.all(np.isfinite(xs.reshape(len(t), len(X0), -1)), axis=(0, 2))
    margin = np.where(ok, margin, np.nan)
    return margin


def verify_integral(
    W, sys, box: Box, samples: int = 10_000, horizon: float = 1.0, step: float = 1e-3, h=None, tol: float = 0.0, seed=0
):
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    h = h or QuadraticMargin(0.0)
    X0 = box.uniform(samples, np.random.default_rng(seed))
    margin = integral_margin(W, sys, X0, horizon, step, h)
    return _report(
        "integral", X0, margin, tol, horizon=float(horizon), step=float(step), diverged=int(np.isnan(margin).sum())
    )


@dataclass
class SupErrorReport:
    sup: float
    rms: float
    argmax: list[float]
    samples: int

    def to_dict(self) -> dict:
        return asdict(self)


def sup_error(W, reference, box: Box, samples: int = 10_000, seed=0, points=None) -> SupErrorReport:
    """Sampled sup and RMS of |W - reference| over the box (box corners included)."""
    if points is None:
        X = np.concatenate([box.uniform(samples, np.random.default_rng(seed)), box.corners()])
    else:
        X = np.atleast_2d(points)
    err = np.abs(W.value(X) - reference.value(X))
    k = int(np.argmax(err))
    return SupErrorReport(float(err[k]), float(np.sqrt(np.mean(err**2))), X[k].tolist(), len(X))
