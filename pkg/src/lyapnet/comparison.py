"""Scalar comparison functions and the quadrature used to integrate them.

Two closed families are supported:

* K-infinity functions (``Linear``, ``Power``): zero at zero, strictly
  increasing, unbounded.
* positive definite functions (``SatLinear``, ``KinfWrapped``): zero at zero,
  positive elsewhere, possibly bounded.

All functions accept scalars or numpy arrays and reject negative arguments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

DEFAULT_TOL = 1e-10
MAX_DEPTH = 40


def _check_domain(r):
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError(f"comparison functions are defined on [0, inf), got {r!r}")
    return arr


def _out(value, like):
    return float(value) if np.ndim(like) == 0 else value


@dataclass(frozen=True)
class Linear:
    slope: float

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError("Linear slope must be positive")

    def __call__(self, r):
        arr = _check_domain(r)
        return _out(self.slope * arr, r)

    def derivative(self, r):
        arr = _check_domain(r)
        return _out(np.full_like(arr, self.slope), r)

    def inverse(self, y):
        return _out(_check_domain(y) / self.slope, y)

    def to_json(self) -> dict:
        return {"kind": "linear", "slope": self.slope}


@dataclass(frozen=True)
class Power:
    coef: float
    exponent: float

    def __post_init__(self):
        if not (self.coef > 0 and self.exponent > 0):
            raise ValueError("Power needs positive coef and exponent")

    def __call__(self, r):
        arr = _check_domain(r)
        return _out(self.coef * arr**self.exponent, r)

    def derivative(self, r):
        arr = _check_domain(r)
        with np.errstate(divide="ignore"):
            d = self.coef * self.exponent * arr ** (self.exponent - 1.0)
        return _out(d, r)

    def inverse(self, y):
        return _out((_check_domain(y) / self.coef) ** (1.0 / self.exponent), y)

    def to_json(self) -> dict:
        return {"kind": "power", "coef": self.coef, "exponent": self.exponent}


@dataclass(frozen=True)
class SatLinear:
    """``min(slope * r, cap)``. Bounded, hence not of class K-infinity."""

    slope: float
    cap: float

    def __post_init__(self):
        if not (self.slope > 0 and self.cap > 0):
            raise ValueError("SatLinear needs positive slope and cap")

    @property
    def sup(self) -> float:
        return self.cap

    @property
    def knee(self) -> float:
        return self.cap / self.slope

    def __call__(self, r):
        arr = _check_domain(r)
        return _out(np.minimum(self.slope * arr, self.cap), r)

    def to_json(self) -> dict:
        return {"kind": "satlinear", "slope": self.slope, "cap": self.cap}


@dataclass(frozen=True)
class KinfWrapped:
    """A K-infinity function used where a positive definite one is expected."""

    fn: KinfFn

    @property
    def sup(self) -> float:
        return math.inf

    def __call__(self, r):
        return self.fn(r)

    def to_json(self) -> dict:
        return {"kind": "kinf", "fn": self.fn.to_json()}


KinfFn = Union[Linear, Power]
PositiveDefiniteFn = Union[SatLinear, KinfWrapped]
ComparisonFn = Union[Linear, Power, SatLinear, KinfWrapped]


def evaluate(fn: ComparisonFn, r):
    """Evaluate ``fn`` at ``r >= 0`` (scalar or array)."""
    return fn(r)


def from_json(obj: dict) -> ComparisonFn:
    kind = obj.get("kind")
    if kind == "linear":
        return Linear(float(obj["slope"]))
    if kind == "power":
        return Power(float(obj["coef"]), float(obj["exponent"]))
    if kind == "satlinear":
        return SatLinear(float(obj["slope"]), float(obj["cap"]))
    if kind == "kinf":
        inner = from_json(obj["fn"])
        if not isinstance(inner, (Linear, Power)):
            raise ValueError("kinf wrapper needs a linear or power function")
        return KinfWrapped(inner)
    raise ValueError(f"unknown comparison function kind {kind!r}")


def is_kinf(fn) -> bool:
    return isinstance(fn, (Linear, Power))


# --------------------------------------------------------------------------
# profiles and quadrature


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = DEFAULT_TOL,
    max_depth: int = MAX_DEPTH,
) -> float:
    """Adaptive Simpson estimate of the integral of ``f`` over ``[a, b]``."""
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("integration bounds must be finite")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return _simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + _simpson_rec(
        f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
    )


@dataclass(frozen=True)
class ScalarProfile:
    """tau -> outer(inner(tau)), the integrand of the composed Lyapunov terms."""

    outer: PositiveDefiniteFn
    inner: KinfFn
    tol: float = DEFAULT_TOL

    def __call__(self, tau):
        return self.outer(self.inner(tau))

    def breakpoints(self) -> tuple[float, ...]:
        """Points in (0, inf) where the profile is not smooth."""
        if isinstance(self.outer, SatLinear):
            return (float(self.inner.inverse(self.outer.knee)),)
        return ()

    def integral(self, upper: float, tol: float | None = None) -> float:
        return integrate_profile(self, upper, self.tol if tol is None else tol)


def compose(outer: PositiveDefiniteFn, inner: KinfFn) -> ScalarProfile:
    return ScalarProfile(outer, inner)


def adaptive_simpson_batch(f, a, b, tol=DEFAULT_TOL, max_depth: int = MAX_DEPTH) -> np.ndarray:
    """Vectorized adaptive Simpson: one integral per pair (a[k], b[k]).

    Runs the same refinement as :func:`adaptive_simpson` on all intervals at
    once; ``f`` must accept arrays.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("integration bounds must be finite")
    tol = np.broadcast_to(np.asarray(tol, dtype=float), a.shape).copy()
    if np.any(tol <= 0):
        raise ValueError("tol must be positive")
    result = np.zeros(a.shape)
    owner = np.arange(a.size)
    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    depth = np.full(a.shape, max_depth)
    while owner.size:
        m = 0.5 * (a + b)
        flm, frm = f(0.5 * (a + m)), f(0.5 * (m + b))
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        done = (depth <= 0) | (np.abs(delta) <= 15.0 * tol)
        np.add.at(result, owner[done], (left + right + delta / 15.0)[done])
        k = ~done
        owner = np.concatenate([owner[k], owner[k]])
        a, b = np.concatenate([a[k], m[k]]), np.concatenate([m[k], b[k]])
        fa, fm, fb = (
            np.concatenate([fa[k], fm[k]]),
            np.concatenate([flm[k], frm[k]]),
            np.concatenate([fm[k], fb[k]]),
        )
        whole = np.concatenate([left[k], right[k]])
        tol = np.concatenate([0.5 * tol[k], 0.5 * tol[k]])
        depth = np.concatenate([depth[k] - 1, depth[k] - 1])
    return result


def integrate_profile(p: ScalarProfile, upper, tol: float = DEFAULT_TOL):
    """Integral of ``p`` over ``[0, upper]`` (scalar or array of upper limits).

    Each interval is split at the profile's kinks so that every piece is
    smooth; the tolerance is shared evenly among the nonempty pieces.
    """
    u = np.asarray(upper, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("upper limit must be finite")
    if np.any(u < 0):
        raise ValueError("upper limit must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    flat = u.ravel()
    edges = [0.0, *sorted(p.breakpoints()), math.inf]
    los = [np.minimum(e, flat) for e in edges[:-1]]
    his = [np.minimum(e, flat) for e in edges[1:]]
    pieces = np.sum([hi > lo for lo, hi in zip(los, his)], axis=0).clip(min=1)
    piece_tol = np.tile(tol / pieces, len(los))
    total = adaptive_simpson_batch(p, np.concatenate(los), np.concatenate(his), piece_tol)
    out = total.reshape(len(los), -1).sum(axis=0).reshape(u.shape)
    return float(out) if u.ndim == 0 else out


def divergence_evidence(eta: PositiveDefiniteFn, alpha: KinfFn, r_max: float = 1e6) -> bool:
    """Numerical evidence that the integral of eta(alpha(r)) over [0, inf) diverges.

    Integrates over [R, 2R] for R doubling up to ``r_max``; for an integrand
    decaying like r^-p the ratio of consecutive increments is 2^(1-p), which is
    >= 1 exactly in the divergent case p <= 1. Evidence, not proof.
    """
    p = compose(eta, alpha)
    edges = [1.0]
    while edges[-1] < r_max:
        edges.append(edges[-1] * 2.0)
    incs = []
    for a, b in zip(edges[:-1], edges[1:]):
        cuts = [a] + [t for t in p.breakpoints() if a < t < b] + [b]
        incs.append(sum(adaptive_simpson(lambda t: float(p(t)), lo, hi, 1e-8) for lo, hi in zip(cuts[:-1], cuts[1:])))
    tail = incs[-5:]
    if tail[0] <= 0:
        return False
    return all(later >= (1.0 - 1e-6) * earlier for earlier, later in zip(tail[:-1], tail[1:]))
