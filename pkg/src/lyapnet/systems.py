"""Benchmark interconnected systems and a classical RK4 integrator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .comparison import Linear, SatLinear
from .small_gain import QuadraticV, SubsystemISSData


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class InterconnectedSystem:
    """x' = f(x). ``field`` accepts a state of shape (n,) or a batch (B, n)."""

    n: int
    field: Callable[[np.ndarray], np.ndarray]
    partition: tuple[int, ...] | None = None
    T: np.ndarray | None = None
    T_inv: np.ndarray | None = None
    base: "InterconnectedSystem | None" = None
    family: str = "F1"
    matrix: np.ndarray | None = None  # set for linear systems

    def __post_init__(self):
        if self.partition is not None and sum(self.partition) != self.n:
            raise ValueError("partition does not sum to n")

    @property
    def d_max(self) -> int:
        part = self.partition if self.base is None else self.base.partition
        return max(part) if part else self.n

    def f(self, x):
        return self.field(np.asarray(x, dtype=float))

    __call__ = f


def linear_system(A: np.ndarray, partition=None) -> InterconnectedSystem:
    A = np.asarray(A, dtype=float)
    return InterconnectedSystem(A.shape[0], lambda x: x @ A.T, partition, matrix=A)


@dataclass(frozen=True)
class ChainSystemConfig:
    """Weakly coupled identical nodes on a path or a ring.

    Scalar nodes (``node_dim=1``) follow z_i' = -damping z_i + c sum_nbr z_j;
    planar nodes (``node_dim=2``) are damped oscillators with the same coupling.
    """

    n: int
    c: float = 0.1
    topology: str = "chain"
    node_dim: int = 1
    damping: float = 1.0

    def __post_init__(self):
        if self.topology not in ("chain", "ring"):
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.node_dim not in (1, 2):
            raise ValueError("node_dim must be 1 or 2")
        if not 0 < self.c < 0.25:
            raise ValueError("coupling c must lie in (0, 0.25)")
        if not self.damping > self.c:
            raise ValueError("damping must exceed the coupling")
        if self.n < 1 or self.n % self.node_dim:
            raise ValueError("n must be a positive multiple of node_dim")

    @property
    def nodes(self) -> int:
        return self.n // self.node_dim

    def neighbors(self, i: int) -> list[int]:
        s = self.nodes
        if self.topology == "ring":
            nb = {(i - 1) % s, (i + 1) % s}
        else:
            nb = {j for j in (i - 1, i + 1) if 0 <= j < s}
        nb.discard(i)
        return sorted(nb)


def make_chain(config: ChainSystemConfig) -> tuple[InterconnectedSystem, list[SubsystemISSData]]:
    """Chain/ring benchmark with its closed-form ISS data.

    With V_i = |z_i|^2/2 and at most two neighbours, Young's inequality gives
    DV_i f_i <= -2(damping - c) V_i + c sum_nbr V_j.
    """
    cfg = config
    d, s = cfg.node_dim, cfg.nodes
    if d == 1:
        node = np.array([[-cfg.damping]])
    else:
        node = np.array([[-cfg.damping, 1.0], [-1.0, -cfg.damping]])
    A = np.zeros((cfg.n, cfg.n))
    for i in range(s):
        A[i * d : (i + 1) * d, i * d : (i + 1) * d] = node
        for j in cfg.neighbors(i):
            A[i * d : (i + 1) * d, j * d : (j + 1) * d] += cfg.c * np.eye(d)
    sys = linear_system(A, partition=(d,) * s)
    alpha = Linear(2.0 * (cfg.damping - cfg.c))
    gain = Linear(cfg.c)
    spec = [
        SubsystemISSData(
            index=i,
            dim=d,
            V=QuadraticV.identity(d),
            alpha=alpha,
            eta=SatLinear(1.0, 1.0),
            gains={j: gain for j in cfg.neighbors(i)},
        )
        for i in range(s)
    ]
    return sys, spec


def random_orthogonal(n: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def make_rotated(base: InterconnectedSystem, seed=0, T: np.ndarray | None = None) -> InterconnectedSystem:
    """F2 system f(x) = T^-1 f_base(T x), so x~ = T x follows the base (F1) field."""
    if base.family != "F1":
        raise ValueError("base system must be F1")
    if T is None:
        T = random_orthogonal(base.n, seed)
        T_inv = T.T.copy()
    else:
        T = np.asarray(T, dtype=float)
        T_inv = np.linalg.inv(T)
    matrix = None if base.matrix is None else T_inv @ base.matrix @ T

    def field(x):
        return base.field(x @ T.T) @ T_inv.T

    return InterconnectedSystem(base.n, field, None, T, T_inv, base, "F2", matrix)


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray  # (len(t), n) or (len(t), B, n)
    step: float

    def to_csv(self, path) -> None:
        if self.x.ndim != 2:
            raise ValueError("CSV export needs a single trajectory")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(self.x.shape[1])])
            for tk, xk in zip(self.t, self.x):
                w.writerow([repr(float(tk))] + [repr(float(v)) for v in xk])


def time_grid(horizon: float, step: float) -> np.ndarray:
    if not (horizon > 0 and step > 0) or step > horizon:
        raise ValueError("need 0 < step <= horizon")
    k = int(math.floor(horizon / step + 1e-9))
    t = step * np.arange(k + 1)
    if horizon - t[-1] > 1e-12 * horizon:
        t = np.append(t, horizon)
    else:
        t[-1] = horizon
    return t


def rk4_states(field, x0: np.ndarray, t: np.ndarray) -> np.ndarray:
    """RK4 on the given grid. Non-finite states propagate as nan/inf."""
    x = np.array(x0, dtype=float)
    out = np.empty((len(t),) + x.shape)
    out[0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(len(t) - 1):
            h = t[k + 1] - t[k]
            k1 = field(x)
            k2 = field(x + 0.5 * h * k1)
            k3 = field(x + 0.5 * h * k2)
            k4 = field(x + h * k3)
            x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            out[k + 1] = x
    return out


def integrate_rk4(sys, x0, horizon: float, step: float) -> Trajectory:
    """Classical RK4 on a uniform grid ending exactly at ``horizon``.

    ``sys`` is an InterconnectedSystem or a plain vector-field callable;
    ``x0`` may be a single state or a batch.
    """
    field = sys.f if isinstance(sys, InterconnectedSystem) else sys
    t = time_grid(horizon, step)
    xs = rk4_states(field, np.asarray(x0, dtype=float), t)
    if not np.all(np.isfinite(xs)):
        bad = int(np.argmax(~np.all(np.isfinite(xs.reshape(len(t), -1)), axis=1)))
        raise DivergenceError(f"trajectory left the finite range at t={t[bad]:.6g}")
    return Trajectory(t, xs, step)


def system_from_config(cfg: dict) -> tuple[InterconnectedSystem, list[SubsystemISSData]]:
    """Build a benchmark from its JSON form.

    ``{"family": "chain", "n": 8, "c": 0.1, "topology": "chain", "seed": 3,
    "rotated": true}``. The ISS data always refers to the unrotated coordinates.
    """
    family = cfg.get("family", "chain")
    if family != "chain":
        raise ValueError(f"unknown system family {family!r}")
    chain = ChainSystemConfig(
        n=int(cfg["n"]),
        c=float(cfg.get("c", 0.1)),
        topology=cfg.get("topology", "chain"),
        node_dim=int(cfg.get("node_dim", 1)),
        damping=float(cfg.get("damping", 1.0)),
    )
    sys, spec = make_chain(chain)
    if cfg.get("rotated", False):
        sys = make_rotated(sys, seed=int(cfg.get("seed", 0)))
    return sys, spec
