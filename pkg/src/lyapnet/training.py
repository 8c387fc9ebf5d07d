"""Collocation training of Lyapunov networks and supervised fitting to a reference."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .network import LyapunovNetwork
from .sampling import Box, sample_annulus
from .verification import QuadraticMargin, decrease_margin


class TrainingDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    C: float = 1.0
    batch_size: int = 256
    steps: int = 5000
    lr: float = 1e-3
    lr_schedule: str = "constant"  # or "cosine"
    lr_min: float = 1e-5
    w_dec: float = 1.0
    w_pos: float = 1.0
    w_zero: float = 1.0
    kappa: float = 0.05
    kappa_pos: float = 0.01
    r0: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_samples: int = 10_000

    def __post_init__(self):
        if not (self.w_dec > 0 and self.w_pos > 0 and self.w_zero > 0):
            raise ValueError("loss weights must be positive")
        if not (self.kappa > 0 and self.kappa_pos > 0):
            raise ValueError("margins must be positive")
        if not 0 <= self.r0 < self.C:
            raise ValueError("need 0 <= r0 < C")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        return cls(**d)

    def box(self, n: int) -> Box:
        return Box.cube(n, self.C)

    def learning_rate(self, step: int) -> float:
        if self.lr_schedule == "constant" or self.steps <= 1:
            return self.lr
        frac = step / (self.steps - 1)
        return self.lr_min + 0.5 * (self.lr - self.lr_min) * (1.0 + math.cos(math.pi * frac))


class Adam:
    def __init__(self, size: int, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return theta - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def sample_collocation(cfg: TrainingConfig, n: int, count: int, seed) -> np.ndarray:
    """``count`` uniform points on the box with |x|_inf >= r0, then the origin."""
    if count <= 0:
        raise ValueError("count must be positive")
    X = sample_annulus(cfg.box(n), count, cfg.r0, np.random.default_rng(seed))
    return np.concatenate([X, np.zeros((1, n))])


def residual_terms(W, sys, batch: np.ndarray, cfg: TrainingConfig):
    """Per-sample hinge residuals of the decrease and positivity conditions.

    ``W`` is any candidate with batched ``value``/``gradient``; the batch must
    contain the origin, whose value anchors W(0). Returns
    (terms, dec, pos, values, F, origin index).
    """
    X = np.atleast_2d(batch)
    if len(X) == 0:
        raise ValueError("empty batch")
    sq = np.sum(X * X, axis=1)
    origin = np.flatnonzero(sq == 0)
    if origin.size == 0:
        raise ValueError("batch must contain the origin")
    k0 = int(origin[0])
    F = sys.f(X)
    values = W.value(X)
    DWf = np.sum(W.gradient(X) * F, axis=1)
    dec = np.maximum(DWf + cfg.kappa * sq, 0.0)
    pos = np.maximum(cfg.kappa_pos * sq - (values - values[k0]), 0.0)
    terms = {
        "dec": cfg.w_dec * float(np.mean(dec**2)),
        "pos": cfg.w_pos * float(np.mean(pos**2)),
        "zero": cfg.w_zero * float(values[k0] ** 2),
    }
    return terms, dec, pos, values, F, k0


def loss(net: LyapunovNetwork, sys, batch: np.ndarray, cfg: TrainingConfig):
    """Squared-hinge Lyapunov residual. Returns (value, grad_theta, terms)."""
    X = np.atleast_2d(batch)
    B = len(X)
    terms, dec, pos, values, F, k0 = residual_terms(net, sys, X, cfg)
    value = terms["dec"] + terms["pos"] + terms["zero"]
    if not math.isfinite(value):
        raise TrainingDivergence("non-finite loss")
    u = -2.0 * cfg.w_pos * pos / B
    u[k0] += 2.0 * cfg.w_pos * pos.sum() / B + 2.0 * cfg.w_zero * values[k0]
    v = 2.0 * cfg.w_dec * dec / B
    return value, net.param_grad(X, F, u, v), terms


@dataclass
class TrainReport:
    final_loss: float
    loss_curve: np.ndarray  # rows: step, total, dec, pos, zero
    wall_time: float
    residuals: dict = field(default_factory=dict)
    checkpoint: str | None = None

    def to_dict(self) -> dict:
        return {
            "final_loss": self.final_loss,
            "steps": int(len(self.loss_curve)),
            "wall_time": self.wall_time,
            "residuals": self.residuals,
            "checkpoint": self.checkpoint,
        }

    def write_curve(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "total", "dec", "pos", "zero"])
            for row in self.loss_curve:
                w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])


def residual_stats(net: LyapunovNetwork, sys, cfg: TrainingConfig, samples: int, seed) -> dict:
    """Violation rates of both trained inequalities on fresh samples.

    A point violates the decrease condition if DW.f > -h + tol and the
    positivity condition if W(x) - W(0) < kappa_pos |x|^2 - tol, with
    tol = 1e-3 * kappa.
    """
    n = net.n
    tol = 1e-3 * cfg.kappa
    X = sample_annulus(cfg.box(n), samples, cfg.r0, np.random.default_rng(seed))
    dm = decrease_margin(net, sys, X, QuadraticMargin(cfg.kappa))
    gap = net.forward(X) - net.forward(np.zeros(n)) - cfg.kappa_pos * np.sum(X * X, axis=1)
    return {
        "samples": samples,
        "tol": tol,
        "decrease_violation_rate": float(np.mean(dm < -tol)),
        "positivity_violation_rate": float(np.mean(gap < -tol)),
        "worst_decrease_margin": float(dm.min()),
        "worst_positivity_gap": float(gap.min()),
    }


def train(net: LyapunovNetwork, sys, cfg: TrainingConfig, validate: bool = True) -> TrainReport:
    """Adam on freshly resampled collocation batches; updates ``net`` in place."""
    if sys.n != net.n:
        raise ValueError("network and system dimensions differ")
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(net.P, cfg.beta1, cfg.beta2, cfg.eps)
    curve = np.zeros((cfg.steps, 5))
    for k in range(cfg.steps):
        batch = sample_collocation(cfg, net.n, cfg.batch_size, rng)
        try:
            value, grad, terms = loss(net, sys, batch, cfg)
        except TrainingDivergence as exc:
            raise TrainingDivergence(f"step {k}: {exc}") from None
        if value > 1e12 or not np.all(np.isfinite(grad)):
            raise TrainingDivergence(f"step {k}: loss {value:.3e} diverged")
        curve[k] = (k, value, terms["dec"], terms["pos"], terms["zero"])
        net.theta = opt.step(net.theta, grad, cfg.learning_rate(k))
    if cfg.steps:
        final = loss(net, sys, sample_collocation(cfg, net.n, cfg.batch_size, rng), cfg)[0]
    else:
        final = math.nan
    report = TrainReport(final, curve, time.perf_counter() - t0)
    if validate and cfg.validation_samples:
        report.residuals = residual_stats(net, sys, cfg, cfg.validation_samples, cfg.seed + 1)
    return report


# --------------------------------------------------------------------------
# supervised regression


@dataclass
class FitReport:
    sup: float
    rms: float
    argmax: list[float]
    train_rms: float
    evaluations: int
    method: str
    wall_time: float

    def to_dict(self) -> dict:
        return asdict(self)


def fit_points(box: Box, samples: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Training and held-out point sets for supervised fits (corners in both)."""
    rng = np.random.default_rng(seed)
    corners = box.corners()
    train_X = np.concatenate([box.uniform(samples, rng), corners, np.zeros((1, box.n))])
    held_X = np.concatenate([box.uniform(samples, rng), corners])
    return train_X, held_X


def fit_to_reference(
    net: LyapunovNetwork,
    reference,
    box: Box,
    samples: int = 2000,
    steps: int = 500,
    seed=0,
    method: str = "lsq",
    lr: float = 1e-2,
    data=None,
) -> FitReport:
    """Least-squares regression of ``net`` onto ``reference.value``.

    ``method="lsq"`` runs a trust-region least-squares solver with the exact
    Jacobian (``steps`` bounds the function evaluations); ``method="adam"``
    runs full-batch Adam on the mean squared error for ``steps`` steps.
    ``data`` may supply precomputed ``(train_X, train_y, held_X, held_y)``.
    Errors are measured on held-out points.
    """
    t0 = time.perf_counter()
    if data is None:
        train_X, held_X = fit_points(box, samples, seed)
        train_y, held_y = reference.value(train_X), reference.value(held_X)
    else:
        train_X, train_y, held_X, held_y = data
    if method == "lsq":
        if steps > 0:

            def resid(theta):
                net.theta = theta
                return net.forward(train_X) - train_y

            def jac(theta):
                net.theta = theta
                return net.param_grad(train_X, reduce=False)

            sol = least_squares(resid, net.theta.copy(), jac=jac, method="trf", max_nfev=steps, x_scale="jac")
            net.theta = sol.x
            evals = int(sol.nfev)
        else:
            evals = 0
    elif method == "adam":
        opt = Adam(net.P)
        B = len(train_X)
        for _ in range(steps):
            r = net.forward(train_X) - train_y
            if not np.all(np.isfinite(r)) or np.mean(r * r) > 1e12:
                raise TrainingDivergence("regression diverged")
            net.theta = opt.step(net.theta, net.param_grad(train_X, u=2.0 * r / B), lr)
        evals = steps
    else:
        raise ValueError(f"unknown fit method {method!r}")
    train_rms = float(np.sqrt(np.mean((net.forward(train_X) - train_y) ** 2)))
    err = np.abs(net.forward(held_X) - held_y)
    k = int(np.argmax(err))
    return FitReport(
        float(err[k]),
        float(np.sqrt(np.mean(err**2))),
        held_X[k].tolist(),
        train_rms,
        evals,
        method,
        time.perf_counter() - t0,
    )
