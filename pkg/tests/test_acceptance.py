"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Lines are echoed live and repeated in the terminal summary.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from helpers import central_diff, rel_err, theta_fd
from lyapnet.experiments import ExperimentConfig, scaling_sweep
from lyapnet.network import DenseNet1, SublayerNet, TransformNet, assign_transform, copy_upper
from lyapnet.sampling import Box
from lyapnet.small_gain import compose_lyapunov, normalize_to_W1
from lyapnet.systems import ChainSystemConfig, integrate_rk4, linear_system, make_chain, make_rotated
from lyapnet.training import TrainingConfig, fit_to_reference, train
from lyapnet.verification import QuadraticCandidate, QuadraticMargin, verify_integral

from cli_configs import CONFIGS, rerun_identical
from test_small_gain import two_subsystems, violates


def record(number: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _random_net(arch, rng):
    n = int(rng.integers(1, 9))
    M = int(rng.integers(1, 9))
    if arch == "dense":
        net = DenseNet1(n, M, seed=int(rng.integers(1 << 30)))
    elif arch == "sublayer":
        parts, left = [], n
        while left:
            parts.append(int(rng.integers(1, min(3, left) + 1)))
            left -= parts[-1]
        net = SublayerNet(parts, M, seed=int(rng.integers(1 << 30)))
    else:
        d_max = int(rng.integers(1, 3))
        net = TransformNet(n, d_max, M, seed=int(rng.integers(1 << 30)))
    net.theta = rng.normal(0, 0.7, net.P)
    return net


def test_criterion_1_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_x = worst_t = 0.0
    for arch in ("dense", "sublayer", "transform"):
        for _ in range(100):
            net = _random_net(arch, rng)
            x, f = rng.normal(size=net.n), rng.normal(size=net.n)
            worst_x = max(worst_x, rel_err(net.grad_x(x), central_diff(net.forward, x)))
            u, v = rng.normal(), rng.normal()
            g = net.grad_theta_of_scalar(x, (u, v), f)
            fd = theta_fd(net, lambda: u * net.forward(x) + v * net.directional(x, f))
            worst_t = max(worst_t, rel_err(g, fd))
    wall = time.perf_counter() - t0
    record(1, worst_x <= 1e-6 and worst_t <= 1e-5 and wall < 10,
           f"grad_x rel {worst_x:.1e} <= 1e-6, grad_theta rel {worst_t:.1e} <= 1e-5, 300 cases in {wall:.1f}s")


def test_criterion_2_small_gain():
    from lyapnet.small_gain import check_small_gain

    t0 = time.perf_counter()
    _, spec = make_chain(ChainSystemConfig(3, 0.1))
    good = check_small_gain(spec)
    bad = check_small_gain(two_subsystems(2.0))
    witness_ok = bad.witness is not None and violates(two_subsystems(2.0), np.array(bad.witness))
    wall = time.perf_counter() - t0
    ok = good.passed and good.min_margin > 0 and bad.verdict == "fail" and witness_ok and wall < 5
    record(2, ok, f"chain n=3 margin {good.min_margin:.3e} > 0, gain-2 example fails with "
                  f"witness {np.round(bad.witness, 6).tolist()} ({wall:.1f}s)")


def test_criterion_3_composer():
    t0 = time.perf_counter()
    c = 0.1
    _, spec = make_chain(ChainSystemConfig(2, c))
    one = compose_lyapunov(spec[:1])
    z = np.random.default_rng(3).uniform(-1.0, 1.0, 1000)  # 1.8 * z^2/2 <= 0.9 < 1: unsaturated
    closed = (1 - c) * (z**2 / 2) ** 2
    quad_err = float(np.max(np.abs(one.value(z[:, None]) - closed)))
    worst = -np.inf
    for n in (4, 8):
        sys, spec_n = make_chain(ChainSystemConfig(n, c))
        V = compose_lyapunov(spec_n)
        rng = np.random.default_rng(n)
        X = rng.uniform(-1, 1, (10_000, n))
        X *= rng.uniform(1e-3, 1, (len(X), 1)) / np.max(np.abs(X), axis=1, keepdims=True)
        worst = max(worst, float(np.max(np.sum(V.gradient(X) * sys.f(X), axis=1))))
    wall = time.perf_counter() - t0
    record(3, quad_err <= 1e-8 and worst < 0 and wall < 30,
           f"closed-form error {quad_err:.1e} <= 1e-8, max DV.f {worst:.2e} < 0 for n=4,8 ({wall:.1f}s)")


def test_criterion_4_transform_representation():
    t0 = time.perf_counter()
    base, spec = make_chain(ChainSystemConfig(4, 0.1))
    sys = make_rotated(base, seed=7)
    partition = tuple(s.dim for s in spec)
    f1 = SublayerNet(partition, 6, seed=1)
    f1.theta = np.random.default_rng(1).normal(0, 0.7, f1.P)
    tnet = TransformNet(4, 1, 6, seed=2)
    copy_upper(f1, tnet)
    assign_transform(tnet, sys.T, partition)
    X = np.random.default_rng(4).uniform(-1, 1, (1000, 4))
    diff = float(np.max(np.abs(tnet.forward(X) - f1.forward(X @ sys.T.T))))
    wall = time.perf_counter() - t0
    record(4, diff <= 1e-12 and wall < 5, f"max |F2 - F1(Tx)| = {diff:.1e} <= 1e-12 at 1000 points ({wall:.2f}s)")


def test_criterion_5_integral_verifier():
    t0 = time.perf_counter()
    decay = linear_system(-np.eye(1))
    rep = verify_integral(QuadraticCandidate(0.5), decay, Box.cube(1), 1000, 1.0, 1e-3, QuadraticMargin(1.0), 1e-6)
    errs = [abs(integrate_rk4(decay, np.array([1.0]), 1.0, h).x[-1, 0] - np.exp(-1.0)) for h in (0.1, 0.05, 0.025)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    wall = time.perf_counter() - t0
    ok = rep.violations == 0 and rep.samples == 1000 and np.all((orders >= 3.8) & (orders <= 4.2)) and wall < 10
    record(5, ok, f"{rep.violations} violations / {rep.samples}, RK4 orders {np.round(orders, 3).tolist()} ({wall:.1f}s)")


@pytest.mark.slow
def test_criterion_6_training():
    t0 = time.perf_counter()
    sys, spec = make_chain(ChainSystemConfig(2, 0.1))
    net = SublayerNet((1, 1), 20, seed=0)
    rep = train(net, sys, TrainingConfig(steps=5000, batch_size=256, seed=0, validation_samples=10_000))
    res = rep.residuals
    box = Box.cube(2)
    V = normalize_to_W1(compose_lyapunov(spec), box.as_arrays())
    fit = fit_to_reference(SublayerNet((1, 1), 20, seed=0), V, box, samples=2000, steps=500, seed=0)
    wall = time.perf_counter() - t0
    ok = (res["decrease_violation_rate"] <= 0.01 and res["positivity_violation_rate"] <= 0.01
          and fit.sup <= 0.05 and wall < 180)
    record(6, ok, f"decrease violations {res['decrease_violation_rate']:.4f}, positivity violations "
                  f"{res['positivity_violation_rate']:.4f} (<= 0.01), fit sup {fit.sup:.2e} <= 0.05, "
                  f"final loss {rep.final_loss:.2e} ({wall:.0f}s)")


@pytest.mark.slow
def test_criterion_7_scaling():
    t0 = time.perf_counter()
    records, fit = scaling_sweep(ExperimentConfig(dims=[2, 4, 6, 8], eps=0.1, seeds=[0, 1, 2]))
    wall = time.perf_counter() - t0
    cells = ", ".join(f"n={r.n}:M={r.M},N={r.N}" for r in records)
    ok = all(r.found for r in records) and fit.get("slope", np.inf) <= 2.5 and wall < 1800
    record(7, ok, f"{cells}; slope {fit.get('slope', float('nan')):.3f} <= 2.5 ({wall:.0f}s)")


def test_criterion_8_determinism(tmp_path):
    same = {cmd: rerun_identical(tmp_path / cmd, cmd) for cmd in sorted(CONFIGS)}
    bad = [cmd for cmd, ok in same.items() if not ok]
    record(8, not bad, f"{len(same) - len(bad)}/{len(same)} subcommands byte-identical on rerun"
                       + (f"; differing: {bad}" if bad else ""))
