"""Finite-difference oracles shared by the test modules."""
import numpy as np


def central_diff(fun, x0, step=1e-4, scaled=True):
    x0 = np.asarray(x0, dtype=float)
    out = np.empty_like(x0)
    for k in range(len(x0)):
        h = step * max(1.0, abs(x0[k])) if scaled else step
        e = np.zeros_like(x0)
        e[k] = h
        out[k] = (fun(x0 + e) - fun(x0 - e)) / (2 * h)
    return out


def rel_err(a, b):
    scale = max(np.max(np.abs(b)), 1e-12)
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / scale)


def theta_fd(net, fun, step=1e-4):
    th = net.theta.copy()

    def at(t):
        net.theta = t
        return fun()

    try:
        return central_diff(at, th, step)
    finally:
        net.theta = th
