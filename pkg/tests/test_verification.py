import numpy as np
import pytest

from lyapnet.sampling import Box
from lyapnet.small_gain import compose_lyapunov, normalize_to_W1
from lyapnet.systems import ChainSystemConfig, linear_system, make_chain
from lyapnet.verification import (
    QuadraticCandidate,
    QuadraticMargin,
    decrease_margin,
    integral_margin,
    sup_error,
    verify_integral,
    verify_pointwise,
)


@pytest.fixture(scope="module")
def chain4():
    sys, spec = make_chain(ChainSystemConfig(4, 0.1))
    return sys, compose_lyapunov(spec)


def decay(n=1):
    return linear_system(-np.eye(n))


def test_pointwise_composed_has_no_violations(chain4):
    sys, V = chain4
    rep = verify_pointwise(V, sys, Box.cube(4), 10_000, QuadraticMargin(0.0), 0.0)
    assert rep.violations == 0 and rep.samples == 10_000
    assert rep.worst_margin >= 0


def test_pointwise_unstable_all_violate():
    rep = verify_pointwise(QuadraticCandidate(1.0), linear_system(np.eye(2)), Box.cube(2), 1000)
    assert rep.violation_rate == 1.0


def test_pointwise_infinite_tol_vacuous():
    rep = verify_pointwise(QuadraticCandidate(1.0), linear_system(np.eye(2)), Box.cube(2), 1000, tol=np.inf)
    assert rep.violations == 0


def test_worst_point_reevaluates(chain4):
    sys, V = chain4
    h = QuadraticMargin(0.5)
    rep = verify_pointwise(V, sys, Box.cube(4), 2000, h, 0.0, seed=4)
    assert decrease_margin(V, sys, np.array([rep.worst_point]), h)[0] == pytest.approx(rep.worst_margin, rel=1e-12)
    assert rep.violations <= rep.samples


def test_pointwise_deterministic(chain4):
    sys, V = chain4
    a = verify_pointwise(V, sys, Box.cube(4), 500, seed=9)
    b = verify_pointwise(V, sys, Box.cube(4), 500, seed=9)
    assert a == b


def test_pointwise_respects_exclusion_radius():
    rep = verify_pointwise(QuadraticCandidate(1.0), decay(2), Box.cube(2), 500, r0=0.5)
    assert max(abs(v) for v in rep.worst_point) >= 0.5


def test_integral_monotone_flow():
    W = QuadraticCandidate(0.5)
    rep = verify_integral(W, decay(), Box.cube(1), 200, 1.0, 1e-2)
    assert rep.violations == 0


def test_integral_equality_case():
    # d/dt (x^2/2) = -x^2 exactly, so the inequality holds with equality
    rep = verify_integral(QuadraticCandidate(0.5), decay(), Box.cube(1), 1000, 1.0, 1e-3, QuadraticMargin(1.0), 1e-6)
    assert rep.violations == 0
    assert abs(rep.worst_margin) <= 1e-9


def test_integral_sign_flip():
    rep = verify_integral(QuadraticCandidate(-1.0), decay(3), Box.cube(3), 500, 1.0, 1e-2)
    assert rep.violation_rate >= 0.99


def test_integral_flags_divergence():
    blow = lambda x: 1e6 * x**3  # noqa: E731
    rep = verify_integral(QuadraticCandidate(1.0), blow, Box.cube(1), 20, 5.0, 0.5)
    assert rep.diverged > 0 and rep.violations >= rep.diverged


def test_integral_pointwise_consistency(chain4):
    sys, V = chain4
    # V is quartic near 0, so the decrease margin is checked with h = 0
    h = QuadraticMargin(0.0)
    assert verify_pointwise(V, sys, Box.cube(4), 5000, h, 0.0).violations == 0
    assert verify_integral(V, sys, Box.cube(4), 500, 1.0, 1e-2, h, 1e-7).violations == 0


def test_integral_margin_closed_form():
    x0 = np.array([[0.8], [-0.3]])
    m = integral_margin(QuadraticCandidate(1.0), decay(), x0, 1.0, 1e-3, QuadraticMargin(0.0))
    exact = x0[:, 0] ** 2 * (1 - np.exp(-2.0))
    assert np.allclose(m, exact, atol=1e-10)


class Shift:
    def __init__(self, ref, offset=0.0, scale=1.0):
        self.ref, self.offset, self.scale = ref, offset, scale

    def value(self, X):
        return self.scale * self.ref.value(X) + self.offset


@pytest.fixture(scope="module")
def ref2():
    _, spec = make_chain(ChainSystemConfig(2, 0.1))
    return normalize_to_W1(compose_lyapunov(spec), Box.cube(2).as_arrays())


def test_sup_error_examples(ref2):
    box = Box.cube(2)
    rep = sup_error(ref2, ref2, box, 500)
    assert rep.sup == 0 and rep.rms == 0
    assert sup_error(Shift(ref2, 0.3), ref2, box, 500).sup == pytest.approx(0.3, abs=1e-12)


def test_sup_error_scaled_against_grid(ref2):
    rep = sup_error(Shift(ref2, scale=2.0), ref2, Box.cube(2), 100_000)
    g = np.linspace(-1, 1, 401)
    G = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    oracle = np.max(np.abs(ref2.value(G)))
    assert abs(rep.sup - oracle) <= 0.01 * oracle
