import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lyapnet.comparison import (
    KinfWrapped,
    Linear,
    Power,
    SatLinear,
    adaptive_simpson,
    compose,
    divergence_evidence,
    evaluate,
    from_json,
    integrate_profile,
)

pos = st.floats(min_value=0.05, max_value=20.0)
kinf = st.one_of(st.builds(Linear, pos), st.builds(Power, pos, st.floats(0.2, 4.0)))
posdef = st.one_of(st.builds(SatLinear, pos, pos), st.builds(KinfWrapped, kinf))


def test_eval_examples():
    assert evaluate(Linear(0.5), 2.0) == 1.0
    assert evaluate(SatLinear(1, 1), 3.0) == 1.0
    assert evaluate(Power(2, 2), 1.5) == 4.5


@pytest.mark.parametrize("fn", [Linear(1.0), Power(1.0, 0.5), SatLinear(1.0, 2.0), KinfWrapped(Linear(3.0))])
def test_negative_argument_rejected(fn):
    with pytest.raises(ValueError):
        fn(-1e-9)
    assert fn(0.0) == 0.0


def test_kinf_unbounded():
    for fn in (Linear(0.1), Power(0.1, 0.3)):
        assert fn(1e6) > fn(1e3) > 0


def test_bounded_sup():
    assert SatLinear(2.0, 0.5).sup == 0.5
    assert math.isinf(KinfWrapped(Linear(1.0)).sup)


def test_compose_examples():
    assert compose(SatLinear(1, 1), Linear(1))(0.5) == 0.5
    assert compose(SatLinear(1, 1), Linear(2))(3.0) == 1.0
    assert compose(SatLinear(1, 1), Linear(1.8))(0.4) == pytest.approx(0.72, abs=1e-15)


def test_integrate_examples():
    p1 = compose(SatLinear(1, 1), Linear(1))  # min(t, 1)
    p2 = compose(SatLinear(1, 1), Linear(2))  # min(2t, 1)
    assert integrate_profile(p1, 0.5, 1e-10) == pytest.approx(0.125, abs=1e-10)
    assert integrate_profile(p2, 2.0, 1e-10) == pytest.approx(1.75, abs=1e-10)
    assert integrate_profile(p1, 0.0, 1e-10) == 0.0
    with pytest.raises(ValueError):
        integrate_profile(p1, math.inf, 1e-10)


def _closed_form_satlinear_linear(slope, alpha_slope, u):
    # integral of min(slope*alpha_slope*t, 1) over [0, u]
    k = slope * alpha_slope
    knee = 1.0 / k
    return 0.5 * k * u * u if u <= knee else 0.5 * k * knee * knee + (u - knee)


@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0), st.floats(0.0, 10.0))
def test_quadrature_matches_closed_form(slope, alpha_slope, u):
    p = compose(SatLinear(slope, 1.0), Linear(alpha_slope))
    assert abs(integrate_profile(p, u, 1e-10) - _closed_form_satlinear_linear(slope, alpha_slope, u)) <= 1e-10


@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_quadrature_additive(a, b):
    a, b = min(a, b), max(a, b)
    p = compose(KinfWrapped(Power(1.0, 1.5)), Linear(0.7))
    tol = 1e-10
    middle = adaptive_simpson(lambda t: float(p(t)), a, b, tol)
    assert abs(integrate_profile(p, a, tol) + middle - integrate_profile(p, b, tol)) <= 2 * tol


@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_quadrature_monotone(a, b):
    p = compose(SatLinear(1.0, 1.0), Power(2.0, 0.5))
    lo, hi = min(a, b), max(a, b)
    assert integrate_profile(p, lo) <= integrate_profile(p, hi) + 1e-10


@settings(max_examples=50)
@given(st.one_of(kinf, posdef), st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_monotone(fn, r1, r2):
    lo, hi = min(r1, r2), max(r1, r2)
    assert fn(lo) <= fn(hi)
    if hi > lo and isinstance(fn, (Linear, Power)):
        assert fn(lo) < fn(hi)


@given(st.one_of(kinf, posdef))
def test_positive_definite(fn):
    assert fn(0.0) == 0.0
    assert fn(1e-3) > 0


@given(st.one_of(kinf, posdef))
def test_json_roundtrip(fn):
    assert from_json(fn.to_json()) == fn


def test_json_rejects_unknown():
    with pytest.raises(ValueError):
        from_json({"kind": "relu"})


def test_profile_nonnegative_and_zero_at_origin():
    p = compose(SatLinear(1, 1), Linear(1.8))
    t = np.linspace(0, 5, 101)
    assert p(0.0) == 0.0
    assert np.all(p(t) >= 0)


@pytest.mark.parametrize(
    "eta, alpha",
    [(SatLinear(1, 1), Linear(1.8)), (SatLinear(0.1, 2.0), Power(1.0, 0.5)), (KinfWrapped(Linear(1.0)), Power(2.0, 2.0))],
)
def test_divergence_evidence(eta, alpha):
    assert divergence_evidence(eta, alpha)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=20))
def test_batch_quadrature_matches_scalar(uppers):
    p = compose(SatLinear(1.0, 1.0), Power(1.3, 0.7))
    batch = integrate_profile(p, np.array(uppers), 1e-10)
    for u, got in zip(uppers, batch):
        assert got == pytest.approx(integrate_profile(p, u, 1e-10), abs=1e-13)
        # the recursive scalar rule agrees too (pieces split at the kink)
        kink = p.breakpoints()[0]
        cuts = [0.0] + ([kink] if 0 < kink < u else []) + [u]
        ref = sum(adaptive_simpson(lambda t: float(p(t)), a, b, 1e-10 / (len(cuts) - 1)) for a, b in zip(cuts[:-1], cuts[1:]))
        assert got == pytest.approx(ref, abs=1e-12)
