import csv
import math

import numpy as np
import pytest

from lyapnet.experiments import (
    CSV_HEADER,
    ExperimentConfig,
    ScalingRecord,
    TransformConfig,
    alignment_angles,
    fit_power_law,
    minimal_width,
    scaling_sweep,
    transform_recovery,
    write_records_csv,
)
from lyapnet.network import SublayerNet
from lyapnet.sampling import Box
from lyapnet.small_gain import compose_lyapunov, normalize_to_W1
from lyapnet.systems import ChainSystemConfig, make_chain


@pytest.fixture(scope="module")
def chain_ref():
    _, spec = make_chain(ChainSystemConfig(2, 0.1))
    return normalize_to_W1(compose_lyapunov(spec), Box.cube(2).as_arrays())


# ---------------------------------------------------------------- power-law fit


def test_exact_power_law_recovered():
    ns = np.array([2, 4, 6, 8, 16])
    fit = fit_power_law(ns, 7 * ns**2)
    assert abs(fit["slope"] - 2.0) <= 1e-10
    assert abs(fit["intercept"] - math.log(7)) <= 1e-10
    assert abs(fit["r2"] - 1.0) <= 1e-10


def test_affine_growth_has_subquadratic_slope():
    ns = np.arange(4, 17)
    fit = fit_power_law(ns, 3 * ns + 5)
    assert fit["slope"] <= 1.2
    # oracle: ordinary least squares written out by hand
    x, y = np.log(ns), np.log(3 * ns + 5)
    slope = np.sum((x - x.mean()) * (y - y.mean())) / np.sum((x - x.mean()) ** 2)
    assert fit["slope"] == pytest.approx(slope, abs=1e-12)


# ---------------------------------------------------------------- minimal width


class _NetTarget:
    """Reference that a width-1 sublayer network represents exactly."""

    def __init__(self):
        self.net = SublayerNet((1,), 1, seed=11)
        self.net.theta = np.array([1.0, 0.0, 1.3, -0.2, 0.8, 0.1])[: self.net.P]

    def value(self, X):
        return self.net.forward(X)


def test_representable_target_needs_one_neuron():
    target = _NetTarget()
    rec = minimal_width(target, (1,), eps=1e-6, search=(1, 4), seeds=(0, 1, 2), samples=200, steps=300)
    assert rec.M == 1 and rec.sup_err <= 1e-6
    assert rec.verdict == "optimizer-limited"


def test_vacuous_target_returns_lower_bound(chain_ref):
    rec = minimal_width(chain_ref, (1, 1), eps=math.inf, search=(3, 8), seeds=(0,), samples=200, steps=20)
    assert rec.M == 3


def test_minimal_width_monotone_in_eps(chain_ref):
    kw = dict(search=(1, 8), seeds=(0, 1), samples=400, steps=200)
    loose = minimal_width(chain_ref, (1, 1), eps=0.1, **kw)
    tight = minimal_width(chain_ref, (1, 1), eps=0.005, **kw)
    assert loose.found and tight.found
    assert tight.M >= loose.M
    # record invariants: the reported width succeeds, the one below fails
    assert tight.sup_err <= 0.005
    if tight.M > 1:
        assert tight.tried[tight.M - 1] > 0.005


def test_minimal_width_not_found(chain_ref):
    rec = minimal_width(chain_ref, (1, 1), eps=1e-12, search=(1, 2), seeds=(0,), samples=100, steps=10)
    assert not rec.found and rec.M is None and rec.verdict == "not found"


def test_minimal_width_rejects_bad_search(chain_ref):
    with pytest.raises(ValueError):
        minimal_width(chain_ref, (1, 1), search=(0, 4))


# ---------------------------------------------------------------- sweep and records


def test_sweep_needs_three_dimensions():
    with pytest.raises(ValueError):
        scaling_sweep(ExperimentConfig(dims=[2, 4]))
    with pytest.raises(ValueError):
        ExperimentConfig(dims=[])
    with pytest.raises(ValueError):
        ExperimentConfig(dims=[2], eps=0.0)


def test_small_sweep_records_and_fit(tmp_path):
    cfg = ExperimentConfig(dims=[2, 3, 4], eps=0.2, seeds=[0], M_hi=6, samples=300, steps=100)
    records, fit = scaling_sweep(cfg)
    assert [r.n for r in records] == [2, 3, 4]
    assert all(r.found for r in records) and fit["excluded"] == []
    assert all(r.N == r.n * r.M and r.d_max == 1 for r in records)
    path = tmp_path / "records.csv"
    write_records_csv(records, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == CSV_HEADER and len(rows) == 4
    assert all(row[CSV_HEADER.index("wall_ms")] == "" for row in rows[1:])


def test_not_found_record_csv_row():
    rec = ScalingRecord(4, 1, "sublayer", 0.1, None, None, 0.3, None, [0], 12.0, "not found")
    row = rec.csv_row(wall_clock=True)
    assert row[4] == row[5] == row[7] == "" and row[8] == "12" and row[-1] == "not found"


# ---------------------------------------------------------------- transform recovery


def test_alignment_angles_oracle():
    T = np.eye(3)
    # learned rows span the same lines, scaled and permuted across blocks
    W2 = np.array([[0.0, 2.0, 0.0], [0.0, 0.0, -1.0], [5.0, 0.0, 0.0]])
    assert np.allclose(alignment_angles(W2, T, (1, 1, 1), 1), 0.0, atol=1e-12)
    tilt = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    angles = sorted(alignment_angles(tilt, T, (1, 1, 1), 1))
    assert angles[-1] == pytest.approx(np.pi / 4)


def test_identity_warm_start_angles_vanish():
    rep = transform_recovery(TransformConfig(n=4, identity=True, warm_start=True, samples=300, steps=50))
    assert max(rep["assigned_alignment_angles"]) <= 1e-12
    # fine-tuning from the aligned start keeps the blocks aligned
    assert max(rep["trained_alignment_angles"]) <= 1e-3


def test_rotated_n2_recovery():
    rep = transform_recovery(TransformConfig(n=2, samples=1000, steps=400))
    assert rep["representation_max_abs_diff"] <= 1e-12
    assert rep["assigned_sup_error_gap"] <= 1e-10
    assert rep["trained_sup_error"] <= 0.1
