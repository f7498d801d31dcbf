import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opminimax.estimator import (HistogramEstimator, HistogramPartition, InfeasibleError, fit,
                                 select_parameters)
from opminimax.measure import InputMeasure, make_fixed_design, sample_input
from opminimax.noise import NoiseModel, observe
from opminimax.operators import tent_operator
from opminimax.risk import empirical_risk
from opminimax.spectrum import SpectrumProfile

SP = SpectrumProfile.explicit([1.0, 0.5, 0.25])


def test_cell_index_boundaries():
    part = HistogramPartition(2, 1.0, (4, 2), SP)
    assert part.cell_index(np.zeros(2)) == (2, 1)  # 0 opens the interval to its right
    far = np.array([2 * math.sqrt(part.R * 1.0), 0.0])
    assert part.cell_index(far) is None
    hw = part.half_widths
    assert part.cell_index(hw) == (3, 1)  # closed last interval
    assert part.cell_index(-hw) == (0, 0)


def test_partition_frequencies_and_containment():
    part = HistogramPartition(3, 2.0, (3, 2, 5), SP)
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(100_000, 3)) * part.half_widths
    flat = part.locate(X)
    assert np.all((flat >= 0) & (flat < part.n))
    lo, hi = part.cell_bounds(part.unflatten(flat))
    assert np.all((X >= lo) & (X <= hi))
    counts = np.bincount(flat, minlength=part.n)
    p = 1 / part.n
    assert np.all(np.abs(counts - X.shape[0] * p) <= 3 * math.sqrt(X.shape[0] * p * (1 - p)) + 1)
    out = X * 1.5
    outside = np.any(np.abs(out) > part.half_widths, axis=1)
    assert np.all(part.locate(out)[outside] == -1)


def test_fit_hand_computed():
    part = HistogramPartition(1, 1.0, (2,), SpectrumProfile.explicit([1.0]))
    X = np.array([[-0.7], [-0.2], [0.3], [0.9], [5.0]])
    Y = np.array([[1.0, 2.0], [3.0, 4.0], [10.0, 0.0], [20.0, 2.0], [99.0, 99.0]])
    est = fit(X, Y, part)
    assert est.cell_means[0].tolist() == [2.0, 3.0]
    assert est.cell_means[1].tolist() == [15.0, 1.0]
    assert est.counts.tolist() == [2, 2]
    assert est(np.array([[7.0]])).tolist() == [[0.0, 0.0]]  # outside D
    trunc = fit(X, Y, part, r=1)
    assert trunc(np.array([[0.5]])).tolist() == [[15.0, 0.0]]


def test_empty_cells_predict_zero():
    part = HistogramPartition(1, 1.0, (4,), SpectrumProfile.explicit([1.0]))
    est = fit(np.array([[0.9]]), np.array([[3.0]]), part)
    assert est(np.array([[-0.9]]))[0, 0] == 0.0


def test_constant_and_idempotent_fit():
    part = HistogramPartition(2, 1.5, (3, 4), SP)
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, size=(500, 2)) * part.half_widths
    Y = np.tile([1.5, -2.0, 0.25], (500, 1))
    est = fit(X, Y, part, r=2)
    assert np.all(est.means == [1.5, -2.0, 0.0])
    # cellwise-constant target reproduced exactly at the data points
    table = rng.normal(size=(part.n, 3))
    Yc = table[part.locate(X)]
    est2 = fit(X, Yc, part)
    np.testing.assert_array_equal(est2(X), Yc)


def test_json_round_trip_is_bit_exact():
    part = HistogramPartition(2, 1.5, (3, 4), SP)
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, size=(200, 2)) * part.half_widths
    est = fit(X, rng.normal(size=(200, 3)), part, r=2)
    back = HistogramEstimator.from_json(est.to_json())
    assert np.array_equal(back.means, est.means) and np.array_equal(back.keys, est.keys)
    assert back.r == 2 and back.partition == est.partition


def test_select_flat_spectrum_closed_form():
    sp = SpectrumProfile.explicit([1.0])
    m, sigma = 400, 0.5
    sel = select_parameters(m, sigma, sp, 1.0, 1.0, 2.0, d=1)
    k = m / sigma ** 2
    # q = (p+2)d + 4 = 8, c = k^(4/8) * (1 * 1 * 1)^(1/8)
    assert sel.c == pytest.approx(math.sqrt(k), rel=1e-12)
    assert sel.n_i == (math.floor(math.sqrt(k)),)


def test_select_algebraic_regime_d():
    sp = SpectrumProfile.algebraic(2.0)
    k = 1e6
    want = math.floor(4 / 8 * math.log(k) / math.log(math.log(k)))
    assert want == 2
    sel = select_parameters(int(k), 1.0, sp, 1.0, 1.0, 2.0)
    assert sel.d == 2


def test_select_feasibility_boundary():
    # flat spectrum, B = L = 1, p = 2, d = 1: c = sqrt(k), so k = 1 gives c sqrt(lambda_1) = 1
    sel = select_parameters(1, 1.0, SpectrumProfile.explicit([1.0]), 1.0, 1.0, 2.0, d=1)
    assert sel.margin == 0.0 and sel.n_i == (1,)


def test_select_infeasible_names_min_k():
    sp = SpectrumProfile.exponential(1.0)
    with pytest.raises(InfeasibleError) as info:
        select_parameters(2, 1.0, sp, 1.0, 1.0, 2.0, d=5)
    assert info.value.min_k > 2
    sel = select_parameters(int(math.ceil(info.value.min_k * 1.0001)), 1.0, sp, 1.0, 1.0, 2.0, d=5)
    assert sel.feasible


def test_select_shrinks_d():
    sp = SpectrumProfile.exponential(1.0)
    sel = select_parameters(100, 0.1, sp, 1.0, 1.0, 2.0, c_prime=0.01)
    assert any("reduced" in n for n in sel.notes)
    assert sel.c * math.sqrt(sp.eigenvalue(sel.d)) >= 1


def test_select_white_rank():
    sp = SpectrumProfile.exponential(1.0)
    m, sigma = 10_000, 0.1
    sel = select_parameters(m, sigma, sp, 1.0, 1.0, 2.0, "white")
    lk = math.log(m / sigma ** 2)
    assert math.log(sel.r) >= math.sqrt(lk) - 1e-12
    assert math.log(sel.r - 1) < math.sqrt(lk)
    assert sel.k == pytest.approx(m / (sel.r * sigma ** 2))


@settings(max_examples=40, deadline=None)
@given(st.floats(1e2, 1e9), st.floats(1.0, 3.0), st.sampled_from(["exp", "alg"]))
def test_selection_always_feasible(k, p, kind):
    sp = SpectrumProfile.exponential(1.0) if kind == "exp" else SpectrumProfile.algebraic(2.0)
    try:
        sel = select_parameters(int(k), 1.0, sp, 1.0, 1.0, p)
    except InfeasibleError:
        return
    assert min(sel.n_i) >= 1
    assert sel.c * math.sqrt(sp.eigenvalue(sel.d)) >= 1 - 1e-9
    assert sel.R > 0


def test_bias_bound_noiseless():
    sp = SpectrumProfile.exponential(1.0)
    meas = InputMeasure.build(sp, "uniform", 8)
    sel = select_parameters(5000, 0.1, sp, 1.0, 1.0, 2.0, c_scale=0.3)
    part = sel.partition(sp)
    op = tent_operator(sel.d, sp, 1.0)
    des = make_fixed_design(part, part.n, 8)
    data = observe(op, des, NoiseModel.hilbert(0.0, 1), np.random.default_rng(0))
    est = fit(data.X, data.Y, part)
    risk = empirical_risk(op, est, 2.0, meas, 200_000, np.random.default_rng(1))
    lam = sp.eigenvalues(sel.d)
    bound = math.sqrt(part.R) * math.sqrt(np.sum(lam / np.asarray(part.n_i, float) ** 2))
    assert risk.value <= bound * (1 + 1.5 * risk.mc_std_err / risk.value)


def test_truncation_monotonicity():
    sp = SpectrumProfile.explicit([1.0])
    meas = InputMeasure.build(sp, "uniform", 1)
    part = HistogramPartition(1, 3.0, (16,), sp)
    unit = 1.0
    v = np.arange(1, 9, dtype=float) ** -1.5
    from opminimax.operators import profile_operator, tent

    op = profile_operator(lambda X: tent(X, 1, sp), unit, 1.0, v, t=1.0)
    des = make_fixed_design(part, 1024)
    data = observe(op, des, NoiseModel.hilbert(0.3, 8), np.random.default_rng(2))
    full = empirical_risk(op, fit(data.X, data.Y, part), 2.0, meas, 100_000,
                          np.random.default_rng(3))
    for r in (1, 2, 4):
        tr = empirical_risk(op, fit(data.X, data.Y, part, r), 2.0, meas, 100_000,
                            np.random.default_rng(3))
        se = math.hypot(tr.mc_std_err, full.mc_std_err)
        assert tr.value >= full.value - op.B * r ** -1.0 - 1.5 * se
