import math

import numpy as np
import pytest

from opminimax.estimator import HistogramPartition
from opminimax.measure import (CoordinateLaw, InputMeasure, make_fixed_design, make_random_design,
                               sample_input)
from opminimax.spectrum import SpectrumProfile


def test_law_constants():
    u, g = CoordinateLaw("uniform"), CoordinateLaw("gaussian")
    assert u.a == pytest.approx(math.sqrt(3)) and u.b == pytest.approx(1 / (2 * math.sqrt(3)))
    assert u.iota == pytest.approx(1.0)
    assert g.a == 1.0 and g.b == pytest.approx(0.2419707245, rel=1e-9)
    assert g.iota == pytest.approx(0.4839414490, rel=1e-9)


@pytest.mark.parametrize("kind", ["uniform", "gaussian"])
def test_density_floor(kind):
    law = CoordinateLaw(kind)
    grid = np.linspace(-law.a, law.a, 10_000)
    assert law.density(grid).min() >= law.b * (1 - 1e-12)


@pytest.mark.parametrize("kind,q", [("uniform", 3.0), ("gaussian", 3.0), ("gaussian", 4.0)])
def test_abs_moment(kind, q):
    law = CoordinateLaw(kind)
    xi = law.sample(np.random.default_rng(1), 1_000_000)
    assert np.mean(np.abs(xi) ** q) == pytest.approx(law.abs_moment(q), rel=0.1)
    if kind == "gaussian" and q == 4.0:
        assert law.abs_moment(q) == pytest.approx(3.0)  # double factorial 3!!


def test_sample_variance_support_and_independence():
    sp = SpectrumProfile.exponential(0.5)
    meas = InputMeasure.build(sp, "uniform", 5)
    X = sample_input(meas, 100_000, np.random.default_rng(2))
    assert X.shape == (100_000, 5)
    np.testing.assert_allclose(X.var(axis=0), sp.eigenvalues(5), rtol=0.05)
    assert np.all(np.abs(X) <= np.sqrt(3 * sp.eigenvalues(5)))
    C = np.corrcoef(X.T)
    off = C[~np.eye(5, dtype=bool)]
    assert np.abs(off).max() <= 3 / math.sqrt(X.shape[0])


def test_sample_rejects_zero_count():
    meas = InputMeasure.build(SpectrumProfile.explicit([1.0]), "uniform", 1)
    with pytest.raises(ValueError):
        sample_input(meas, 0, np.random.default_rng(0))


def test_tail_energy():
    sp = SpectrumProfile.algebraic(2.0)
    meas = InputMeasure.build(sp, "gaussian", 7)
    assert meas.tail_energy == sp.tail_sum(7)


def test_fixed_design_counts_and_round_trip():
    part = HistogramPartition(2, 1.5, (2, 2), SpectrumProfile.explicit([1.0, 0.5]))
    des = make_fixed_design(part, 8, dim=4)
    flat = part.locate(des.points)
    assert np.bincount(flat, minlength=4).tolist() == [2, 2, 2, 2]
    assert np.all(des.points[:, 2:] == 0)
    # each point comes from the cell whose midpoint it is, in flat order
    assert flat.tolist() == [0, 0, 1, 1, 2, 2, 3, 3]
    with pytest.raises(ValueError):
        make_fixed_design(part, 3)


def test_fixed_design_rounds_down():
    part = HistogramPartition(1, 1.0, (3,), SpectrumProfile.explicit([1.0]))
    des = make_fixed_design(part, 10)
    assert des.m == 9 and des.m_requested == 10


def test_random_design_support_and_cell_frequencies():
    sp = SpectrumProfile.explicit([1.0, 0.25, 0.1])
    R, d, m = 2.0, 2, 100_000
    des = make_random_design(R, d, sp, m, np.random.default_rng(3), dim=3)
    assert np.all(np.abs(des.points[:, :d]) <= np.sqrt(R * sp.eigenvalues(d)))
    assert np.all(des.points[:, d:] == 0)
    part = HistogramPartition(d, R, (3, 4), sp)
    counts = np.bincount(part.locate(des.points), minlength=12)
    p = 1 / 12
    assert np.all(np.abs(counts - m * p) <= 3 * math.sqrt(m * p * (1 - p)) + 1)


def test_design_csv(tmp_path):
    part = HistogramPartition(1, 1.0, (2,), SpectrumProfile.explicit([1.0]))
    des = make_fixed_design(part, 2)
    des.to_csv(tmp_path / "d.csv")
    rows = (tmp_path / "d.csv").read_text().splitlines()
    assert rows[0] == "x1" and len(rows) == 3
