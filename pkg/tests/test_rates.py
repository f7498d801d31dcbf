import csv
import math

import numpy as np
import pytest
import sympy as sy

from opminimax import lowerbound as lb
from opminimax import rates
from opminimax.estimator import InfeasibleError
from opminimax.spectrum import SpectrumProfile

A = math.sqrt(3.0)
B_UNI = 1.0 / (2.0 * A)
EXP1 = SpectrumProfile.exponential(1.0)


def symbolic_upper(lams, m, sigma, B, L, p, d):
    """The upper-bound expression evaluated in exact rationals, then rounded once."""
    lams = [sy.Rational(x) for x in lams]
    k = sy.Rational(m) / sy.Rational(sigma) ** 2
    q = (sy.Rational(p) + 2) * d + 4
    first = (k / sy.sqrt(sy.prod(lams[:d]))) ** (-2 / q) * \
        (sy.Rational(B) ** (2 * sy.Rational(p)) * sy.Rational(L) ** 4 * d ** 4) ** (sy.Rational(d) / (2 * q))
    return float(sy.N(first + sy.Rational(L) * sy.sqrt(sum(lams[d:])), 30))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_upper_matches_symbolic_oracle(d):
    lams = ["0.9", "0.5", "0.2", "0.1"]
    sp = SpectrumProfile.explicit([float(x) for x in lams])
    got = rates.eval_upper_bound(sp, 5000, 0.25, 1.5, 0.8, 2.0, d)
    want = symbolic_upper(lams, 5000, "0.25", "1.5", "0.8", 2, d)
    assert got == pytest.approx(want, rel=1e-12)


def test_upper_tail_dominated():
    got = rates.eval_upper_bound(EXP1, 1e298, 1.0, 1.0, 1.0, 2.0, 3)
    assert got == pytest.approx(math.sqrt(EXP1.tail_sum(3)), abs=1e-9)


def test_upper_infeasible_reports_minimum():
    with pytest.raises(InfeasibleError, match="need m/sigma"):
        rates.eval_upper_bound(EXP1, 10.0, 1.0, 1.0, 1.0, 2.0, 6)


def test_white_limit_matches_hilbert_at_m_over_r():
    r = 4
    white = rates.eval_upper_bound(EXP1, 1e6, 0.1, 1.0, 1.0, 2.0, 3, r=r, noise_kind="white",
                                   t=400.0)
    hilbert = rates.eval_upper_bound(EXP1, 1e6 / r, 0.1, 1.0, 1.0, 2.0, 3)
    assert white == pytest.approx(hilbert, rel=1e-14)
    with pytest.raises(ValueError):
        rates.eval_upper_bound(EXP1, 1e6, 0.1, 1.0, 1.0, 2.0, 3, noise_kind="white")


def test_best_upper_is_minimum_over_d():
    v, d = rates.best_upper_bound(EXP1, 1e8, 0.1, 1.0, 1.0, 2.0, d_max=10)
    others = []
    for dd in range(1, 11):
        try:
            others.append(rates.eval_upper_bound(EXP1, 1e8, 0.1, 1.0, 1.0, 2.0, dd))
        except InfeasibleError:
            pass
    assert v == min(others) and 1 <= d <= 10


def test_lower_saturated_for_tiny_k():
    res = rates.eval_lower_bound(EXP1, 2, 10.0, 1.0, A, B_UNI, 2.0, d_max=1)
    assert res["h_star"] == A / 8


def test_lower_finite_dim_slope():
    sp = SpectrumProfile.explicit([1.0])
    ms = np.logspace(6, 14, 17)
    vals = [rates.eval_lower_bound(sp, m, 1.0, 1.0, A, B_UNI, 2.0)["value"] for m in ms]
    slope = np.polyfit(np.log(ms), np.log(vals), 1)[0]
    assert slope == pytest.approx(-1.0 / 3.0, abs=0.02)


def test_lower_equals_fano_pipeline():
    res = rates.eval_lower_bound(EXP1, 1e5, 0.1, 1.0, A, B_UNI, 2.0, d_max=12, B=1.0)
    inst = lb.build_instance(res["d"], res["h_star"], int(1e5), 0.1, 1.0, 1.0, EXP1, A, B_UNI,
                             2.0, max_code_n=0)
    assert abs(res["value"] - lb.fano_lower_bound(inst)) <= 1e-12


def test_lower_condition_fails_everywhere():
    with pytest.raises(lb.ConditionError):
        rates.eval_lower_bound(EXP1, 1e5, 0.1, 1.0, A, B_UNI, 2.0, d_max=3, B=1e-6)


def test_asymptotic_examples():
    assert rates.asymptotic_log_rate("exp", math.exp(16), C=2.0) == pytest.approx(8.0)
    e2 = math.exp(2)
    assert rates.asymptotic_log_rate("double_exp", math.exp(e2), C=3.0) == pytest.approx(
        3.0 * e2 / 2)
    assert rates.asymptotic_log_rate("alg_upper", math.exp(9)) == pytest.approx(3.0)
    with pytest.raises(ValueError, match="k_min"):
        rates.asymptotic_log_rate("alg_lower", 10.0)
    with pytest.raises(ValueError):
        rates.RateExpression("nope")


def test_exp_exponent_monotone_in_beta():
    k = 1e12
    vals = [rates.asymptotic_log_rate("exp", k, beta=b) for b in (0.5, 1.0, 2.0, 4.0)]
    assert vals == sorted(vals)


def test_band_label_below_one():
    band = rates.exp_band(1e8, 0.5)
    assert band["label"] == "non-tight band" and band["lower"] < band["upper"]
    with pytest.raises(ValueError):
        rates.exp_band(1e8, 1.0)
    rows = rates.rate_rows(SpectrumProfile.exponential(1.0, 0.5), [1e4], 0.1, 1.0, 1.0, 2.0,
                           A, B_UNI)
    assert any("non-tight band" in r["constants"] for r in rows)


def test_sandwich_on_grid():
    rows = rates.rate_rows(EXP1, [10.0 ** e for e in range(2, 12)], 0.1, 1.0, 1.0, 2.0, A,
                           B_UNI)
    by_m = {}
    for r in rows:
        by_m.setdefault(r["m"], {})[r["quantity"]] = r["value"]
    for m, q in by_m.items():
        assert q["lower"] <= q["upper"], m


@pytest.mark.parametrize("q", [0.1, 0.5, 1.0])
def test_no_algebraic_decay_witness(q):
    # the lower bound eventually beats every power k^-q
    ks = [10.0 ** e for e in (100, 150, 198)]
    logs = [math.log(rates.eval_lower_bound(EXP1, k * 0.01, 0.1, 1.0, A, B_UNI, 2.0,
                                            B=1.0)["value"]) + q * math.log(k) for k in ks]
    assert logs[-1] > 0 and logs == sorted(logs)


def test_upper_exponent_fits_sqrt_log_k():
    ks = np.logspace(4, 60, 30)
    y = [-math.log(rates.best_upper_bound(EXP1, k * 0.01, 0.1, 1.0, 1.0, 2.0)[0]) for k in ks]
    x = np.sqrt(np.log(ks))
    r2 = np.corrcoef(x, y)[0, 1] ** 2
    assert r2 >= 0.99


def test_rate_csv(tmp_path):
    rows = rates.rate_rows(EXP1, [1e3, 1e5], 0.1, 1.0, 1.0, 2.0, A, B_UNI)
    path = tmp_path / "rates.csv"
    rates.write_rate_csv(rows, path)
    with open(path) as fh:
        read = list(csv.DictReader(fh))
    assert tuple(read[0]) == rates.RATE_COLUMNS
    assert {r["quantity"] for r in read} == {"upper", "lower", "log_rate"}
    assert all("C=1.0" in r["constants"] for r in read)
    up = next(r for r in rows if r["quantity"] == "upper")
    assert float(read[0]["value"]) == up["value"]
