"""Invariant suite behind ``opminimax run verify``.

Every check returns ``(name, passed, detail)``. The oracles here are
deliberately written without the code paths they check: Hamming distances
by string comparison, box overlaps by explicit interval tests, KL by a dense
Gaussian quadratic form.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import lowerbound as lb
from .estimator import HistogramPartition
from .measure import CoordinateLaw, InputMeasure
from .operators import bump_functional
from .spectrum import SpectrumProfile


def gaussian_kl_mean_shift(delta_mu: np.ndarray, cov: np.ndarray) -> float:
    """``D(N(mu1, S) || N(mu0, S)) = 0.5 * dmu^T S^-1 dmu``."""
    delta_mu = np.asarray(delta_mu, dtype=float).ravel()
    return 0.5 * float(delta_mu @ np.linalg.solve(cov, delta_mu))


def check_vg(ns=(8, 16, 24, 32, 48), seed: int = 0):
    out = []
    for n in ns:
        code = lb.vg_code(n, np.random.default_rng([seed, n]))
        words = ["".join(map(str, w)) for w in code.words.tolist()]
        dmin = min(sum(x != y for x, y in zip(u, v)) for u, v in itertools.combinations(words, 2))
        ok = words[0] == "0" * n and code.M >= 2 ** (n / 8) and dmin >= n / 8
        out.append((f"vg_code n={n}", ok, f"M={code.M} min_hamming={dmin}"))
    return out


def _boxes_ok(centers, h, a) -> bool:
    for c in centers:
        if any(x - h < -a - 1e-12 or x + h > a + 1e-12 for x in c):
            return False
    for c1, c2 in itertools.combinations(centers.tolist(), 2):
        if all(abs(x - y) < 2 * h - 1e-12 for x, y in zip(c1, c2)):
            return False
    return True


def check_packing(seed: int = 0):
    out = []
    c = lb.packing_centers(1.0, 0.125, 2)
    out.append(("packing a=1 h=1/8 d=2 count", c.shape[0] == 64, f"{c.shape[0]} centers"))
    c1 = lb.packing_centers(1.0, 0.125, 1).ravel()
    want = np.arange(-7, 8, 2) / 8.0
    out.append(("packing a=1 h=1/8 d=1 centers", bool(np.allclose(c1, want, atol=1e-15)),
                str(c1.tolist())))
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(20):
        a = float(rng.uniform(0.5, 3.0))
        h = a / float(rng.uniform(8.0, 14.0))
        d = int(rng.integers(1, 3))
        if not _boxes_ok(lb.packing_centers(a, h, d), h, a):
            bad += 1
    out.append(("packing containment and disjointness", bad == 0, f"{bad} failures of 20"))
    return out


def check_separation(n_mc: int = 200_000, seed: int = 0):
    """Uniform law: the MC distance must match the closed form within 3 standard errors."""
    out = []
    spectrum = SpectrumProfile.explicit([1.0, 0.5])
    measure = InputMeasure.build(spectrum, "uniform", 2)
    law = CoordinateLaw("uniform")
    for d, p in itertools.product((1, 2), (1.0, 2.0)):
        rng = np.random.default_rng([seed, d, int(p)])
        inst = lb.build_instance(d, law.a / 8, 10, 1.0, 1.0, 10.0, spectrum, law.a, law.b, p,
                                 rng=rng)
        res = lb.separation_check(inst, (1, 2), p, measure, n_mc, rng)
        z = abs(res["mc_distance"] - res["theoretical_floor"]) / res["mc_std_err"]
        out.append((f"separation uniform d={d} p={p:g}", z <= 3.0,
                    f"mc={res['mc_distance']:.6g} floor={res['theoretical_floor']:.6g} z={z:.2f}"))
    return out


def random_kl_instance(rng: np.random.Generator):
    """Small random instance plus design points for the KL oracle comparison."""
    d = int(rng.integers(1, 3))
    law = CoordinateLaw(str(rng.choice(["uniform", "gaussian"])))
    a = law.a
    h = a / (8.0 + rng.uniform(0.0, 0.99)) if d == 2 else a / float(rng.uniform(8.0, 40.0))
    lam = np.sort(rng.uniform(0.05, 2.0, size=2))[::-1]
    spectrum = SpectrumProfile.explicit(lam.tolist())
    sigma = float(rng.uniform(0.05, 2.0))
    L = float(rng.uniform(0.2, 3.0))
    m = int(rng.integers(1, 17))
    kind = str(rng.choice(["hilbert", "white"]))
    coeff_dim = int(rng.integers(1, 5))
    if kind == "hilbert":
        ups = 0.5 ** np.arange(1, coeff_dim + 1)
    else:
        ups = np.ones(coeff_dim)
    inst = lb.build_instance(d, h, m, sigma, L, 1e6, spectrum, a, law.b, 2.0, kind,
                             float(ups[0]), rng=rng)
    # half the points near bump centers so the mean shift is not trivially zero
    pts = rng.uniform(-a, a, size=(m, d))
    near = rng.random(m) < 0.5
    pick = inst.centers[rng.integers(0, inst.n, size=m)]
    pts[near] = pick[near] + rng.uniform(-h, h, size=(int(near.sum()), d))
    X = np.zeros((m, 2))
    X[:, :d] = pts * np.sqrt(lam[:d])
    return inst, X, ups


def kl_oracle(inst, j: int, X: np.ndarray, ups: np.ndarray) -> float:
    m, coeff_dim = X.shape[0], ups.size
    mean = np.zeros((m, coeff_dim))
    mean[:, 0] = bump_functional(inst.params[j], X)  # lifted along the first output direction
    cov = np.diag(np.tile(inst.sigma ** 2 * ups, m))
    return gaussian_kl_mean_shift(mean.ravel(), cov)


def check_kl(instances: int = 100, seed: int = 0):
    rng = np.random.default_rng([seed, 7])
    worst = 0.0
    over_budget = 0
    for _ in range(instances):
        inst, X, ups = random_kl_instance(rng)
        for j in range(inst.M + 1):
            got = lb.exact_kl(inst, j, X)
            want = kl_oracle(inst, j, X, ups)
            if want > 0:
                worst = max(worst, abs(got - want) / want)
            elif got != 0:
                worst = math.inf
            if got > inst.kl_budget * (1 + 1e-12):
                over_budget += 1
    return [("KL matches Gaussian oracle", worst <= 1e-10, f"max rel err {worst:.3g}"),
            ("KL within budget", over_budget == 0, f"{over_budget} over budget")]


def check_fano_arithmetic():
    got = lb.fano_factor(2)
    want = (math.sqrt(2) / (1 + math.sqrt(2))) * (1 - 1 / 8 - 2 * math.sqrt(1 / (16 * math.log(2))))
    return [("fano factor M=2", abs(got - want) <= 1e-15, f"{got:.10f}")]


def check_optimize_h(seed: int = 0):
    rng = np.random.default_rng([seed, 11])
    law = CoordinateLaw("uniform")
    bad = []
    for _ in range(25):
        d = int(rng.integers(1, 4))
        spectrum = SpectrumProfile.exponential(float(rng.uniform(0.3, 1.5)))
        m = int(10 ** rng.uniform(1, 7))
        sigma = float(10 ** rng.uniform(-2, 0))
        kind = str(rng.choice(["hilbert", "white"]))
        res = lb.optimize_h(d, m, sigma, 1.0, spectrum, law.a, law.b, 2.0, kind)
        inst = lb.build_instance(d, res["h_star"], m, sigma, 1.0, 1e6, spectrum, law.a, law.b,
                                 2.0, kind, max_code_n=0)
        if not inst.condition_holds or abs(inst.lower_bound_value - res["bound"]) > 1e-12:
            bad.append((d, m, sigma, kind))
    return [("optimize_h satisfies the KL condition", not bad, f"failures: {bad}")]


def check_partition(seed: int = 0):
    rng = np.random.default_rng([seed, 13])
    spectrum = SpectrumProfile.algebraic(2.0)
    part = HistogramPartition(3, 2.5, (5, 4, 3), spectrum)
    X = rng.uniform(-1, 1, size=(50_000, 3)) * part.half_widths
    X[:100] = part.half_widths * rng.choice([-1.0, 1.0], size=(100, 3))  # corners
    flat = part.locate(X)
    ok = bool(np.all(flat >= 0) and np.all(flat < part.n))
    # each point must sit inside the box of the cell it was assigned
    lo, hi = part.cell_bounds(part.unflatten(flat))
    inside = bool(np.all((X >= lo - 1e-12) & (X <= hi + 1e-12)))
    return [("partition covers D exactly once", ok and inside, f"{X.shape[0]} points")]


def run_all(vg_n=(8, 16, 24, 32, 48), separation_n_mc: int = 200_000, kl_instances: int = 100,
            seed: int = 0):
    checks = []
    checks += check_vg(vg_n, seed)
    checks += check_packing(seed)
    checks += check_separation(separation_n_mc, seed)
    checks += check_kl(kl_instances, seed)
    checks += check_fano_arithmetic()
    checks += check_optimize_h(seed)
    checks += check_partition(seed)
    return checks
