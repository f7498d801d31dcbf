"""Monte Carlo Bochner risk and risk-versus-m curves."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .estimator import InfeasibleError, fit, select_parameters
from .measure import InputMeasure, make_fixed_design, make_random_design, sample_input
from .noise import NoiseModel, observe, pad_outputs

CHUNK = 1 << 15

CURVE_COLUMNS = ("m", "trial_count", "mean_risk", "std_err", "d", "R", "c", "r", "feasible",
                 "seed", "m_effective", "n_cells", "tail_energy", "lower_bound", "lower_bound_d",
                 "note")


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    mc_std_err: float
    n_mc: int
    p: float
    tail_energy_neglected: float


def merge_moments(mean: float, m2: float, count: int, v: np.ndarray) -> tuple[float, float]:
    """Chan's pairwise update of (mean, sum of squared deviations) with a new chunk."""
    n_b = v.size
    shifted = v - v[0]  # exact zeros for a constant chunk
    mean_b = float(v[0] + shifted.mean())
    m2_b = float(np.sum((shifted - shifted.mean()) ** 2))
    n = count + n_b
    delta = mean_b - mean
    return mean + delta * n_b / n, m2 + m2_b + delta * delta * count * n_b / n


def empirical_risk(F_true: Callable, F_hat: Callable, p: float, measure: InputMeasure,
                   n_mc: int, rng: np.random.Generator) -> RiskEstimate:
    """``(E ||F(X) - F_hat(X)||^p)^(1/p)`` over ``n_mc`` fresh draws from ``measure``.

    Outputs of different widths are zero-padded to a common width. The
    standard error of the p-th root comes from the delta method.
    """
    if not 1 <= p < math.inf:
        raise ValueError("p must lie in [1, inf)")
    if n_mc < 2:
        raise ValueError("n_mc must be >= 2")
    mean = m2 = 0.0
    done = 0
    while done < n_mc:
        size = min(CHUNK, n_mc - done)
        X = sample_input(measure, size, rng)
        a = np.atleast_2d(F_true(X))
        b = np.atleast_2d(F_hat(X))
        width = max(a.shape[1], b.shape[1])
        diff = pad_outputs(a, width) - pad_outputs(b, width)
        v = np.linalg.norm(diff, axis=1) ** p
        mean, m2 = merge_moments(mean, m2, done, v)
        done += size
    se_mean = math.sqrt(m2 / (n_mc - 1) / n_mc)
    value = mean ** (1.0 / p)
    se = 0.0 if mean == 0.0 else se_mean * mean ** (1.0 / p - 1.0) / p
    return RiskEstimate(value, se, n_mc, p, measure.tail_energy)


@dataclass
class RiskCurve:
    rows: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def feasible_rows(self) -> list[dict]:
        return [r for r in self.rows if r["feasible"] and math.isfinite(r["mean_risk"])
                and r["mean_risk"] > 0]

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in self.rows:
                w.writerow({k: _fmt(row.get(k, "")) for k in CURVE_COLUMNS})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


@dataclass(frozen=True)
class CurveSpec:
    """Everything one risk-curve needs, in picklable form."""

    measure: InputMeasure
    operator_factory: Callable  # () -> TestOperator; module-level for pickling
    noise: NoiseModel
    p: float
    m_grid: tuple[int, ...]
    trials: int
    n_mc: int
    seed: int
    design: str = "fixed"
    selection: dict = field(default_factory=dict)
    lower_bound: Callable | None = None  # (m) -> (value, d) or None


def trial_seed(seed: int, m_index: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(m_index, trial))


def _select(spec: CurveSpec, m: int, op):
    sel = dict(spec.selection)
    sigma = sel.pop("sigma", spec.noise.sigma)  # lets noiseless runs reuse a noisy partition
    return select_parameters(m, sigma, spec.measure.spectrum, op.B, op.L, spec.p,
                             spec.noise.kind, **sel)


def run_trial(spec: CurveSpec, m: int, m_index: int, trial: int) -> tuple[float, float, int]:
    """One (design, observe, fit, risk) pass; returns (risk, mc_se, m_effective)."""
    op = spec.operator_factory()
    selection = _select(spec, m, op)
    partition = selection.partition(spec.measure.spectrum)
    streams = trial_seed(spec.seed, m_index, trial).spawn(3)
    design_rng, noise_rng, mc_rng = (np.random.default_rng(s) for s in streams)
    dim = spec.measure.sim_dim
    if spec.design == "fixed":
        design = make_fixed_design(partition, m, dim)
    else:
        design = make_random_design(partition.R, partition.d, spec.measure.spectrum, m,
                                    design_rng, dim)
    data = observe(op, design, spec.noise, noise_rng)
    est = fit(data.X, data.Y, partition, selection.r if spec.noise.kind == "white" else None)
    risk = empirical_risk(op, est, spec.p, spec.measure, spec.n_mc, mc_rng)
    return risk.value, risk.mc_std_err, design.m


def _run_one(args):
    spec, m, m_index, trial = args
    return run_trial(spec, m, m_index, trial)


def risk_curve(spec: CurveSpec, workers: int = 1) -> RiskCurve:
    """Mean risk over independent trials for every ``m`` in the grid.

    Seeds derive from ``(seed, m index, trial)``, so results do not depend on
    the worker count. Infeasible grid points become rows marked infeasible.
    """
    op = spec.operator_factory()
    job_spec = replace(spec, lower_bound=None)  # evaluated here; workers never need it
    jobs = []
    rows = []
    for mi, m in enumerate(spec.m_grid):
        row = {"m": int(m), "trial_count": spec.trials, "seed": spec.seed, "feasible": True,
               "note": "", "tail_energy": spec.measure.tail_energy}
        try:
            sel = _select(spec, m, op)
            if spec.design == "fixed" and m < sel.n:
                raise InfeasibleError(f"fixed design needs m >= n={sel.n}", float("nan"))
        except InfeasibleError as exc:
            row.update(feasible=False, note=str(exc), mean_risk=float("nan"),
                       std_err=float("nan"), trial_count=0)
            rows.append(row)
            continue
        row.update(d=sel.d, R=float(sel.R), c=float(sel.c), r=sel.r, n_cells=sel.n,
                   note="; ".join(sel.notes))
        rows.append(row)
        jobs.extend((job_spec, int(m), mi, t) for t in range(spec.trials))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=1))
    else:
        results = [_run_one(j) for j in jobs]

    by_m: dict[int, list] = {}
    for (_, m, mi, t), res in zip(jobs, results):
        by_m.setdefault(mi, []).append((t, res))
    for mi, row in enumerate(rows):
        if not row["feasible"]:
            continue
        trials = [res for _, res in sorted(by_m[mi], key=lambda x: x[0])]
        vals = np.array([t[0] for t in trials])
        row["mean_risk"] = float(vals.mean())
        row["std_err"] = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 \
            else float(trials[0][1])
        row["m_effective"] = int(trials[0][2])
        if spec.lower_bound is not None:
            lb = spec.lower_bound(row["m"])
            if lb is not None:
                row["lower_bound"], row["lower_bound_d"] = float(lb[0]), int(lb[1])
    return RiskCurve(rows, {"p": spec.p, "design": spec.design, "selection": spec.selection})


ABSCISSAE = ("log_m", "log_k_power", "log_k_over_loglog")


def fit_rate(m, risk, abscissa: str = "log_m", sigma: float = 1.0,
             gamma: float = 0.5) -> dict:
    """OLS of ``-log(risk)`` on the chosen abscissa.

    ``log_m``: ``log m``; ``log_k_power``: ``(log k)^gamma``;
    ``log_k_over_loglog``: ``log k / log log k``, with ``k = m / sigma^2``.
    """
    m = np.asarray(m, dtype=float)
    risk = np.asarray(risk, dtype=float)
    ok = np.isfinite(risk) & (risk > 0) & np.isfinite(m) & (m > 0)
    m, risk = m[ok], risk[ok]
    if m.size < 4:
        raise ValueError("fit_rate needs at least 4 finite rows")
    log_k = np.log(m) - 2 * math.log(sigma)
    if abscissa == "log_m":
        x = np.log(m)
    elif abscissa == "log_k_power":
        x = log_k ** gamma
    elif abscissa == "log_k_over_loglog":
        x = log_k / np.log(log_k)
    else:
        raise ValueError(f"unknown abscissa {abscissa!r}; expected one of {ABSCISSAE}")
    y = -np.log(risk)
    order = np.lexsort((y, x))  # canonical order: fit is order independent
    x, y = x[order], y[order]
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r_squared": r2}
