"""Weak monotonicity in m for every shipped risk-curve config."""

import math

import pytest

from acceptance_checks import WORKERS, risk_configs
from opminimax.cli import run_risk_curve
from opminimax.config import load_config, shipped_configs


def quadrupling_grid(grid):
    lo, hi = min(grid), max(grid)
    out = [lo]
    while out[-1] * 4 <= hi:
        out.append(out[-1] * 4)
    return out


@pytest.mark.parametrize("name", risk_configs())
def test_risk_does_not_grow_with_4x_data(name):
    cfg = load_config(shipped_configs()[name])
    grid = quadrupling_grid(cfg.experiment.m_grid)
    cfg = load_config(shipped_configs()[name],
                      [f"experiment.m_grid={grid}", "experiment.trials=50",
                       "lower_bound.enabled=false"])
    rows, _ = run_risk_curve(cfg, WORKERS)
    bad = []
    for r_small in rows:
        for r_big in rows:
            if r_big["m"] != 4 * r_small["m"] or r_big.get("r") != r_small.get("r"):
                continue
            if not (r_small["feasible"] and r_big["feasible"]):
                continue
            se = math.hypot(r_small["std_err"], r_big["std_err"])
            if r_small["mean_risk"] < r_big["mean_risk"] - 2 * se:
                bad.append((r_small["m"], r_small.get("r"), r_small["mean_risk"],
                            r_big["mean_risk"], se))
    assert not bad, bad
