"""``opminimax run {risk-curve,lower-bound,rates,verify}``.

Artifacts land in ``--out`` (default ``$OPMINIMAX_OUT`` or ``./out``): a CSV,
its JSON mirror, and ``manifest.json``. CSVs depend only on config and seed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import lowerbound as lb
from . import rates as rates_mod
from .config import Config, ConfigError, load_config, operator_factory, resolve_config_path
from .estimator import InfeasibleError
from .measure import CoordinateLaw, make_fixed_design
from .risk import CURVE_COLUMNS, CurveSpec, risk_curve

KINDS = ("risk-curve", "lower-bound", "rates", "verify")
LOWER_COLUMNS = ("d", "h", "m", "sigma", "n", "M", "log_M", "c0", "s_star", "kl_budget",
                 "mean_kl", "condition_holds", "lower_bound_value", "pair_j", "pair_k",
                 "hamming", "mc_distance", "mc_std_err", "theoretical_floor")
VERIFY_COLUMNS = ("check", "passed", "detail")


def code_digest() -> str:
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return v


def _jsonable(v):
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def write_table(rows: list[dict], columns, out: Path, stem: str, metadata: dict) -> None:
    with open(out / f"{stem}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: _cell(row.get(k)) for k in columns})
    doc = {"metadata": metadata,
           "rows": [{k: _jsonable(row.get(k)) for k in columns} for row in rows]}
    (out / f"{stem}.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _law_constants(cfg: Config) -> CoordinateLaw:
    return CoordinateLaw(cfg.measure.law)


def _lower_bound_fn(cfg: Config, op, spectrum, noise):
    if not cfg.lower_bound.enabled or noise.sigma <= 0:
        return None
    law = _law_constants(cfg)

    def f(m):
        try:
            res = rates_mod.eval_lower_bound(spectrum, m, noise.sigma, op.L, law.a, law.b,
                                             cfg.experiment.p, cfg.lower_bound.d_max, B=op.B,
                                             c=cfg.lower_bound.c, noise_kind=noise.kind,
                                             upsilon_1=noise.upsilon_1)
        except lb.ConditionError:
            return None
        return res["value"], res["d"]

    return f


def run_risk_curve(cfg: Config, workers: int) -> tuple[list[dict], dict]:
    measure = cfg.measure.build()
    spectrum = measure.spectrum
    factory = operator_factory(cfg.operator, spectrum)
    noise = cfg.noise.build(spectrum)
    op = factory()
    selection = cfg.selection.model_dump(exclude_none=True)
    r_grid = cfg.experiment.r_grid or [selection.get("r")]
    rows = []
    for r in r_grid:
        sel = dict(selection)
        if r is not None:
            sel["r"] = r
        spec = CurveSpec(measure, factory, noise, cfg.experiment.p, tuple(cfg.experiment.m_grid),
                         cfg.experiment.trials, cfg.experiment.n_mc, cfg.seed,
                         cfg.experiment.design, sel, _lower_bound_fn(cfg, op, spectrum, noise))
        rows.extend(risk_curve(spec, workers).rows)
    meta = {"operator": {"family": op.family, "B": op.B, "L": op.L, "t": op.t},
            "tail_energy": measure.tail_energy, "sim_dim": measure.sim_dim}
    return rows, meta


def run_lower_bound(cfg: Config) -> tuple[list[dict], dict]:
    measure = cfg.measure.build()
    spectrum = measure.spectrum
    law = _law_constants(cfg)
    op = operator_factory(cfg.operator, spectrum)()
    noise = cfg.noise.build(spectrum)
    lbc = cfg.lower_bound
    p = cfg.experiment.p
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0,)))
    if lbc.h is None:
        h = lb.optimize_h(lbc.d, lbc.m, noise.sigma, op.L, spectrum, law.a, law.b, p,
                          noise.kind, noise.upsilon_1, lbc.c, op.B)["h_star"]
    else:
        h = lbc.h
    points = None
    if cfg.experiment.design == "fixed":
        from .estimator import HistogramPartition

        # stratified design over the packing box so the exact KL is available
        side = max(1, math.floor(lbc.m ** (1.0 / lbc.d)))
        part = HistogramPartition(lbc.d, law.a ** 2, (side,) * lbc.d, spectrum)
        points = make_fixed_design(part, max(lbc.m, part.n), measure.sim_dim).points
    inst = lb.build_instance(lbc.d, h, lbc.m, noise.sigma, op.L, op.B, spectrum, law.a, law.b,
                             p, noise.kind, noise.upsilon_1, rng=rng, design_points=points)
    base = {k: getattr(inst, k) for k in ("d", "h", "m", "sigma", "n", "M", "log_M", "c0",
                                          "s_star", "kl_budget", "mean_kl", "condition_holds",
                                          "lower_bound_value")}
    rows = [dict(base)]
    if inst.code is not None:
        for j in range(1, min(lbc.separation_pairs, inst.M - 1) + 1):
            res = lb.separation_check(inst, (j, j + 1), p, measure, lbc.n_mc, rng)
            rows.append({**base, "pair_j": j, "pair_k": j + 1, "hamming": res["hamming"],
                         "mc_distance": res["mc_distance"], "mc_std_err": res["mc_std_err"],
                         "theoretical_floor": res["theoretical_floor"]})
    return rows, {"instance": json.loads(inst.to_json()), "diagnostic": inst.diagnostic}


def run_rates(cfg: Config) -> tuple[list[dict], dict]:
    spectrum = cfg.measure.spectrum.build()
    law = _law_constants(cfg)
    op = operator_factory(cfg.operator, spectrum)()
    noise = cfg.noise.build(spectrum)
    rc = cfg.rates
    rows = rates_mod.rate_rows(spectrum, rc.m_grid, noise.sigma, op.B, op.L, cfg.experiment.p,
                               law.a, law.b, noise_kind=noise.kind, upsilon_1=noise.upsilon_1,
                               r=rc.r, t=op.t or 1.0, d_max=rc.d_max, C=rc.C,
                               lower_c=cfg.lower_bound.c)
    return rows, {"C": rc.C}


def run_verify(cfg: Config) -> tuple[list[dict], dict]:
    from .verify import run_all

    vc = cfg.verify
    checks = run_all(tuple(vc.vg_n), vc.separation_n_mc, vc.kl_instances, cfg.seed)
    return [{"check": c, "passed": ok, "detail": d} for c, ok, d in checks], {}


def execute(cfg: Config, out: Path, workers: int, config_path=None) -> int:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    status = 0
    if cfg.kind == "risk-curve":
        rows, meta = run_risk_curve(cfg, workers)
        columns, stem = CURVE_COLUMNS, "risk_curve"
    elif cfg.kind == "lower-bound":
        rows, meta = run_lower_bound(cfg)
        columns, stem = LOWER_COLUMNS, "lower_bound"
    elif cfg.kind == "rates":
        rows, meta = run_rates(cfg)
        columns, stem = rates_mod.RATE_COLUMNS, "rates"
    else:
        rows, meta = run_verify(cfg)
        columns, stem = VERIFY_COLUMNS, "verify"
        for row in rows:
            print(f"{'PASS' if row['passed'] else 'FAIL'}  {row['check']}: {row['detail']}")
        status = 0 if all(r["passed"] for r in rows) else 1
    meta = {"kind": cfg.kind, "name": cfg.name, "seed": cfg.seed, "config": cfg.model_dump(mode="json"),
            **meta}
    write_table(rows, columns, out, stem, meta)
    import pydantic
    import scipy

    manifest = {
        "kind": cfg.kind,
        "config_path": str(config_path) if config_path else None,
        "config_sha256": cfg.digest(),
        "code_sha256": code_digest(),
        "seed": cfg.seed,
        "workers": workers,
        "versions": {"opminimax": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "pydantic": pydantic.VERSION},
        "artifacts": [f"{stem}.csv", f"{stem}.json"],
        "wall_time_s": time.perf_counter() - t0,
        "exit_status": status,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opminimax", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("kind", choices=KINDS)
    run.add_argument("--config", help="TOML file or the name of a shipped config")
    run.add_argument("--seed", type=int, help="master seed (overrides the config)")
    run.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    run.add_argument("--out", default=os.environ.get("OPMINIMAX_OUT", "out"))
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="dotted config path and TOML value; repeatable")
    sub.add_parser("configs", help="list shipped configs")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "configs":
        from .config import shipped_configs

        for name, path in shipped_configs().items():
            print(f"{name}\t{path}")
        return 0
    try:
        path = resolve_config_path(args.config) if args.config else None
        overrides = list(args.override)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(path, overrides, kind=args.kind)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        return execute(cfg, Path(args.out), args.workers, path)
    except (InfeasibleError, lb.ConditionError, lb.CodeConstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
