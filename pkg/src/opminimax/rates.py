"""Closed-form rate curves for overlay against measured risk.

Unspecified proportionality constants default to 1 and travel with every
curve row, so plots can always be reproduced from the CSV alone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .estimator import InfeasibleError, _margin, feasibility_log_min_k
from .lowerbound import ConditionError, check_bump_bound, optimize_h
from .spectrum import SpectrumProfile

REGIMES = ("exp", "alg_upper", "alg_lower", "double_exp", "finite_dim")
RATE_COLUMNS = ("k", "m", "sigma", "regime", "quantity", "value", "d", "constants")


def eval_upper_bound(spectrum: SpectrumProfile, m: float, sigma: float, B: float, L: float,
                     p: float, d: int, r: int | None = None, noise_kind: str = "hilbert",
                     t: float = 1.0) -> float:
    """Upper-bound expression for a fixed ``d`` (and rank ``r`` under white noise).

    ``(k / sqrt(prod lambda))^(-2/q) (B^2p L^4 d^4)^(d/(2q)) + L sqrt(tail(d))``
    with ``q = (p+2)d + 4``; white noise uses ``k = m/(r sigma^2)`` and adds
    ``B r^-t``.
    """
    log_k = math.log(m) - 2 * math.log(sigma)
    if noise_kind == "white":
        if r is None or r < 1:
            raise ValueError("white noise needs a rank r >= 1")
        log_k -= math.log(r)
    elif noise_kind != "hilbert":
        raise ValueError(f"unknown noise kind {noise_kind!r}")
    if _margin(log_k, spectrum, B, L, p, d) < -1e-12:
        min_k = math.exp(feasibility_log_min_k(spectrum, B, L, p, d, r or 1))
        raise InfeasibleError(f"c sqrt(lambda_{d}) >= 1 fails: need m/sigma^2 >= {min_k:.6g}",
                              min_k)
    q = (p + 2) * d + 4
    log_const = 2 * p * math.log(B) + 4 * math.log(L) + 4 * math.log(d)
    log_first = -2.0 / q * (log_k - 0.5 * spectrum.log_product(d)) + d / (2.0 * q) * log_const
    value = math.exp(log_first) + L * math.sqrt(spectrum.tail_sum(d))
    if noise_kind == "white":
        value += B * float(r) ** (-t)
    return value


def best_upper_bound(spectrum: SpectrumProfile, m: float, sigma: float, B: float, L: float,
                     p: float, d_max: int = 64, **kw) -> tuple[float, int]:
    """Smallest :func:`eval_upper_bound` over feasible ``d <= d_max``."""
    best = (math.inf, 0)
    for d in range(1, int(min(d_max, spectrum.length)) + 1):
        try:
            v = eval_upper_bound(spectrum, m, sigma, B, L, p, d, **kw)
        except InfeasibleError:
            break  # feasibility only gets harder as d grows
        best = min(best, (v, d))
    if best[1] == 0:
        raise InfeasibleError("no feasible d", math.exp(
            feasibility_log_min_k(spectrum, B, L, p, 1, kw.get("r") or 1)))
    return best


def eval_lower_bound(spectrum: SpectrumProfile, m: float, sigma: float, L: float, a: float,
                     b: float, p: float, d_max: int = 64, *, B: float | None = None,
                     c: float | None = None, noise_kind: str = "hilbert",
                     upsilon_1: float = 0.5) -> dict:
    """Fano value at the optimized ``h``, maximized over ``d = 1..d_max``.

    With ``B`` given, values of ``d`` that break ``a L / (8 sqrt(S_d)) <= B``
    are skipped. ``c=None`` uses the constant that keeps the KL condition.
    """
    best = None
    for d in range(1, int(min(d_max, spectrum.length)) + 1):
        if B is not None:
            try:
                check_bump_bound(a, L, B, spectrum.inv_sum(d))
            except ConditionError:
                continue
        res = optimize_h(d, int(m), sigma, L, spectrum, a, b, p, noise_kind, upsilon_1, c)
        if best is None or res["bound"] > best["value"]:
            best = {"value": res["bound"], "d": d, "h_star": res["h_star"], "c": res["c"],
                    "c0": res["c0"], "n": res["n"]}
    if best is None:
        raise ConditionError(f"no d <= {d_max} satisfies a L / (8 sqrt(S_d)) <= B", math.nan)
    return best


@dataclass(frozen=True)
class RateExpression:
    regime: str
    C: float = 1.0
    beta: float = 1.0
    alpha: float = 2.0
    d: int = 1
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")

    def k_min(self) -> float:
        if self.regime in ("alg_lower", "double_exp"):
            return math.exp(math.e)  # log log k > 1
        return 1.0

    def __call__(self, k: float) -> float:
        return asymptotic_log_rate(self.regime, k, C=self.C, beta=self.beta, alpha=self.alpha,
                                   d=self.d)


def asymptotic_log_rate(regime: str, k: float, C: float = 1.0, beta: float = 1.0,
                        alpha: float = 2.0, d: int = 1) -> float:
    """Leading-order ``-log`` minimax risk at ``k = m / sigma^2``."""
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    k_min = math.exp(math.e) if regime in ("alg_lower", "double_exp") else 1.0
    if not k > k_min:
        raise ValueError(f"k={k} must exceed k_min={k_min:.6g} for regime {regime}")
    lk = math.log(k)
    if regime == "exp":
        return C * lk ** (beta / (beta + 1.0))
    if regime == "alg_upper":
        return C * math.sqrt(lk)
    if regime == "alg_lower":
        return C * (alpha - 1.0) / 2.0 * math.log(lk / math.log(lk))
    if regime == "double_exp":
        return C * lk / math.log(lk)
    return lk / (2.0 + d)


def exp_band(k: float, beta: float, C_lower: float = 1.0, C_upper: float = 1.0) -> dict:
    """For ``0 < beta < 1`` only bounds are known: exponent ``beta/(beta+1)`` below, ``1/2`` above."""
    if not 0 < beta < 1:
        raise ValueError("the band applies to 0 < beta < 1")
    lo = asymptotic_log_rate("exp", k, C_lower, beta)
    hi = asymptotic_log_rate("exp", k, C_upper, 1.0)
    return {"lower": lo, "upper": hi, "label": "non-tight band"}


def rate_rows(spectrum: SpectrumProfile, m_grid, sigma: float, B: float, L: float, p: float,
              a: float, b: float, *, noise_kind: str = "hilbert", upsilon_1: float = 0.5,
              r: int | None = None, t: float = 1.0, d_max: int = 64, C: float = 1.0,
              lower_c: float | None = None) -> list[dict]:
    """Upper, lower and asymptotic curves on a grid of ``m``; rows follow :data:`RATE_COLUMNS`."""
    regime = {"exponential": "exp", "double_exponential": "double_exp",
              "algebraic": "alg_upper"}.get(spectrum.kind, "finite_dim")
    consts = f"C={C!r};p={p!r};B={B!r};L={L!r};a={a!r};b={b!r}"
    rows = []
    for m in m_grid:
        k = m / sigma ** 2
        base = {"k": float(k), "m": int(m), "sigma": float(sigma), "regime": regime,
                "constants": consts}
        try:
            v, d = best_upper_bound(spectrum, m, sigma, B, L, p, d_max, r=r,
                                    noise_kind=noise_kind, t=t)
            rows.append({**base, "quantity": "upper", "value": v, "d": d})
        except InfeasibleError as exc:
            rows.append({**base, "quantity": "upper", "value": math.nan, "d": "",
                         "constants": f"{consts};infeasible: {exc}"})
        try:
            lb = eval_lower_bound(spectrum, m, sigma, L, a, b, p, d_max, B=B, c=lower_c,
                                  noise_kind=noise_kind, upsilon_1=upsilon_1)
            rows.append({**base, "quantity": "lower", "value": lb["value"], "d": lb["d"],
                         "constants": f"{consts};c={lb['c']!r}"})
        except ConditionError as exc:
            rows.append({**base, "quantity": "lower", "value": math.nan, "d": "",
                         "constants": f"{consts};{exc}"})
        beta = spectrum.beta if spectrum.kind == "exponential" else 1.0
        kw = {"beta": beta, "alpha": spectrum.alpha or 2.0, "d": 1}
        if spectrum.kind == "exponential" and beta < 1:
            band = exp_band(k, beta, C, C)
            rows.append({**base, "quantity": "log_rate_band_lower", "value": band["lower"],
                         "d": "", "constants": f"{consts};{band['label']}"})
            rows.append({**base, "quantity": "log_rate_band_upper", "value": band["upper"],
                         "d": "", "constants": f"{consts};{band['label']}"})
        elif k > RateExpression(regime).k_min():
            rows.append({**base, "quantity": "log_rate",
                         "value": asymptotic_log_rate(regime, k, C, **kw), "d": ""})
    return rows


def write_rate_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RATE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
