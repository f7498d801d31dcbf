"""Fano lower-bound instances: VG codes, bump packings, KL budgets.

Bumps live in whitened coordinates ``x_j = <X, phi_j> / sqrt(lambda_j)``,
``j <= d``; a tent of half-width ``h`` sits at each center of a regular grid
packed inside ``[-a, a]^d``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .operators import BumpFamilyParams, bump_functional
from .spectrum import SpectrumProfile

FANO_ALPHA = 1.0 / 16.0
MAX_CODE_N = 64


# ---------------------------------------------------------------------------
# Varshamov-Gilbert codes


def vg_size(n: int) -> int:
    """Number of nonzero words the constructor collects: ``ceil(2^(n/8))``, exactly."""
    x = 1 << n
    root = math.isqrt(math.isqrt(math.isqrt(x)))  # nested floors give floor(x^(1/8))
    return root if root ** 8 == x else root + 1


def vg_log_size(n: int) -> float:
    """``log ceil(2^(n/8))``; past ``n = 10^6`` the ceiling is immaterial."""
    return math.log(vg_size(n)) if n <= 1_000_000 else n * math.log(2.0) / 8.0


def hamming_matrix(words: np.ndarray) -> np.ndarray:
    w = np.asarray(words, dtype=np.int32)
    return w.sum(1)[:, None] + w.sum(1)[None, :] - 2 * (w @ w.T)


@dataclass(frozen=True)
class VGCode:
    n: int
    words: np.ndarray  # (M + 1, n) of 0/1, words[0] = 0

    @property
    def M(self) -> int:
        return self.words.shape[0] - 1

    def verify(self) -> None:
        """Exhaustive check of all three code properties; raises on failure."""
        w = self.words
        if w.shape[1] != self.n or np.any(w[0] != 0):
            raise AssertionError("first word must be all zeros")
        if self.M < 2.0 ** (self.n / 8.0):
            raise AssertionError(f"M={self.M} < 2^(n/8)")
        H = hamming_matrix(w)
        np.fill_diagonal(H, self.n)
        if H.min() < self.n / 8.0:
            raise AssertionError(f"pairwise Hamming distance {H.min()} < n/8")


class CodeConstructionError(RuntimeError):
    pass


def vg_code(n: int, rng: np.random.Generator, max_draws: int = 1_000_000) -> VGCode:
    """Random words accepted when at distance >= n/8 from every kept word.

    Candidates are drawn in batches; the finished code is verified over all
    pairs before it is returned.
    """
    if n < 8:
        raise ValueError("n must be >= 8")
    need = vg_size(n)
    floor = math.ceil(n / 8.0 - 1e-12)
    kept = np.zeros((1, n), dtype=np.int8)
    drawn = 0
    while kept.shape[0] - 1 < need:
        if drawn >= max_draws:
            raise CodeConstructionError(
                f"collected {kept.shape[0] - 1} of {need} words after {drawn} draws")
        batch = min(256, max_draws - drawn)
        cand = rng.integers(0, 2, size=(batch, n), dtype=np.int8)
        drawn += batch
        for c in cand:
            dist = np.count_nonzero(kept != c, axis=1)
            if dist.min() >= floor:
                kept = np.vstack([kept, c])
                if kept.shape[0] - 1 >= need:
                    break
    code = VGCode(n, kept)
    code.verify()
    return code


# ---------------------------------------------------------------------------
# packing


def grid_count(a: float, h: float) -> int:
    return int(math.floor(a / h + 1e-9))


def packing_centers(a: float, h: float, d: int) -> np.ndarray:
    """Regular grid of ``floor(a/h)^d`` centers, spacing ``2h``, first at ``-a + h``."""
    if not 0 < h / a <= 0.125 + 1e-12:
        raise ValueError("need 0 < h/a <= 1/8")
    k = grid_count(a, h)
    axis = -a + h + 2.0 * h * np.arange(k)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def boxes_disjoint_and_contained(centers: np.ndarray, h: float, a: float) -> bool:
    """Interval-arithmetic check on the ``h``-boxes around ``centers``."""
    c = np.atleast_2d(centers)
    if np.any(c - h < -a * (1 + 1e-12)) or np.any(c + h > a * (1 + 1e-12)):
        return False
    for i in range(c.shape[0] - 1):
        lo_i, hi_i = c[i] - h, c[i] + h
        lo_j, hi_j = c[i + 1:] - h, c[i + 1:] + h
        # open boxes overlap iff they overlap strictly on every axis
        overlap = np.all((lo_i < hi_j - 1e-12) & (lo_j < hi_i - 1e-12), axis=1)
        if np.any(overlap):
            return False
    return True


# ---------------------------------------------------------------------------
# instances


def fano_factor(M: float | None, alpha: float = FANO_ALPHA, log_M: float | None = None) -> float:
    """``sqrt(M)/(1+sqrt(M)) * (1 - 2 alpha - 2 sqrt(alpha / log M))``."""
    log_M = math.log(M) if log_M is None else log_M
    ratio = 1.0 / (1.0 + math.exp(-0.5 * log_M))
    return ratio * (1.0 - 2 * alpha - 2 * math.sqrt(alpha / log_M))


def separation_constant(n: int, h: float, a: float, d: int, p: float) -> float:
    """``c0 = (n (h/a)^d / 8)^(1/p)``; at most ``8^(-1/p)``, equal when ``a/h`` is an integer."""
    return (n * (h / a) ** d / 8.0) ** (1.0 / p)


def s_star(L: float, inv_sum: float, iota: float, p: float, d: int, h: float, c0: float) -> float:
    return 0.5 * c0 * L / math.sqrt(inv_sum) * (iota / (p + 1.0)) ** (d / p) * h


def default_h_constant(noise_kl: float, d: int) -> float:
    """Constant in ``h = (c a^d sigma^2 S / (L^2 m))^(1/(2+d))`` keeping the Fano condition.

    The KL budget must stay below ``(1/16) log M >= (1/16)(log 2 / 8) floor(a/h)^d``;
    ``floor(x) >= (8/9) x`` for ``x >= 8`` absorbs the rounding.
    """
    return math.log(2.0) * (8.0 / 9.0) ** d / (128.0 * noise_kl)


class ConditionError(ValueError):
    """The bound of the bump family would exceed ``B``."""

    def __init__(self, message: str, min_B: float):
        super().__init__(message)
        self.min_B = min_B


@dataclass
class FanoInstance:
    d: int
    h: float
    a: float
    b: float
    L: float
    B: float
    m: int
    sigma: float
    p: float
    noise_kind: str
    kl_constant: float
    spectrum: SpectrumProfile
    centers: np.ndarray
    code: VGCode | None
    n: int
    M: int | None  # None when too large to be worth materializing as an integer
    log_M: float
    c0: float
    s_star: float
    kl_budget: float
    mean_kl: float
    condition_holds: bool
    lower_bound_value: float
    diagnostic: str = ""
    params: list = field(default_factory=list, repr=False)

    @property
    def iota(self) -> float:
        return 2 * self.a * self.b

    def functional(self, j: int):
        """The scalar bump functional ``F_j`` (needs a materialized code)."""
        if self.code is None:
            raise ValueError("code not materialized for this instance")
        return lambda X: bump_functional(self.params[j], X)

    def to_json(self) -> str:
        doc = {
            "d": self.d, "h": self.h, "a": self.a, "b": self.b, "iota": self.iota,
            "L": self.L, "B": self.B, "m": self.m, "sigma": self.sigma, "p": self.p,
            "noise_kind": self.noise_kind, "kl_constant": self.kl_constant,
            "spectrum": self.spectrum.to_dict(), "n": self.n, "M": self.M, "log_M": self.log_M,
            "c0": self.c0, "s_star": self.s_star, "kl_budget": self.kl_budget,
            "mean_kl": self.mean_kl, "condition_holds": self.condition_holds,
            "lower_bound_value": self.lower_bound_value, "fano_alpha": FANO_ALPHA,
            "diagnostic": self.diagnostic, "centers": self.centers.tolist(),
            "code_words": None if self.code is None
            else ["".join(map(str, w)) for w in self.code.words.tolist()],
        }
        return json.dumps(doc, indent=1)


def check_bump_bound(a: float, L: float, B: float, inv_sum: float) -> None:
    lhs = a * L / (8.0 * math.sqrt(inv_sum))
    if lhs > B * (1 + 1e-12):
        raise ConditionError(f"a L / (8 sqrt(sum 1/lambda_j)) = {lhs:.6g} exceeds B={B}; "
                             f"need B >= {lhs:.6g}", lhs)


def exact_kl(instance: FanoInstance, j: int, design_points: np.ndarray) -> float:
    """``(c / sigma^2) sum_i F_j(X_i)^2`` for a fixed design.

    The lifted hypothesis has a single nonzero output coefficient, so the
    Gaussian mean-shift KL reduces to this scalar sum.
    """
    vals = bump_functional(instance.params[j], design_points)
    return instance.kl_constant / instance.sigma ** 2 * float(np.dot(vals, vals))


def build_instance(d: int, h: float, m: int, sigma: float, L: float, B: float,
                   spectrum: SpectrumProfile, a: float, b: float, p: float,
                   noise_kind: str = "hilbert", upsilon_1: float = 0.5, *,
                   rng: np.random.Generator | None = None, design_points=None,
                   c0: float | None = None, max_code_n: int = MAX_CODE_N) -> FanoInstance:
    """Assemble packing, code, bump family and the Fano bookkeeping.

    The code is materialized when ``n <= max_code_n``; otherwise only its
    size ``ceil(2^(n/8))`` (guaranteed to exist) enters the bound. With a
    fixed ``design_points`` array and a materialized code the mean KL is
    computed exactly; otherwise the per-hypothesis budget is used.
    """
    if not 0 < h / a <= 0.125 + 1e-12:
        raise ValueError("need 0 < h/a <= 1/8")
    inv_sum = spectrum.inv_sum(d)
    check_bump_bound(a, L, B, inv_sum)
    kl_c = 0.5 / upsilon_1 if noise_kind == "hilbert" else 0.5
    centers = packing_centers(a, h, d)
    n = centers.shape[0]
    M = vg_size(n) if n <= 1_000_000 else None
    log_M = vg_log_size(n)
    c0_val = separation_constant(n, h, a, d, p) if c0 is None else c0
    sep = s_star(L, inv_sum, 2 * a * b, p, d, h, c0_val)
    budget = kl_c * L ** 2 * h ** 2 * m / (sigma ** 2 * inv_sum)

    code = None
    params: list = []
    if n <= max_code_n:
        code = vg_code(n, rng if rng is not None else np.random.default_rng(0))
        params = [BumpFamilyParams(d, h, centers, w, L, spectrum, a, spacing=2.0 * h)
                  for w in code.words]
    inst = FanoInstance(d, h, a, b, L, B, m, sigma, p, noise_kind, kl_c, spectrum, centers,
                        code, n, M, log_M, c0_val, sep, budget, budget, False, 0.0, "", params)
    if code is not None and design_points is not None:
        pts = np.atleast_2d(np.asarray(design_points, dtype=float))
        inst.mean_kl = float(np.mean([exact_kl(inst, j, pts) for j in range(1, code.M + 1)]))
    inst.condition_holds = inst.mean_kl <= FANO_ALPHA * log_M
    if inst.condition_holds:
        inst.lower_bound_value = fano_lower_bound(inst)
    else:
        inst.diagnostic = (f"mean KL {inst.mean_kl:.4g} > log(M)/16 = {FANO_ALPHA * log_M:.4g}; "
                           "h is too large for this m")
    return inst


def fano_lower_bound(instance: FanoInstance) -> float:
    if not instance.condition_holds:
        return 0.0
    return fano_factor(instance.M, log_M=instance.log_M) * instance.s_star


def optimize_h(d: int, m: int, sigma: float, L: float, spectrum: SpectrumProfile, a: float,
               b: float, p: float, noise_kind: str = "hilbert", upsilon_1: float = 0.5,
               c: float | None = None, B: float | None = None) -> dict:
    """``h = min(a/8, (L^2 m / (c a^d sigma^2 S))^(-1/(2+d)))`` and the resulting bound.

    ``c`` defaults to :func:`default_h_constant`, which makes the instance at
    this ``h`` satisfy the KL condition. The returned ``bound`` is the Fano
    value of that instance: ``fano_factor(M) * s_star(h)``.
    """
    inv_sum = spectrum.inv_sum(d)
    if B is not None:
        check_bump_bound(a, L, B, inv_sum)
    kl_c = 0.5 / upsilon_1 if noise_kind == "hilbert" else 0.5
    c_h = default_h_constant(kl_c, d) if c is None else c
    log_second = -(math.log(L ** 2 * m) - math.log(c_h) - d * math.log(a)
                   - 2 * math.log(sigma) - math.log(inv_sum)) / (2.0 + d)
    second = math.exp(log_second)
    h = min(a / 8.0, second)
    n = grid_count(a, h) ** d
    log_M = vg_log_size(n)
    c0 = separation_constant(n, h, a, d, p)
    sep = s_star(L, inv_sum, 2 * a * b, p, d, h, c0)
    return {"h_star": h, "branch": "saturated" if h == a / 8.0 else "power", "c": c_h,
            "n": n, "log_M": log_M, "c0": c0, "s_star": sep,
            "bound": fano_factor(None, log_M=log_M) * sep}


def separation_check(instance: FanoInstance, pair: tuple[int, int], p: float, measure,
                     n_mc: int, rng: np.random.Generator) -> dict:
    """MC ``||F_j - F_k||_{L^p_mu}`` next to the closed-form floor."""
    j, k = pair
    if j == k:
        raise ValueError("pair must name two different hypotheses")
    if instance.code is None:
        raise ValueError("code not materialized for this instance")
    from .measure import sample_input  # local imports keep module load light
    from .risk import merge_moments

    mean = m2 = 0.0
    done = 0
    while done < n_mc:
        size = min(1 << 16, n_mc - done)
        X = sample_input(measure, size, rng)
        diff = bump_functional(instance.params[j], X) - bump_functional(instance.params[k], X)
        mean, m2 = merge_moments(mean, m2, done, np.abs(diff) ** p)
        done += size
    se_mean = math.sqrt(m2 / (n_mc - 1) / n_mc)
    dist = mean ** (1.0 / p)
    se = se_mean * mean ** (1.0 / p - 1.0) / p if mean > 0 else 0.0
    H = int(np.count_nonzero(instance.code.words[j] != instance.code.words[k]))
    inv_sum = instance.spectrum.inv_sum(instance.d)
    d, h, b = instance.d, instance.h, instance.b
    if math.isinf(p):
        floor = instance.L / math.sqrt(inv_sum) * h
    else:
        floor = (instance.L / math.sqrt(inv_sum) * (2 * b / (p + 1)) ** (d / p)
                 * h ** (d / p + 1) * H ** (1.0 / p))
    return {"mc_distance": dist, "mc_std_err": se, "theoretical_floor": floor, "hamming": H}
