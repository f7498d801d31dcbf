"""Histogram estimator on a tensor grid in the leading eigencoordinates.

Coordinate ``i <= d`` ranges over ``[-sqrt(R lambda_i), sqrt(R lambda_i)]``
split into ``n_i`` equal intervals, half-open ``[l, r)`` except the last
which is closed. Cells are keyed by the row-major flattened multi-index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .spectrum import SpectrumProfile

OUTSIDE = -1
MAX_CELLS = 2 ** 62


@dataclass(frozen=True)
class HistogramPartition:
    d: int
    R: float
    n_i: tuple[int, ...]
    spectrum: SpectrumProfile

    def __post_init__(self):
        n_i = tuple(int(v) for v in self.n_i)
        object.__setattr__(self, "n_i", n_i)
        if self.d < 1 or len(n_i) != self.d:
            raise ValueError("n_i must have length d >= 1")
        if any(v < 1 for v in n_i):
            raise ValueError("every n_i must be >= 1")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if math.prod(n_i) > MAX_CELLS:
            raise ValueError("cell count exceeds the flat-index range")

    @property
    def n(self) -> int:
        return math.prod(self.n_i)

    @property
    def half_widths(self) -> np.ndarray:
        return np.sqrt(self.R * self.spectrum.eigenvalues(self.d))

    @property
    def strides(self) -> np.ndarray:
        n = np.asarray(self.n_i, dtype=np.int64)
        return np.concatenate((np.cumprod(n[::-1])[::-1][1:], [1])).astype(np.int64)

    def multi_index(self, X) -> np.ndarray:
        """Per-axis interval indices ``(N, d)``; ``-1`` rows mark points outside ``D``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] < self.d:
            raise ValueError(f"inputs need at least {self.d} coordinates")
        u = X[:, : self.d] / self.half_widths  # in [-1, 1] inside D
        n = np.asarray(self.n_i)
        inside = np.all(np.abs(u) <= 1.0, axis=1)
        k = np.floor((u + 1.0) * (n / 2.0)).astype(np.int64)
        k = np.minimum(k, n - 1)  # closed last interval
        k = np.maximum(k, 0)
        k[~inside] = OUTSIDE
        return k

    def locate(self, X) -> np.ndarray:
        """Flat cell index per row, ``-1`` outside ``D``."""
        k = self.multi_index(X)
        flat = k @ self.strides
        flat[k[:, 0] == OUTSIDE] = OUTSIDE
        return flat

    def cell_index(self, x) -> tuple[int, ...] | None:
        """Multi-index of a single vector, or ``None`` when it lies outside ``D``."""
        k = self.multi_index(np.asarray(x, dtype=float)[None, :])[0]
        return None if k[0] == OUTSIDE else tuple(int(v) for v in k)

    def unflatten(self, flat) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        return (flat[:, None] // self.strides[None, :]) % np.asarray(self.n_i)[None, :]

    def cell_bounds(self, multi) -> tuple[np.ndarray, np.ndarray]:
        multi = np.atleast_2d(multi)
        w = self.half_widths
        width = 2.0 * w / np.asarray(self.n_i)
        lo = -w + multi * width
        return lo, lo + width

    def cell_midpoints(self) -> np.ndarray:
        """Midpoints of all cells in flat order, shape ``(n, d)``."""
        axes = []
        for w, ni in zip(self.half_widths, self.n_i):
            width = 2.0 * w / ni
            axes.append(-w + (np.arange(ni) + 0.5) * width)
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def to_dict(self) -> dict:
        return {"d": self.d, "R": self.R, "n_i": list(self.n_i), "spectrum": self.spectrum.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "HistogramPartition":
        return cls(int(data["d"]), float(data["R"]), tuple(data["n_i"]),
                   SpectrumProfile.from_dict(data["spectrum"]))


@dataclass(frozen=True)
class HistogramEstimator:
    """Per-cell output means; empty cells and points outside ``D`` predict zero."""

    partition: HistogramPartition
    keys: np.ndarray  # sorted occupied flat indices
    means: np.ndarray  # (len(keys), coeff_dim)
    counts: np.ndarray
    r: int | None  # None = no truncation
    coeff_dim: int

    @property
    def cell_means(self) -> dict[int, np.ndarray]:
        return {int(k): m for k, m in zip(self.keys, self.means)}

    def __call__(self, X) -> np.ndarray:
        return predict(self, X)

    def to_json(self) -> str:
        doc = {
            "partition": self.partition.to_dict(),
            "r": self.r,
            "coeff_dim": self.coeff_dim,
            "cells": [
                {"index": int(k), "count": int(c), "mean": [float(v) for v in m]}
                for k, c, m in zip(self.keys, self.counts, self.means)
            ],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "HistogramEstimator":
        doc = json.loads(text)
        cells = doc["cells"]
        coeff_dim = int(doc["coeff_dim"])
        keys = np.array([c["index"] for c in cells], dtype=np.int64)
        means = np.array([c["mean"] for c in cells], dtype=float).reshape(len(cells), coeff_dim)
        counts = np.array([c["count"] for c in cells], dtype=np.int64)
        return cls(HistogramPartition.from_dict(doc["partition"]), keys, means, counts,
                   doc["r"], coeff_dim)


def fit(X, Y, partition: HistogramPartition, r: int | None = None) -> HistogramEstimator:
    """Average ``Y`` rows per occupied cell; rows outside ``D`` are dropped.

    ``r`` truncates every mean to its first ``r`` coefficients.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] == 0 or X.shape[0] != Y.shape[0]:
        raise ValueError("dataset must be nonempty with matching X and Y rows")
    if r is not None and r < 1:
        raise ValueError("r must be a positive integer or None")
    flat = partition.locate(X)
    keep = flat != OUTSIDE
    keys, first, inverse, counts = np.unique(flat[keep], return_index=True, return_inverse=True,
                                             return_counts=True)
    Yk = Y[keep]
    # average deviations from each cell's first row: constant cells come back bit-exact
    ref = Yk[first]
    dev = np.zeros((keys.size, Y.shape[1]))
    np.add.at(dev, inverse, Yk - ref[inverse])
    means = ref + dev / counts[:, None] if keys.size else dev
    if r is not None:
        means[:, r:] = 0.0
    return HistogramEstimator(partition, keys.astype(np.int64), means, counts, r, Y.shape[1])


def fit_dataset(dataset, partition: HistogramPartition, r: int | None = None) -> HistogramEstimator:
    return fit(dataset.X, dataset.Y, partition, r)


def predict(est: HistogramEstimator, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    flat = est.partition.locate(X)
    out = np.zeros((X.shape[0], est.coeff_dim))
    if est.keys.size == 0:
        return out
    pos = np.searchsorted(est.keys, flat)
    pos = np.minimum(pos, est.keys.size - 1)
    hit = (flat != OUTSIDE) & (est.keys[pos] == flat)
    out[hit] = est.means[pos[hit]]
    return out


# ---------------------------------------------------------------------------
# parameter selection


class InfeasibleError(ValueError):
    """No admissible ``d``; ``min_k`` is the smallest ``m/sigma^2`` that would work."""

    def __init__(self, message: str, min_k: float):
        super().__init__(message)
        self.min_k = min_k


@dataclass(frozen=True)
class ParameterSelection:
    d: int
    R: float
    c: float
    n_i: tuple[int, ...]
    r: int | None
    feasible: bool
    margin: float
    k: float
    rule: str
    notes: tuple[str, ...] = field(default=())

    @property
    def n(self) -> int:
        return math.prod(self.n_i)

    def partition(self, spectrum: SpectrumProfile) -> HistogramPartition:
        return HistogramPartition(self.d, self.R, self.n_i, spectrum)

    def to_dict(self) -> dict:
        return {"d": self.d, "R": self.R, "c": self.c, "n_i": list(self.n_i), "r": self.r,
                "feasible": self.feasible, "margin": self.margin, "k": self.k, "rule": self.rule,
                "notes": list(self.notes)}


def _log_c(log_k: float, spectrum: SpectrumProfile, B: float, L: float, p: float, d: int) -> float:
    """``log c`` for ``c = (k/sqrt(prod lambda))^((p+2)/q) * (B^2p L^4 d^4)^(1/q)``, ``q=(p+2)d+4``."""
    q = (p + 2) * d + 4
    log_const = 2 * p * math.log(B) + 4 * math.log(L) + 4 * math.log(d)
    return (p + 2) / q * (log_k - 0.5 * spectrum.log_product(d)) + log_const / q


def feasibility_log_min_k(spectrum: SpectrumProfile, B: float, L: float, p: float, d: int,
                          r: int = 1) -> float:
    """``log`` of the smallest ``m/sigma^2`` with ``c sqrt(lambda_d) >= 1``."""
    log_const = 2 * p * math.log(B) + 4 * math.log(L) + 4 * math.log(d)
    log_ld = float(spectrum.log_eigenvalues(d))
    return (math.log(r) + 0.5 * spectrum.log_product(d) - log_const / (p + 2)
            - ((p + 2) * d + 4) / (2 * (p + 2)) * log_ld)


def _margin(log_k, spectrum, B, L, p, d, c_scale=1.0) -> float:
    log_c = _log_c(log_k, spectrum, B, L, p, d) + math.log(c_scale)
    return math.exp(log_c + 0.5 * float(spectrum.log_eigenvalues(d))) - 1.0


def _regime_d(kind: str, spectrum: SpectrumProfile, log_k: float, p: float, c_prime: float,
              d_max: int) -> int:
    if spectrum.kind == "exponential":
        d = math.floor((max(log_k, 0.0) / c_prime) ** (1.0 / (spectrum.beta + 1.0)))
    elif spectrum.kind == "algebraic":
        if log_k <= 1.0:
            d = 1
        else:
            d = math.floor(4.0 / ((p + 2) + spectrum.alpha * p) * log_k / math.log(log_k))
    else:
        d = d_max
    return max(1, min(d, d_max))


def _white_rank(spectrum: SpectrumProfile, log_k: float, t: float) -> int:
    """Smallest rank meeting the regime growth rule for white noise."""
    if spectrum.kind == "algebraic":
        if log_k <= math.e or t <= 0:
            return 1
        target = (spectrum.alpha - 1) / 2 * math.log(log_k / math.log(log_k)) / t
    else:
        beta = spectrum.beta if spectrum.kind == "exponential" else 1.0
        target = max(log_k, 0.0) ** (beta / (beta + 1))
    return max(1, math.ceil(math.exp(target) - 1e-9))


def select_parameters(m: int, sigma: float, spectrum: SpectrumProfile, B: float, L: float,
                      p: float, noise_kind: str = "hilbert", *, d: int | None = None,
                      r: int | None = None, t: float = 1.0, c_prime: float = 1.0,
                      d_max: int = 64, rule: str = "theorem", R: float | None = None,
                      c_scale: float = 1.0) -> ParameterSelection:
    """Choose ``(d, c, n_i, R, r)`` for the histogram estimator.

    ``rule="theorem"`` is the general upper-bound recipe: ``d`` from the
    regime rule (or the hint), reduced to the largest feasible value;
    ``c`` from the closed form; ``n_i = floor(c sqrt(lambda_i))``; ``R``
    balancing the bias against the mass outside the box.

    ``c_scale`` multiplies the closed-form ``c`` (the bound holds up to a
    constant, so any fixed multiple keeps the rate).

    ``rule="finite_dim"`` is the classical bounded-support choice
    ``n_i = floor(c_scale * k^(1/(2+d)))`` with ``R`` given (default: the
    squared support radius of the uniform law, 3).
    """
    if not (m > 0 and sigma > 0 and B > 0 and L > 0):
        raise ValueError("m, sigma, B, L must be positive")
    if not 1 <= p < math.inf:
        raise ValueError("p must lie in [1, inf)")
    if noise_kind not in ("hilbert", "white"):
        raise ValueError("noise_kind must be hilbert or white")
    d_cap = int(min(d_max, spectrum.length))
    log_k = math.log(m) - 2 * math.log(sigma)
    notes: list[str] = []

    if noise_kind == "white":
        if r is None:
            r = _white_rank(spectrum, log_k, t)
        log_k -= math.log(r)

    if rule == "finite_dim":
        d = d_cap if d is None else d
        k = math.exp(log_k)
        side = max(1, math.floor(c_scale * k ** (1.0 / (2 + d)) + 1e-9))
        R_val = 3.0 if R is None else R
        return ParameterSelection(d, R_val, float(side), (side,) * d, r, True, 0.0,
                                  k, rule, ("finite-dimensional grid",))
    if rule != "theorem":
        raise ValueError(f"unknown selection rule {rule!r}")

    pinned = d is not None
    if pinned:
        if d > d_cap:
            raise ValueError(f"d={d} exceeds the available eigenvalues")
        candidates = [d]
    elif spectrum.kind in ("exponential", "algebraic"):
        start = _regime_d(spectrum.kind, spectrum, log_k, p, c_prime, d_cap)
        candidates = list(range(start, 0, -1))
    else:
        candidates = list(range(d_cap, 0, -1))

    chosen = None
    for dd in candidates:
        margin = _margin(log_k, spectrum, B, L, p, dd, c_scale)
        if margin >= -1e-12:
            chosen, margin_val = dd, (0.0 if abs(margin) <= 1e-12 else margin)
            break
    if chosen is None:
        dd = candidates[-1]
        min_log_k = feasibility_log_min_k(spectrum, B, L, p, dd, r or 1)
        # scaling c by s moves the threshold by s^(-((p+2)d+4)/(p+2))
        min_log_k -= ((p + 2) * dd + 4) / (p + 2) * math.log(c_scale)
        raise InfeasibleError(
            f"c*sqrt(lambda_{dd}) >= 1 fails at d={dd}: need m/sigma^2 >= "
            f"{math.exp(min_log_k):.6g}" + (f" (with r={r})" if r else ""),
            math.exp(min_log_k),
        )
    if not pinned and chosen != candidates[0]:
        notes.append(f"d reduced from {candidates[0]} to {chosen} for feasibility")
    dd = chosen
    log_c = _log_c(log_k, spectrum, B, L, p, dd) + math.log(c_scale)
    c = math.exp(log_c)
    lam = spectrum.eigenvalues(dd)
    n_i = tuple(max(1, math.floor(c * math.sqrt(v) * (1 + 1e-12))) for v in lam)
    bias = math.sqrt(float(np.sum(lam / np.asarray(n_i, dtype=float) ** 2)))
    R_val = (B * dd ** (1.0 / p) / (L * bias)) ** (2 * p / (p + 2)) if R is None else R
    return ParameterSelection(dd, R_val, c, n_i, r, True, margin_val, math.exp(log_k), rule,
                              tuple(notes))
