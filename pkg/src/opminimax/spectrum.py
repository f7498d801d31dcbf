"""Eigenvalue decay profiles of the input covariance and their aggregates.

Every bound formula in the package consumes a handful of scalar aggregates of
the eigenvalues ``lambda_1 >= lambda_2 >= ... > 0``: the inverse partial sum,
the tail sum and the log of the partial product. Large magnitudes are kept in
the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaincc, gamma, logsumexp

KINDS = ("algebraic", "exponential", "double_exponential", "explicit")


class SpectrumOverflowError(OverflowError):
    """An aggregate exceeded double range; ``log_value`` holds its logarithm."""

    def __init__(self, message: str, log_value: float):
        super().__init__(message)
        self.log_value = log_value


@dataclass(frozen=True)
class SpectrumProfile:
    """One of four eigenvalue laws.

    ``algebraic``: ``i**-alpha`` (alpha > 1); ``exponential``:
    ``exp(-alpha * i**beta)``; ``double_exponential``: ``exp(-exp(alpha * i))``;
    ``explicit``: a finite nonincreasing list of positive values.
    """

    kind: str
    alpha: float = 1.0
    beta: float = 1.0
    values: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown spectrum kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "explicit":
            vals = tuple(float(v) for v in self.values)
            if not vals:
                raise ValueError("explicit spectrum needs at least one value")
            if any(v <= 0 or not math.isfinite(v) for v in vals):
                raise ValueError("explicit eigenvalues must be positive and finite")
            if any(b > a for a, b in zip(vals, vals[1:])):
                raise ValueError("explicit eigenvalues must be nonincreasing")
            object.__setattr__(self, "values", vals)
            return
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.kind == "algebraic" and self.alpha <= 1:
            raise ValueError("algebraic decay needs alpha > 1 for a finite trace")
        if self.kind == "exponential" and self.beta <= 0:
            raise ValueError("beta must be positive")

    # construction helpers -------------------------------------------------
    @classmethod
    def algebraic(cls, alpha: float) -> "SpectrumProfile":
        return cls("algebraic", alpha=alpha)

    @classmethod
    def exponential(cls, alpha: float, beta: float = 1.0) -> "SpectrumProfile":
        return cls("exponential", alpha=alpha, beta=beta)

    @classmethod
    def double_exponential(cls, alpha: float) -> "SpectrumProfile":
        return cls("double_exponential", alpha=alpha)

    @classmethod
    def explicit(cls, values: Sequence[float]) -> "SpectrumProfile":
        return cls("explicit", values=tuple(values))

    @classmethod
    def from_dict(cls, data: dict) -> "SpectrumProfile":
        data = dict(data)
        kind = data.pop("kind")
        if "values" in data:
            data["values"] = tuple(data["values"])
        return cls(kind, **data)

    def to_dict(self) -> dict:
        if self.kind == "explicit":
            return {"kind": self.kind, "values": list(self.values)}
        if self.kind == "exponential":
            return {"kind": self.kind, "alpha": self.alpha, "beta": self.beta}
        return {"kind": self.kind, "alpha": self.alpha}

    @property
    def length(self) -> float:
        """Number of eigenvalues (``inf`` except for explicit lists)."""
        return len(self.values) if self.kind == "explicit" else math.inf

    # pointwise ------------------------------------------------------------
    def log_eigenvalues(self, idx) -> np.ndarray:
        """``log lambda_i`` for 1-based indices ``idx`` (array-like)."""
        i = np.asarray(idx, dtype=float)
        if np.any(i < 1):
            raise IndexError("eigenvalue indices start at 1")
        if self.kind == "explicit":
            if np.any(i > len(self.values)):
                raise IndexError(f"index beyond explicit spectrum of length {len(self.values)}")
            return np.log(np.asarray(self.values))[i.astype(int) - 1]
        if self.kind == "algebraic":
            return -self.alpha * np.log(i)
        if self.kind == "exponential":
            return -self.alpha * i ** self.beta
        with np.errstate(over="ignore"):
            return -np.exp(self.alpha * i)

    def eigenvalue(self, i: int) -> float:
        if i < 1:
            raise IndexError("eigenvalue indices start at 1")
        if self.kind == "explicit":
            if i > len(self.values):
                raise IndexError(f"index {i} beyond explicit spectrum of length {len(self.values)}")
            return self.values[i - 1]
        return float(np.exp(self.log_eigenvalues(i)))

    def eigenvalues(self, n: int) -> np.ndarray:
        """The first ``n`` eigenvalues as an array."""
        if self.kind == "explicit":
            if n > len(self.values):
                raise IndexError(f"requested {n} eigenvalues from a list of {len(self.values)}")
            return np.asarray(self.values[:n], dtype=float)
        return np.exp(self.log_eigenvalues(np.arange(1, n + 1)))

    # aggregates -----------------------------------------------------------
    def log_inv_sum(self, d: int) -> float:
        """``log(sum_{j<=d} 1/lambda_j)``, finite for any magnitude."""
        if d < 1:
            raise ValueError("d must be >= 1")
        return float(logsumexp(-self.log_eigenvalues(np.arange(1, d + 1))))

    def inv_sum(self, d: int) -> float:
        if d < 1:
            raise ValueError("d must be >= 1")
        logs = -self.log_eigenvalues(np.arange(1, d + 1))
        if logs.max() < 700:
            # direct summation, compensated
            return math.fsum(np.exp(logs).tolist())
        log_value = float(logsumexp(logs))
        if log_value >= math.log(np.finfo(float).max):
            raise SpectrumOverflowError(f"inverse sum up to d={d} overflows double range", log_value)
        return math.exp(log_value)

    def log_product(self, d: int) -> float:
        """``sum_{j<=d} log lambda_j``."""
        if d < 1:
            raise ValueError("d must be >= 1")
        return math.fsum(self.log_eigenvalues(np.arange(1, d + 1)).tolist())

    def trace(self, rel_tol: float = 1e-12) -> float:
        return self.tail_sum(0, rel_tol)

    def tail_sum(self, d: int, rel_tol: float = 1e-10) -> float:
        """``sum_{j>d} lambda_j`` to relative accuracy ``rel_tol``.

        The partial sum is extended until an analytic two-sided bracket on the
        remainder is narrower than ``rel_tol`` times the running total; the
        midpoint of the bracket is added.
        """
        if d < 0:
            raise ValueError("d must be >= 0")
        if rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.kind == "explicit":
            return math.fsum(self.values[d:])

        partial = 0.0
        start = d + 1
        chunk = 1024
        while True:
            idx = np.arange(start, start + chunk, dtype=float)
            terms = np.exp(self.log_eigenvalues(idx))
            partial += math.fsum(terms.tolist())
            last = start + chunk - 1  # remainder is sum_{j>last}
            lo, hi = self._remainder_bracket(last)
            if hi - lo <= rel_tol * (partial + lo) or hi == 0.0:
                return partial + 0.5 * (lo + hi)
            start = last + 1
            chunk = min(chunk * 2, 1 << 22)

    def _remainder_bracket(self, n: int) -> tuple[float, float]:
        """Bounds ``lo <= sum_{j>n} lambda_j <= hi`` by integral comparison."""
        if self.kind == "algebraic":
            a = self.alpha
            # int_{n+1}^inf x^-a <= R_n <= int_n^inf x^-a
            return (n + 1.0) ** (1 - a) / (a - 1), float(n) ** (1 - a) / (a - 1)
        if self.kind == "exponential":
            a, b = self.alpha, self.beta

            def upper_integral(x0: float) -> float:
                z = a * x0 ** b
                if z > 700:
                    return 0.0
                return gamma(1 / b) * gammaincc(1 / b, z) / (b * a ** (1 / b))

            return upper_integral(n + 1.0), upper_integral(float(n))
        # double exponential: consecutive ratios shrink, so a geometric bound holds
        l1 = self.log_eigenvalues(n + 1)
        l2 = self.log_eigenvalues(n + 2)
        if not l1 > -745:
            return 0.0, 0.0
        first = math.exp(float(l1))
        q = math.exp(float(l2 - l1))
        return first, first / (1 - q)

    def default_sim_dim(self, frac: float = 1e-3, cap: int = 4096) -> int:
        """Smallest ``D`` with ``tail_sum(D) < frac * lambda_1`` (at most ``cap``)."""
        if self.kind == "explicit":
            return len(self.values)
        target = frac * self.eigenvalue(1)
        lo, hi = 1, 1
        while self.tail_sum(hi, 1e-6) >= target:
            lo, hi = hi, hi * 2
            if hi > cap:
                return cap
        while lo < hi:
            mid = (lo + hi) // 2
            if self.tail_sum(mid, 1e-6) < target:
                hi = mid
            else:
                lo = mid + 1
        return hi
