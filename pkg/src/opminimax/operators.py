"""Test operators with certified bound ``B``, Lipschitz constant ``L`` and scale ``t``.

Inputs are arrays of eigencoordinates of shape ``(N, dim)``; outputs are
coefficient arrays ``(N, output_dim)`` against the output basis ``psi_i``.
Certificates are analytic; sampling is only ever used by the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .spectrum import SpectrumProfile


@dataclass(frozen=True)
class TestOperator:
    family: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    B: float
    L: float
    output_dim: int
    t: float = 0.0
    params: dict = field(default_factory=dict, repr=False)

    __test__ = False  # not a pytest class

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = self.fn(X)
        return out.reshape(X.shape[0], self.output_dim)


def _whitened(X: np.ndarray, d: int, spectrum: SpectrumProfile) -> np.ndarray:
    X = np.atleast_2d(X)
    if X.shape[1] < d:
        raise ValueError(f"input has {X.shape[1]} coordinates, need at least {d}")
    return X[:, :d] / np.sqrt(spectrum.eigenvalues(d))


def tent(X, d: int, spectrum: SpectrumProfile) -> np.ndarray:
    """``prod_{i<=d} max(1 - |x_i| / sqrt(lambda_i), 0)``, row-wise."""
    x = _whitened(np.asarray(X, dtype=float), d, spectrum)
    return np.prod(np.maximum(1.0 - np.abs(x), 0.0), axis=1)


def tent_lipschitz(d: int, spectrum: SpectrumProfile) -> float:
    return math.sqrt(spectrum.inv_sum(d))


@dataclass(frozen=True)
class BumpFamilyParams:
    """Disjoint tents of half-width ``h`` (whitened units) at ``centers``."""

    d: int
    h: float
    centers: np.ndarray  # (n, d), whitened coordinates
    theta: np.ndarray  # (n,) in {0, 1}
    L: float
    spectrum: SpectrumProfile
    a: float
    spacing: float | None = None  # set for regular grids; enables O(N d) evaluation

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        th = np.asarray(self.theta, dtype=np.int8).ravel()
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "theta", th)
        if c.shape[1] != self.d or c.shape[0] != th.shape[0]:
            raise ValueError("centers must be (n, d) and theta length n")
        if not 0 < self.h / self.a <= 0.125 + 1e-12:
            raise ValueError("need 0 < h/a <= 1/8")
        if np.any(np.abs(c) + self.h > self.a * (1 + 1e-12)):
            raise ValueError("support boxes must lie inside [-a, a]^d")
        if self.spacing is None and c.shape[0] > 1:
            # pairwise disjointness of the h-boxes (infinity norm)
            gaps = np.max(np.abs(c[:, None, :] - c[None, :, :]), axis=2)
            np.fill_diagonal(gaps, np.inf)
            if gaps.min() < 2 * self.h * (1 - 1e-12):
                raise ValueError("support boxes overlap")

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @property
    def amplitude(self) -> float:
        """Peak value ``L h / sqrt(sum_{j<=d} 1/lambda_j)``."""
        return self.L * self.h / math.sqrt(self.spectrum.inv_sum(self.d))


def bump_functional(params: BumpFamilyParams, X) -> np.ndarray:
    """``F_theta(X) = amp * sum_i theta_i * f((x - c_i)/h)`` in whitened coordinates."""
    x = _whitened(np.asarray(X, dtype=float), params.d, params.spectrum)
    h = params.h
    if params.spacing is not None:
        # regular grid: only the nearest center per axis can be active
        lo = params.centers.min(axis=0)
        per_axis = np.round((params.centers - lo) / params.spacing).astype(int)
        counts = per_axis.max(axis=0) + 1
        j = np.clip(np.round((x - lo) / params.spacing).astype(int), 0, counts - 1)
        near = lo + j * params.spacing
        vals = np.prod(np.maximum(1.0 - np.abs(x - near) / h, 0.0), axis=1)
        strides = np.cumprod(np.concatenate(([1], counts[::-1][:-1])))[::-1]
        flat = (j * strides).sum(axis=1)
        lookup = np.zeros(int(np.prod(counts)), dtype=float)
        lookup[(per_axis * strides).sum(axis=1)] = params.theta
        return params.amplitude * lookup[flat] * vals
    out = np.zeros(x.shape[0])
    for c, th in zip(params.centers, params.theta):
        if th:
            out += np.prod(np.maximum(1.0 - np.abs(x - c) / h, 0.0), axis=1)
    return params.amplitude * out


def lift_to_operator(f: Callable[[np.ndarray], np.ndarray], direction: int, B: float, L: float,
                     output_dim: int, weights=None, t: float = 0.0,
                     family: str = "lifted") -> TestOperator:
    """``X -> f(X) * psi_direction`` (``direction`` is 1-based).

    ``B`` and ``L`` certify the scalar functional. With output weights
    ``w`` (default ``w_i = i``) the ``Y^t`` bound becomes ``w_direction^t * B``.
    """
    if not 1 <= direction <= output_dim:
        raise ValueError("direction must be in 1..output_dim")
    w = float(direction if weights is None else weights[direction - 1])
    col = direction - 1

    def fn(X):
        out = np.zeros((X.shape[0], output_dim))
        out[:, col] = f(X)
        return out

    return TestOperator(family, fn, B=(w ** t) * B, L=L, output_dim=output_dim, t=t,
                        params={"direction": direction})


def tent_operator(d: int, spectrum: SpectrumProfile, L: float, output_dim: int = 1,
                  direction: int = 1, t: float = 0.0) -> TestOperator:
    """Tent rescaled to be ``L``-Lipschitz, lifted along ``psi_direction``."""
    scale = L / tent_lipschitz(d, spectrum)
    op = lift_to_operator(lambda X: scale * tent(X, d, spectrum), direction, B=scale, L=L,
                          output_dim=output_dim, t=t, family="tent_product")
    op.params.update(d=d)
    return op


def bump_operator(params: BumpFamilyParams, output_dim: int, direction: int = 1,
                  t: float = 0.0) -> TestOperator:
    op = lift_to_operator(lambda X: bump_functional(params, X), direction, B=params.amplitude,
                          L=params.L, output_dim=output_dim, t=t, family="bump_sum")
    return op


def zero_operator(output_dim: int = 1) -> TestOperator:
    return TestOperator("zero", lambda X: np.zeros((X.shape[0], output_dim)), B=0.0, L=0.0,
                        output_dim=output_dim)


def operator_norm(A: np.ndarray, tol: float = 1e-9, max_iter: int = 100_000) -> float:
    """Largest singular value by power iteration on ``A^T A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.any(A):
        return 0.0
    v = np.ones(A.shape[1]) / math.sqrt(A.shape[1])
    v += 1e-3 * np.arange(A.shape[1]) / A.shape[1]  # avoid starting orthogonal to the top vector
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        s_new = math.sqrt(np.linalg.norm(w))
        v = w / np.linalg.norm(w)
        if abs(s_new - s) <= tol * s_new:
            return s_new
        s = s_new
    raise RuntimeError("power iteration did not converge")


def clipped_linear(X, A: np.ndarray, B: float) -> np.ndarray:
    """Row-wise ``A x`` radially clipped to norm ``B``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X[:, : A.shape[1]] @ A.T
    norms = np.linalg.norm(Y, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > B, B / norms, 1.0)
    return Y * scale[:, None]


def clipped_linear_operator(A, B: float, L: float, t: float = 0.0,
                            output_dim: int | None = None) -> TestOperator:
    """Certified member of ``F_{B,L}``; radial clipping is 1-Lipschitz.

    Raises ``ValueError`` when the power-iteration estimate of ``||A||``
    exceeds ``L`` by more than its 1e-9 relative tolerance.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    norm = operator_norm(A)
    if norm > L * (1 + 1e-9):
        raise ValueError(f"operator norm {norm:.6g} exceeds the claimed Lipschitz constant {L}")
    out_dim = A.shape[0] if output_dim is None else output_dim
    if out_dim < A.shape[0]:
        raise ValueError("output_dim smaller than the weight matrix")

    def fn(X):
        out = np.zeros((X.shape[0], out_dim))
        out[:, : A.shape[0]] = clipped_linear(X, A, B)
        return out

    if t > 0:
        wt = np.arange(1, A.shape[0] + 1, dtype=float) ** t
        if np.any(np.abs(A[1:]) > 0):
            raise ValueError("Y^t certification is only supported for a single output row")
        B_t = B * wt[0]
    else:
        B_t = B
    return TestOperator("clipped_linear", fn, B=B_t, L=L, output_dim=out_dim, t=t,
                        params={"A": A})


def profile_operator(f: Callable[[np.ndarray], np.ndarray], f_bound: float, f_lipschitz: float,
                     profile, t: float = 0.0) -> TestOperator:
    """``X -> f(X) * v`` for a fixed coefficient profile ``v``.

    Spreads energy over many output coefficients so truncation at rank ``r``
    has a real bias; ``B = sup|f| * ||v||_{Y^t}`` with ``w_i = i``.
    """
    v = np.asarray(profile, dtype=float).ravel()
    w = np.arange(1, v.size + 1, dtype=float)
    B = f_bound * float(np.sqrt(np.sum(w ** (2 * t) * v ** 2)))
    L = f_lipschitz * float(np.linalg.norm(v))

    def fn(X):
        return f(X)[:, None] * v[None, :]

    return TestOperator("profile", fn, B=B, L=L, output_dim=v.size, t=t, params={"profile": v})
