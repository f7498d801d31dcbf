"""Input measures in eigencoordinates and the fixed/random designs.

An input ``X`` is represented by its first ``sim_dim`` eigencoordinates
``<X, phi_j>``; coordinate ``j`` is ``sqrt(lambda_j) * xi_j`` with the ``xi_j``
i.i.d. from a unit-variance coordinate law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gamma as gamma_fn

from .spectrum import SpectrumProfile

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class CoordinateLaw:
    """Law of a whitened coordinate ``xi``; mean zero, unit variance.

    ``a`` and ``b`` are one admissible pair for the density floor
    ``nu(x) >= b`` on ``|x| <= a``; ``iota = 2ab``.
    """

    kind: str  # "uniform" or "gaussian"

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise ValueError(f"unknown coordinate law {self.kind!r}")

    @property
    def a(self) -> float:
        return SQRT3 if self.kind == "uniform" else 1.0

    @property
    def b(self) -> float:
        if self.kind == "uniform":
            return 1.0 / (2.0 * SQRT3)
        return math.exp(-0.5) / math.sqrt(2.0 * math.pi)

    @property
    def iota(self) -> float:
        return 2.0 * self.a * self.b

    @property
    def bounded(self) -> bool:
        return self.kind == "uniform"

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.where(np.abs(x) <= SQRT3, 1.0 / (2.0 * SQRT3), 0.0)
        return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)

    def abs_moment(self, q: float) -> float:
        """Closed form of ``E|xi|^q``."""
        if self.kind == "uniform":
            return SQRT3 ** q / (q + 1.0)
        return 2.0 ** (q / 2.0) * gamma_fn((q + 1.0) / 2.0) / math.sqrt(math.pi)

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(-SQRT3, SQRT3, size=shape)
        return rng.standard_normal(size=shape)


@dataclass(frozen=True)
class InputMeasure:
    spectrum: SpectrumProfile
    law: CoordinateLaw
    sim_dim: int

    def __post_init__(self):
        if self.sim_dim < 1:
            raise ValueError("sim_dim must be >= 1")
        if self.sim_dim > self.spectrum.length:
            raise ValueError("sim_dim exceeds the number of eigenvalues")

    @classmethod
    def build(cls, spectrum: SpectrumProfile, law: str = "uniform", sim_dim: int | None = None):
        if sim_dim is None:
            sim_dim = spectrum.default_sim_dim()
        return cls(spectrum, CoordinateLaw(law), sim_dim)

    @property
    def scales(self) -> np.ndarray:
        return np.sqrt(self.spectrum.eigenvalues(self.sim_dim))

    @property
    def tail_energy(self) -> float:
        """Input energy ``sum_{j > sim_dim} lambda_j`` dropped by truncation."""
        if self.sim_dim >= self.spectrum.length:
            return 0.0
        return self.spectrum.tail_sum(self.sim_dim)


def sample_input(measure: InputMeasure, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` inputs; returns an array of shape ``(count, sim_dim)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return measure.law.sample(rng, (count, measure.sim_dim)) * measure.scales


@dataclass(frozen=True)
class Design:
    kind: str  # "fixed_stratified" or "random_box"
    points: np.ndarray
    d: int
    R: float | None = None
    m_requested: int | None = None

    @property
    def m(self) -> int:
        return self.points.shape[0]

    def to_csv(self, path) -> None:
        header = ",".join(f"x{j + 1}" for j in range(self.d))
        np.savetxt(Path(path), self.points[:, : self.d], delimiter=",", header=header,
                   comments="", fmt="%.17g")


def effective_fixed_m(m: int, n: int) -> int:
    """Largest multiple of ``n`` not above ``m``."""
    return (m // n) * n


def make_fixed_design(partition, m: int, dim: int | None = None) -> Design:
    """``m // n`` replicated cell midpoints per cell, zero beyond ``d``.

    When ``m`` is not a multiple of the cell count it is rounded down;
    the design records the requested value.
    """
    n = partition.n
    if m < n:
        raise ValueError(f"fixed design needs m >= n (one point per cell); got m={m}, n={n}")
    per_cell = m // n
    dim = partition.d if dim is None else dim
    if dim < partition.d:
        raise ValueError("dim must be at least the partition dimension")
    mids = partition.cell_midpoints()  # (n, d), flat cell order
    pts = np.zeros((n * per_cell, dim))
    pts[:, : partition.d] = np.repeat(mids, per_cell, axis=0)
    return Design("fixed_stratified", pts, partition.d, partition.R, m)


def make_random_design(R: float, d: int, spectrum: SpectrumProfile, m: int,
                       rng: np.random.Generator, dim: int | None = None) -> Design:
    """i.i.d. points with coordinate ``i = sqrt(R lambda_i) * U[-1, 1]`` for ``i <= d``."""
    if R <= 0 or d < 1 or m < 1:
        raise ValueError("need R > 0, d >= 1, m >= 1")
    dim = d if dim is None else dim
    pts = np.zeros((m, dim))
    half = np.sqrt(R * spectrum.eigenvalues(d))
    pts[:, :d] = rng.uniform(-1.0, 1.0, size=(m, d)) * half
    return Design("random_box", pts, d, R, m)
