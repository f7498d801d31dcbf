"""Observation noise in coefficient form and the observation assembler."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectrum import SpectrumProfile


@dataclass(frozen=True)
class NoiseModel:
    """``hilbert``: coefficient ``j`` has variance ``upsilon_j`` (trace one).
    ``white``: i.i.d. standard normal coefficients, materialized up to
    ``coeff_dim`` only.
    """

    kind: str
    sigma: float
    coeff_dim: int
    upsilon: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("hilbert", "white"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.coeff_dim < 1:
            raise ValueError("coeff_dim must be >= 1")
        if self.kind == "hilbert":
            ups = np.asarray(self.upsilon, dtype=float)
            if ups.shape != (self.coeff_dim,):
                raise ValueError("upsilon must have length coeff_dim")
            if np.any(ups < 0) or np.any(np.diff(ups) > 0):
                raise ValueError("upsilon must be nonnegative and nonincreasing")
            if ups.sum() > 1 + 1e-12:
                raise ValueError("materialized noise trace exceeds one")
            object.__setattr__(self, "upsilon", ups)

    @classmethod
    def hilbert(cls, sigma: float, coeff_dim: int, spectrum: SpectrumProfile | None = None):
        """Covariance eigenvalues from ``spectrum`` normalized to unit trace.

        The default is ``upsilon_j = 2**-j``, whose full trace is exactly one.
        """
        if spectrum is None:
            ups = 0.5 ** np.arange(1, coeff_dim + 1)
        else:
            ups = spectrum.eigenvalues(coeff_dim) / spectrum.trace()
        return cls("hilbert", sigma, coeff_dim, ups)

    @classmethod
    def white(cls, sigma: float, coeff_dim: int):
        return cls("white", sigma, coeff_dim)

    @property
    def upsilon_1(self) -> float:
        return float(self.upsilon[0]) if self.kind == "hilbert" else 1.0

    @property
    def variances(self) -> np.ndarray:
        if self.kind == "hilbert":
            return self.upsilon
        return np.ones(self.coeff_dim)

    @property
    def kl_constant(self) -> float:
        """Per-sample KL factor: ``1/(2 upsilon_1)`` or ``1/2``."""
        return 0.5 / self.upsilon_1


def sample_noise(model: NoiseModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Unscaled noise coefficients, shape ``(count, coeff_dim)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    z = rng.standard_normal((count, model.coeff_dim))
    if model.kind == "hilbert":
        z *= np.sqrt(model.upsilon)
    return z


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    d: int

    def __len__(self) -> int:
        return self.X.shape[0]

    def to_csv(self, path) -> None:
        cols = [f"x{j + 1}" for j in range(self.d)] + [f"y{j + 1}" for j in range(self.Y.shape[1])]
        data = np.hstack([self.X[:, : self.d], self.Y])
        np.savetxt(Path(path), data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


def pad_outputs(values: np.ndarray, coeff_dim: int) -> np.ndarray:
    if values.shape[1] > coeff_dim:
        raise ValueError(f"operator has {values.shape[1]} output coefficients, noise only {coeff_dim}")
    if values.shape[1] == coeff_dim:
        return values
    out = np.zeros((values.shape[0], coeff_dim))
    out[:, : values.shape[1]] = values
    return out


def observe(F, design, model: NoiseModel, rng: np.random.Generator) -> Dataset:
    """``Y_i = F(X_i) + sigma * E_i`` in the first ``coeff_dim`` coefficients."""
    X = design.points
    Y = pad_outputs(F(X), model.coeff_dim)
    if model.sigma > 0:
        Y = Y + model.sigma * sample_noise(model, X.shape[0], rng)
    return Dataset(X, Y, design.d)
