"""Model parameters and the fitness / growth-rate algebra.

Every other module works with :class:`ModelParams` and the two rate
families defined here:

* ``gamma_pow(p, j) = (1 + gamma)**j - 1``, the relative advantage of a
  type ``j`` classes ahead of the dominant one;
* ``lambda_growth(p, j) = (1 + rho) * (1 + gamma)**j - 1``, its growth rate
  when the population itself grows at rate ``rho``.

Both are evaluated through ``expm1``/``log1p`` so that small ``gamma``
keeps full relative precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidParams, MuOutOfRange


@dataclass(frozen=True)
class ModelParams:
    """Parameters ``(gamma, alpha, rho, mu)`` of the Moran sweep model.

    Parameters
    ----------
    gamma : float
        Selective advantage per mutation, > 0.
    alpha : float
        Initial population exponent, ``N(0) = ceil(mu**-alpha)``.
        Must exceed 1 for a fixed population (``rho == 0``).
    rho : float
        Population growth rate, >= 0.
    mu : float
        Mutation rate in (0, 1). Only the simulator and the harness use it;
        the limit construction is independent of ``mu``.
    """

    gamma: float
    alpha: float
    rho: float = 0.0
    mu: float = 1e-3

    def __post_init__(self):
        for name in ("gamma", "alpha", "rho", "mu"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidParams(f"{name} must be a finite real, got {value!r}")
        if self.gamma <= 0:
            raise InvalidParams(f"gamma must be > 0, got {self.gamma}")
        if self.rho < 0:
            raise InvalidParams(f"rho must be >= 0, got {self.rho}")
        if not 0 < self.mu < 1:
            raise MuOutOfRange(f"mu must lie in (0, 1), got {self.mu}")
        if self.alpha <= 0:
            raise InvalidParams(f"alpha must be > 0, got {self.alpha}")
        if self.rho == 0 and self.alpha <= 1:
            raise InvalidParams(
                f"a fixed population (rho = 0) needs alpha > 1, got {self.alpha}"
            )

    @property
    def growing(self) -> bool:
        return self.rho > 0

    def replace(self, **changes) -> "ModelParams":
        values = {"gamma": self.gamma, "alpha": self.alpha, "rho": self.rho, "mu": self.mu}
        values.update(changes)
        return ModelParams(**values)

    def as_dict(self) -> dict:
        return {"gamma": self.gamma, "alpha": self.alpha, "rho": self.rho, "mu": self.mu}


@dataclass(frozen=True)
class Scale:
    """Log scale ``L = ln(1/mu)`` and the scaled time unit ``L / gamma``."""

    L: float
    time_unit: float


def gamma_pow(params: ModelParams, j: float) -> float:
    """Return ``(1 + gamma)**j - 1``; ``j`` may be any real."""
    return math.expm1(j * math.log1p(params.gamma))


def lambda_growth(params: ModelParams, j: float) -> float:
    """Return ``(1 + rho) * (1 + gamma)**j - 1``.

    Reduces bit-for-bit to :func:`gamma_pow` when ``rho == 0`` and equals
    ``rho`` at ``j == 0``.
    """
    if j == 0:
        return params.rho
    return math.expm1(math.log1p(params.rho) + j * math.log1p(params.gamma))


def log_scale(params: ModelParams) -> Scale:
    mu = params.mu
    if not 0 < mu < 1:
        raise MuOutOfRange(f"mu must lie in (0, 1), got {mu}")
    L = -math.log(mu)
    return Scale(L=L, time_unit=L / params.gamma)
