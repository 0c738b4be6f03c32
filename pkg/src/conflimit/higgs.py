"""The two built-in Higgs-bundle families and their parameter domain.

All coefficients are expressed in the frame adapted to the abelian
differential ``omega = dz`` of the translation surface, so every field is a
scalar function of the flat coordinate.

* ``hitchin``: ``L = K^{1/2}`` with frame ``s``, ``s**2 = dz``; ``alpha = c``
  (quadratic differential ``c dz**2``) and ``beta = 1``.
* ``zero_degree``: ``L`` trivial; ``beta = c dz`` and ``alpha = k * beta``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["HiggsData", "Parameters", "coefficients_at", "admissible", "InadmissibleError"]

HITCHIN = "hitchin"
ZERO_DEGREE = "zero_degree"
FAMILIES = (HITCHIN, ZERO_DEGREE)


class InadmissibleError(ValueError):
    """Parameters outside the valid domain of the family."""


@dataclass(frozen=True)
class HiggsData:
    family: str
    c: complex = 0j
    k: complex = 1.0 + 0j

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        object.__setattr__(self, "c", complex(self.c))
        object.__setattr__(self, "k", complex(self.k))
        if self.family == ZERO_DEGREE and (self.k == 0 or self.c == 0):
            raise ValueError("zero_degree family needs k != 0 and c != 0")

    @classmethod
    def hitchin(cls, c: complex = 0j) -> "HiggsData":
        return cls(HITCHIN, c=c)

    @classmethod
    def zero_degree(cls, k: complex, c: complex = 1.0) -> "HiggsData":
        return cls(ZERO_DEGREE, c=c, k=k)

    @property
    def alpha_coeff(self) -> complex:
        return self.c if self.family == HITCHIN else self.k * self.c

    @property
    def beta_coeff(self) -> complex:
        return 1.0 + 0j if self.family == HITCHIN else self.c

    @property
    def degree(self) -> int:
        """Degree of ``L`` on the genus-2 surface."""
        return 1 if self.family == HITCHIN else 0

    @property
    def branching_divisor(self) -> dict[int, int]:
        """Div(beta) as {cone class: multiplicity}; omega vanishes to order 2."""
        return {} if self.family == HITCHIN else {0: 2}

    @property
    def singular_coefficient(self) -> float:
        """Exponent ``a`` with ``h ~ r**a`` at the cone point in this frame.

        The frame ``s`` with ``s**2 = dz`` has ``|s|**2 ~ |dz| ~ r**(2/3)`` in a
        conformal coordinate near a cone of angle 6*pi.
        """
        return 2.0 / 3.0 if self.family == HITCHIN else 0.0


@dataclass(frozen=True)
class Parameters:
    hbar: complex
    R: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "hbar", complex(self.hbar))
        object.__setattr__(self, "R", float(self.R))
        if self.hbar == 0:
            raise ValueError("hbar must be nonzero")
        if not self.R >= 0:
            raise ValueError("R must be nonnegative")

    @property
    def t(self) -> float:
        """``|hbar**2 R**2|``."""
        return abs(self.hbar) ** 2 * self.R**2


def coefficients_at(data: HiggsData, mesh) -> tuple[np.ndarray, np.ndarray]:
    n = mesh.n_classes
    return (np.full(n, data.alpha_coeff, dtype=complex), np.full(n, data.beta_coeff, dtype=complex))


def admissible(params: Parameters, data: HiggsData, slack: float = 1e-12) -> bool:
    """``|hbar^2 R^2| <= 1`` (hitchin) or ``< 1`` (zero degree)."""
    t = params.t
    if data.family == HITCHIN:
        return t <= 1.0 + slack
    return t < 1.0
