"""Dimensionless material and solver parameters used by the integrators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .mesh import Region


@dataclass(frozen=True)
class MaterialParams:
    """Dimensionless constants of the coupled magnetization/spin system.

    ``theta`` is the implicitness weight of the exchange term in the
    magnetization step and must lie in (1/2, 1].  ``D0`` is piecewise
    constant per material region with floor ``D_star``.  The two reaction
    scale factors allow distinct spin-flip and precession lengths; both
    default to one (equal characteristic lengths).
    """

    alpha: float
    c: float
    beta: float
    beta_prime: float
    theta: float
    C_exch: float
    C_ani: float = 0.0
    easy_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    D0_magnetic: float = 1.0
    D0_conductor: float = 1.0
    reaction_scale_sf: float = 1.0
    reaction_scale_J: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigurationError("damping alpha must be positive")
        if self.c < 0:
            raise ConfigurationError("coupling constant c must be nonnegative")
        # beta' = 0 (no diffusion anisotropy) is admitted for diagnostics
        if not (0.0 <= self.beta < 1.0 and 0.0 <= self.beta_prime < 1.0):
            raise ConfigurationError("polarization parameters must lie in [0, 1)")
        if self.beta * self.beta_prime >= 1.0:
            raise ConfigurationError("beta * beta_prime must be < 1 (coercivity)")
        if not (0.5 < self.theta <= 1.0):
            raise ConfigurationError("theta must lie in (1/2, 1]")
        if self.C_exch <= 0:
            raise ConfigurationError("exchange constant must be positive")
        if self.C_ani < 0:
            raise ConfigurationError("anisotropy constant must be nonnegative")
        if self.D0_magnetic <= 0 or self.D0_conductor <= 0:
            raise ConfigurationError("diffusion coefficients must be positive")
        e = np.asarray(self.easy_axis, dtype=np.float64)
        n = float(np.linalg.norm(e))
        if self.C_ani > 0 and abs(n - 1.0) > 1e-9:
            raise ConfigurationError("easy axis must be a unit vector")

    @property
    def D_star(self) -> float:
        return min(self.D0_magnetic, self.D0_conductor)

    def D0_of_region(self, region: np.ndarray) -> np.ndarray:
        """Per-tet diffusion coefficient from the region tags."""
        return np.where(region == Region.MAGNETIC, self.D0_magnetic, self.D0_conductor)


@dataclass(frozen=True)
class SolverConfig:
    """Krylov solver contract for the two linear solves per step."""

    tol: float = 1e-10
    max_iter_factor: int = 10
    restart: int = 200

    def __post_init__(self):
        if self.tol <= 0 or self.tol >= 1:
            raise ConfigurationError("solver tolerance must lie in (0, 1)")
        if self.max_iter_factor < 1:
            raise ConfigurationError("max_iter_factor must be >= 1")
