"""Conversion between SI material data and the dimensionless system.

Times rescale by the Larmor factor gamma * mu0 * Ms, lengths by a
characteristic length L (by default the exchange length sqrt(2A / mu0 Ms^2),
which makes the dimensionless exchange constant exactly one).  Physical
constants are pinned to fixed values for bit-reproducible conversions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

GAMMA_GYROMAGNETIC = 1.76e11      # rad / (s T)
MU0 = 4.0e-7 * np.pi              # N / A^2
MU_BOHR = 9.2741e-24              # A m^2
ELECTRON_CHARGE = -1.602e-19      # A s (negative)

#: sentinel for the intrinsic exchange length choice
INTRINSIC = "intrinsic"


@dataclass(frozen=True)
class SIParams:
    """Material data in SI units.

    Ms saturation magnetization [A/m]; A_exch exchange stiffness [J/m];
    K_ani anisotropy constant [J/m^3]; J_coupling spin-magnetization
    interaction strength [N/A^2]; D0_tilde diffusion coefficient [m^2/s];
    lambda_sf, lambda_J spin-flip / precession lengths [m]; Je applied
    current density vector [A/m^2]; He applied field vector [A/m].
    """

    Ms: float
    A_exch: float
    alpha: float
    K_ani: float = 0.0
    J_coupling: float = 0.0
    D0_tilde: float = 1e-3
    lambda_sf: float | None = None
    lambda_J: float | None = None
    beta: float = 0.5
    beta_prime: float = 0.5
    Je: tuple[float, float, float] = (0.0, 0.0, 0.0)
    He: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.Ms <= 0 or self.A_exch <= 0:
            raise ConfigurationError("Ms and A_exch must be positive")
        if self.alpha <= 0:
            raise ConfigurationError("damping alpha must be positive")
        if not (0.0 < self.beta < 1.0 and 0.0 < self.beta_prime < 1.0):
            raise ConfigurationError("polarizations must lie in (0, 1)")
        if self.D0_tilde <= 0:
            raise ConfigurationError("diffusion coefficient must be positive")


@dataclass(frozen=True)
class NondimParams:
    """Dimensionless constants plus the scales that produced them.

    ``time_scale`` is gamma * mu0 * Ms (reduced time = time_scale * t).
    ``lambda_sf_ratio``/``lambda_J_ratio`` report L / lambda; both equal one
    under the default equal-lengths simplification, otherwise they enter the
    reaction and precession terms as squared scale factors.
    """

    C_exch: float
    C_ani: float
    c: float
    D0: float
    alpha: float
    beta: float
    beta_prime: float
    time_scale: float
    length_scale: float
    j: tuple[float, float, float]
    f: tuple[float, float, float]
    lambda_sf_ratio: float = 1.0
    lambda_J_ratio: float = 1.0

    @property
    def reaction_scale_sf(self) -> float:
        return self.lambda_sf_ratio**2

    @property
    def reaction_scale_J(self) -> float:
        return self.lambda_J_ratio**2


def intrinsic_length(si: SIParams) -> float:
    """Exchange length sqrt(2 A / (mu0 Ms^2)) in meters."""
    return float(np.sqrt(2.0 * si.A_exch / (MU0 * si.Ms**2)))


def time_to_nondim(t_seconds: float, si: SIParams) -> float:
    return float(GAMMA_GYROMAGNETIC * MU0 * si.Ms * t_seconds)


def redimensionalize_time(t_nondim: float, si: SIParams) -> float:
    """Reduced time back to seconds."""
    return float(t_nondim / (GAMMA_GYROMAGNETIC * MU0 * si.Ms))


def field_scale(si: SIParams) -> float:
    """Applied field H [A/m] -> dimensionless f (divide by Ms)."""
    return 1.0 / si.Ms


def current_scale(si: SIParams, L: float) -> float:
    """Current density Je [A/m^2] -> dimensionless j.

    The electron charge is negative, so the dimensionless current is
    antiparallel to the applied current density.
    """
    return MU_BOHR / (L * ELECTRON_CHARGE * GAMMA_GYROMAGNETIC * MU0 * si.Ms**2)


def diffusion_to_nondim(d0_tilde: float, si: SIParams, L: float) -> float:
    """Diffusion coefficient [m^2/s] -> dimensionless D0."""
    return float(2.0 * d0_tilde / (GAMMA_GYROMAGNETIC * MU0 * si.Ms * L**2))


def nondimensionalize(si: SIParams, L_choice=INTRINSIC) -> NondimParams:
    """Apply every scaling substitution to a set of SI parameters.

    ``L_choice`` is either the sentinel ``INTRINSIC`` or an explicit length
    in meters.  When the spin-flip and precession lengths are not given they
    default to L (the equal-lengths simplification); otherwise their ratios
    to L are recorded and carried as separate reaction scale factors.
    """
    if L_choice == INTRINSIC:
        L = intrinsic_length(si)
        C_exch = 1.0  # by construction of the intrinsic length
    else:
        L = float(L_choice)
        if L <= 0:
            raise ConfigurationError("characteristic length must be positive")
        C_exch = 2.0 * si.A_exch / (MU0 * L**2 * si.Ms**2)

    lam_sf = si.lambda_sf if si.lambda_sf is not None else L
    lam_j = si.lambda_J if si.lambda_J is not None else L
    if lam_sf <= 0 or lam_j <= 0:
        raise ConfigurationError("characteristic lengths must be positive")

    return NondimParams(
        C_exch=C_exch,
        C_ani=si.K_ani / (MU0 * si.Ms**2),
        c=si.J_coupling / MU0,
        D0=diffusion_to_nondim(si.D0_tilde, si, L),
        alpha=si.alpha,
        beta=si.beta,
        beta_prime=si.beta_prime,
        time_scale=GAMMA_GYROMAGNETIC * MU0 * si.Ms,
        length_scale=L,
        j=tuple(current_scale(si, L) * np.asarray(si.Je, dtype=np.float64)),
        f=tuple(field_scale(si) * np.asarray(si.He, dtype=np.float64)),
        lambda_sf_ratio=L / lam_sf,
        lambda_J_ratio=L / lam_j,
    )
