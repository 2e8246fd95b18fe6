"""Field contributions: lower-order effective-field operator and sources.

The general effective-field contribution is pluggable; this module ships
the zero operator and nodewise uniaxial anisotropy.  Applied field and
current density are spatially uniform sources, constant or ramped in time,
sampled at discrete times by the driver.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, DomainError
from .fem import FemWorkspace, NodalField3, Support, constant_field
from .mesh import TetMesh


class PiKind(Enum):
    ZERO = "zero"
    UNIAXIAL = "uniaxial"


@dataclass(frozen=True)
class PiOperator:
    """Lower-order effective-field contribution applied nodewise.

    UNIAXIAL evaluates ``2 * C_ani * (e . m(z)) * m(z)`` at each node.  The
    advertised bound ``C_pi = 2 * C_ani`` holds on nodewise unit fields;
    the operator is quadratic in m, so the bound is scale dependent.
    """

    kind: PiKind
    easy_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    C_ani: float = 0.0

    def __post_init__(self):
        if self.kind is PiKind.UNIAXIAL:
            if self.C_ani <= 0:
                raise ConfigurationError("uniaxial operator needs C_ani > 0")
            e = np.asarray(self.easy_axis, dtype=np.float64)
            if abs(np.linalg.norm(e) - 1.0) > 1e-9:
                raise ConfigurationError("easy axis must be a unit vector")

    @property
    def C_pi(self) -> float:
        return 0.0 if self.kind is PiKind.ZERO else 2.0 * self.C_ani


def pi_zero() -> PiOperator:
    return PiOperator(PiKind.ZERO)


def pi_uniaxial(easy_axis, C_ani: float) -> PiOperator:
    e = np.asarray(easy_axis, dtype=np.float64)
    e = e / np.linalg.norm(e)
    return PiOperator(PiKind.UNIAXIAL, tuple(e), float(C_ani))


def apply_pi(op: PiOperator, m: NodalField3) -> NodalField3:
    """Evaluate the field contribution at the nodes of m's node set."""
    if op.kind is PiKind.ZERO:
        return NodalField3(np.zeros_like(m.values), m.support)
    e = np.asarray(op.easy_axis)
    proj = m.values @ e
    return NodalField3(2.0 * op.C_ani * proj[:, None] * m.values, m.support)


def verify_pi_bound(op: PiOperator, ws: FemWorkspace,
                    probes: list[NodalField3]) -> float:
    """Empirical operator norm max ||pi(w)|| / ||w|| over the probe fields.

    Norms are the discrete L2 norms of the magnetic region, consistent
    with the assembled mass matrix.
    """
    worst = 0.0
    for w in probes:
        ws.check_field(w, Support.OMEGA_MAGNETIC)
        denom = ws.l2_sq_omega(w.values)
        if denom <= 0:
            raise ValueError("probe fields must be nonzero")
        num = ws.l2_sq_omega(apply_pi(op, w).values)
        worst = max(worst, np.sqrt(num / denom))
    return worst


class SourceKind(Enum):
    CONSTANT = "constant"
    RAMP = "ramp"


class SourceTarget(Enum):
    APPLIED_F = "applied_field"   # enters the magnetization step, lives on omega
    CURRENT_J = "current"         # enters the spin step, lives on all of Omega


@dataclass(frozen=True)
class SourceField:
    """Spatially uniform source, constant in time or linearly ramped.

    RAMP interpolates from ``vector0`` to ``vector1`` on [0, t_ramp] and
    holds ``vector1`` afterwards, so the source is Lipschitz in time.
    ``t_final``, when set, bounds the admissible sampling times.
    """

    kind: SourceKind
    target: SourceTarget
    vector0: tuple[float, float, float]
    vector1: tuple[float, float, float] | None = None
    t_ramp: float = 0.0
    t_final: float | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.vector0)):
            raise ConfigurationError("source vector must be finite")
        if self.kind is SourceKind.RAMP:
            if self.vector1 is None or not np.all(np.isfinite(self.vector1)):
                raise ConfigurationError("ramp needs a finite target vector")
            if self.t_ramp <= 0:
                raise ConfigurationError("ramp duration must be positive")

    def vector_at(self, t: float) -> np.ndarray:
        if t < 0 or (self.t_final is not None and t > self.t_final * (1 + 1e-12) + 1e-300):
            raise DomainError(f"sample time {t} outside [0, T]")
        v0 = np.asarray(self.vector0, dtype=np.float64)
        if self.kind is SourceKind.CONSTANT:
            return v0
        v1 = np.asarray(self.vector1, dtype=np.float64)
        w = min(t / self.t_ramp, 1.0)
        return (1.0 - w) * v0 + w * v1


def constant_source(target: SourceTarget, vector, t_final=None) -> SourceField:
    return SourceField(SourceKind.CONSTANT, target, tuple(np.asarray(vector, float)),
                       t_final=t_final)


def ramp_source(target: SourceTarget, vector0, vector1, t_ramp, t_final=None) -> SourceField:
    return SourceField(SourceKind.RAMP, target, tuple(np.asarray(vector0, float)),
                       tuple(np.asarray(vector1, float)), float(t_ramp), t_final)


def sample_source(field: SourceField, t: float, mesh: TetMesh) -> NodalField3:
    """Nodal interpolant of the source at time t on its node set."""
    support = (Support.OMEGA_MAGNETIC if field.target is SourceTarget.APPLIED_F
               else Support.OMEGA_ALL)
    return constant_field(mesh, support, field.vector_at(t))
