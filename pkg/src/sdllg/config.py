"""TOML configuration: geometry, materials, time grid, sources, output.

Configurations come in two modes.  In "nondimensional" mode every quantity
is a plain number in reduced units and no unit strings are accepted.  In
"si" mode every physical quantity must carry an explicit unit (a
``{value = ..., unit = "..."}`` table), is checked against the expected
dimension, and is converted through the scaling module before the solver
ever sees it.  Mixing the two is a configuration error by design.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError
from .fields import SourceField, SourceTarget, constant_source, ramp_source
from .mesh import Region
from .params import MaterialParams, SolverConfig
from . import scaling

# unit string -> (dimension, factor to SI base unit)
_UNITS = {
    "m": ("length", 1.0), "nm": ("length", 1e-9), "um": ("length", 1e-6),
    "s": ("time", 1.0), "ns": ("time", 1e-9), "ps": ("time", 1e-12),
    "A/m": ("field", 1.0), "A/m^2": ("current", 1.0),
    "J/m": ("exchange", 1.0), "J/m^3": ("anisotropy", 1.0),
    "N/A^2": ("coupling", 1.0), "m^2/s": ("diffusion", 1.0),
    "1": ("dimensionless", 1.0),
}


def _parse_quantity(raw, dimension: str, si_mode: bool, key: str) -> float:
    """Scalar quantity with unit enforcement; returns SI base or plain value."""
    if isinstance(raw, dict):
        missing = {"value", "unit"} - set(raw)
        if missing:
            raise ConfigurationError(f"{key}: quantity table needs value and unit")
        unit = raw["unit"]
        if unit not in _UNITS:
            raise ConfigurationError(f"{key}: unknown unit '{unit}'")
        dim, factor = _UNITS[unit]
        expected = dimension if si_mode else "dimensionless"
        if dim != expected:
            raise ConfigurationError(
                f"{key}: unit '{unit}' has dimension {dim}, expected {expected}")
        return float(raw["value"]) * factor
    if si_mode and dimension != "dimensionless":
        raise ConfigurationError(
            f"{key}: SI mode requires an explicit unit for this quantity")
    return float(raw)


def _parse_vector_quantity(raw, dimension: str, si_mode: bool, key: str) -> np.ndarray:
    if isinstance(raw, dict):
        if "value" not in raw or "unit" not in raw:
            raise ConfigurationError(f"{key}: quantity table needs value and unit")
        vec = np.asarray(raw["value"], dtype=np.float64)
        unit = raw["unit"]
        if unit not in _UNITS:
            raise ConfigurationError(f"{key}: unknown unit '{unit}'")
        dim, factor = _UNITS[unit]
        expected = dimension if si_mode else "dimensionless"
        if dim != expected:
            raise ConfigurationError(
                f"{key}: unit '{unit}' has dimension {dim}, expected {expected}")
        vec = vec * factor
    else:
        if si_mode and dimension != "dimensionless":
            raise ConfigurationError(f"{key}: SI mode requires an explicit unit")
        vec = np.asarray(raw, dtype=np.float64)
    if vec.shape != (3,):
        raise ConfigurationError(f"{key}: expected a 3-vector")
    return vec


# -- initial data specs ------------------------------------------------------

@dataclass(frozen=True)
class M0Uniform:
    direction: tuple[float, float, float]


@dataclass(frozen=True)
class M0PerLayer:
    directions: tuple[tuple[float, float, float], ...]  # one per magnetic layer


@dataclass(frozen=True)
class M0Vortex:
    center: tuple[float, float]
    core_radius: float
    polarity: float = 1.0


@dataclass(frozen=True)
class M0File:
    path: str


@dataclass(frozen=True)
class S0Zero:
    pass


@dataclass(frozen=True)
class S0Uniform:
    vector: tuple[float, float, float]


@dataclass(frozen=True)
class S0File:
    path: str


@dataclass(frozen=True)
class GeometrySpec:
    layers: tuple[tuple[float, Region], ...]
    cross_section: tuple[float, float]
    resolution: tuple[int, int, int]


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    vtk_every: int = 0          # 0 disables field output
    ledger: str = "ledger.csv"  # empty string disables the CSV
    checkpoint_every: int = 0
    checkpoint_path: str = ""


@dataclass(frozen=True)
class SimConfig:
    """Fully parsed, dimensionless simulation setup."""

    geometry: GeometrySpec
    params: MaterialParams
    k: float
    t_final: float
    m0: object
    s0: object
    f_source: SourceField
    j_source: SourceField
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    si: scaling.SIParams | None = None   # kept for report-time reconversions

    def __post_init__(self):
        if self.k <= 0:
            raise ConfigurationError("step size k must be positive")
        if self.t_final < 0:
            raise ConfigurationError("final time must be nonnegative")
        if 0 < self.t_final < self.k * (1 - 1e-12):
            raise ConfigurationError("final time must be at least one step")

    @property
    def n_steps(self) -> int:
        if self.t_final == 0:
            return 0
        return max(1, int(round(self.t_final / self.k)))


def _region_from_name(name: str, key: str) -> Region:
    try:
        return {"magnetic": Region.MAGNETIC, "conductor": Region.CONDUCTOR}[name]
    except KeyError:
        raise ConfigurationError(f"{key}: unknown region '{name}'") from None


def _parse_geometry(tbl: dict, si_mode: bool, length_scale: float) -> GeometrySpec:
    try:
        raw_layers = tbl["layers"]
        cross = tbl["cross_section"]
        res = tbl["resolution"]
    except KeyError as exc:
        raise ConfigurationError(f"geometry: missing key {exc}") from None
    layers = []
    for i, lay in enumerate(raw_layers):
        t = _parse_quantity(lay["thickness"], "length", si_mode, f"layers[{i}].thickness")
        layers.append((t / length_scale, _region_from_name(lay["region"], f"layers[{i}]")))
    cs = tuple(_parse_quantity(c, "length", si_mode, "cross_section") / length_scale
               for c in cross)
    if isinstance(res, (int, float)):
        res = (int(res),) * 3
    else:
        res = tuple(int(r) for r in res)
    if len(cs) != 2 or len(res) != 3:
        raise ConfigurationError("geometry: cross_section is 2d, resolution is 3d")
    return GeometrySpec(tuple(layers), cs, res)


def _parse_d0(raw, si_mode, si, length) -> tuple[float, float]:
    """Per-region diffusion coefficient (magnetic, conductor)."""
    def convert(v, key):
        val = _parse_quantity(v, "diffusion", si_mode, key)
        if si_mode:
            val = scaling.diffusion_to_nondim(val, si, length)
        return val

    if isinstance(raw, dict) and ("magnetic" in raw or "conductor" in raw):
        if set(raw) != {"magnetic", "conductor"}:
            raise ConfigurationError("D0: give both regions or a single value")
        return (convert(raw["magnetic"], "D0.magnetic"),
                convert(raw["conductor"], "D0.conductor"))
    v = convert(raw, "D0")
    return v, v


def _parse_m0(tbl: dict):
    kind = tbl.get("kind")
    if kind == "uniform":
        return M0Uniform(tuple(float(x) for x in tbl["direction"]))
    if kind == "per_layer_uniform":
        return M0PerLayer(tuple(tuple(float(x) for x in d) for d in tbl["directions"]))
    if kind == "vortex":
        return M0Vortex(tuple(float(x) for x in tbl["center"]),
                        float(tbl["core_radius"]), float(tbl.get("polarity", 1.0)))
    if kind == "file":
        return M0File(str(tbl["path"]))
    raise ConfigurationError(f"initial.m0: unknown kind '{kind}'")


def _parse_s0(tbl: dict):
    kind = tbl.get("kind", "zero")
    if kind == "zero":
        return S0Zero()
    if kind == "uniform":
        return S0Uniform(tuple(float(x) for x in tbl["vector"]))
    if kind == "file":
        return S0File(str(tbl["path"]))
    raise ConfigurationError(f"initial.s0: unknown kind '{kind}'")


def _parse_source(tbl: dict, target: SourceTarget, si_mode: bool,
                  vec_convert, time_convert, t_final: float) -> SourceField:
    dim = "field" if target is SourceTarget.APPLIED_F else "current"
    kind = tbl.get("kind")
    if kind == "constant":
        vec = vec_convert(_parse_vector_quantity(tbl["vector"], dim, si_mode, "source"))
        return constant_source(target, vec, t_final=t_final)
    if kind == "ramp":
        v0 = vec_convert(_parse_vector_quantity(tbl["start"], dim, si_mode, "source"))
        v1 = vec_convert(_parse_vector_quantity(tbl["stop"], dim, si_mode, "source"))
        t_ramp = time_convert(_parse_quantity(tbl["t_ramp"], "time", si_mode, "t_ramp"))
        return ramp_source(target, v0, v1, t_ramp, t_final=t_final)
    raise ConfigurationError(f"source: unknown kind '{kind}'")


def parse_config(data: dict, base_dir: str = ".") -> SimConfig:
    """Build a SimConfig from a parsed TOML table."""
    try:
        mat = data["material"]
        time_tbl = data["time"]
        geo_tbl = data["geometry"]
        init_tbl = data["initial"]
        src_tbl = data["sources"]
    except KeyError as exc:
        raise ConfigurationError(f"missing section {exc}") from None

    mode = mat.get("mode", "nondimensional")
    if mode not in ("nondimensional", "si"):
        raise ConfigurationError("material.mode must be 'nondimensional' or 'si'")
    si_mode = mode == "si"

    theta = float(time_tbl.get("theta", 1.0))
    easy_axis = tuple(float(x) for x in mat.get("easy_axis", (0.0, 0.0, 1.0)))

    if si_mode:
        si = scaling.SIParams(
            Ms=_parse_quantity(mat["Ms"], "field", True, "Ms"),
            A_exch=_parse_quantity(mat["A_exch"], "exchange", True, "A_exch"),
            alpha=float(mat["alpha"]),
            K_ani=_parse_quantity(mat.get("K_ani", 0.0), "anisotropy", True, "K_ani")
            if "K_ani" in mat else 0.0,
            J_coupling=_parse_quantity(mat.get("J_coupling", 0.0), "coupling", True,
                                       "J_coupling") if "J_coupling" in mat else 0.0,
            D0_tilde=1e-3,  # replaced per region below
            lambda_sf=_parse_quantity(mat["lambda_sf"], "length", True, "lambda_sf")
            if "lambda_sf" in mat else None,
            lambda_J=_parse_quantity(mat["lambda_J"], "length", True, "lambda_J")
            if "lambda_J" in mat else None,
            beta=float(mat["beta"]), beta_prime=float(mat["beta_prime"]),
        )
        length_choice = mat.get("length_scale", "intrinsic")
        if length_choice == "intrinsic":
            nd = scaling.nondimensionalize(si, scaling.INTRINSIC)
        else:
            nd = scaling.nondimensionalize(
                si, _parse_quantity(length_choice, "length", True, "length_scale"))
        length = nd.length_scale
        d0_mag, d0_con = _parse_d0(mat["D0_tilde"], True, si, length)
        params = MaterialParams(
            alpha=si.alpha, c=nd.c, beta=si.beta, beta_prime=si.beta_prime,
            theta=theta, C_exch=nd.C_exch, C_ani=nd.C_ani, easy_axis=easy_axis,
            D0_magnetic=d0_mag, D0_conductor=d0_con,
            reaction_scale_sf=nd.reaction_scale_sf,
            reaction_scale_J=nd.reaction_scale_J)
        time_convert = lambda t: scaling.time_to_nondim(t, si)
        f_convert = lambda v: scaling.field_scale(si) * v
        j_convert = lambda v: scaling.current_scale(si, length) * v
    else:
        si = None
        length = 1.0
        d0_mag, d0_con = _parse_d0(mat["D0"], False, None, 1.0)
        params = MaterialParams(
            alpha=float(mat["alpha"]), c=float(mat.get("c", 0.0)),
            beta=float(mat["beta"]), beta_prime=float(mat["beta_prime"]),
            theta=theta, C_exch=float(mat.get("C_exch", 1.0)),
            C_ani=float(mat.get("C_ani", 0.0)), easy_axis=easy_axis,
            D0_magnetic=d0_mag, D0_conductor=d0_con)
        time_convert = lambda t: t
        f_convert = j_convert = lambda v: v

    k = time_convert(_parse_quantity(time_tbl["k"], "time", si_mode, "time.k"))
    t_final = time_convert(_parse_quantity(time_tbl["t_final"], "time", si_mode,
                                           "time.t_final"))

    geometry = _parse_geometry(geo_tbl, si_mode, length)

    f_source = _parse_source(src_tbl["f"], SourceTarget.APPLIED_F, si_mode,
                             f_convert, time_convert, t_final)
    j_source = _parse_source(src_tbl["j"], SourceTarget.CURRENT_J, si_mode,
                             j_convert, time_convert, t_final)

    solver_tbl = data.get("solver", {})
    solver = SolverConfig(tol=float(solver_tbl.get("tol", 1e-10)),
                          max_iter_factor=int(solver_tbl.get("max_iter_factor", 10)))
    out_tbl = data.get("output", {})
    output = OutputConfig(
        directory=str(out_tbl.get("directory", "out")),
        vtk_every=int(out_tbl.get("vtk_every", 0)),
        ledger=str(out_tbl.get("ledger", "ledger.csv")),
        checkpoint_every=int(out_tbl.get("checkpoint_every", 0)),
        checkpoint_path=str(out_tbl.get("checkpoint_path", "")))

    m0 = _parse_m0(init_tbl["m0"])
    s0 = _parse_s0(init_tbl.get("s0", {"kind": "zero"}))
    if isinstance(m0, M0File) and not os.path.isabs(m0.path):
        m0 = M0File(os.path.join(base_dir, m0.path))
    if isinstance(s0, S0File) and not os.path.isabs(s0.path):
        s0 = S0File(os.path.join(base_dir, s0.path))

    return SimConfig(geometry=geometry, params=params, k=k, t_final=t_final,
                     m0=m0, s0=s0, f_source=f_source, j_source=j_source,
                     solver=solver, output=output, si=si)


def load_config(path: str) -> SimConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML in {path}: {exc}") from None
    return parse_config(data, base_dir=os.path.dirname(os.path.abspath(path)))
