"""Simulation output: legacy ASCII VTK, CSV ledger, binary checkpoints."""
from __future__ import annotations

import csv
import os
import struct

import numpy as np

from .diagnostics import LEDGER_COLUMNS, EnergyLedger
from .errors import ConfigurationError
from .fem import NodalField3, Support
from .mesh import TetMesh

_VTK_TETRA = 10


def write_vtk(path: str, mesh: TetMesh, point_data: dict | None = None,
              cell_data: dict | None = None, title: str = "sdllg output") -> None:
    """Write the mesh and nodal data as a legacy ASCII unstructured grid.

    ``point_data`` maps names to (n_nodes,) scalars or (n_nodes, 3) vectors;
    ``cell_data`` maps names to per-tet scalars.
    """
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for p in mesh.node_coords:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        fh.write(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}\n")
        for t in mesh.tets:
            fh.write(f"4 {t[0]} {t[1]} {t[2]} {t[3]}\n")
        fh.write(f"CELL_TYPES {mesh.n_tets}\n")
        for _ in range(mesh.n_tets):
            fh.write(f"{_VTK_TETRA}\n")
        if cell_data:
            fh.write(f"CELL_DATA {mesh.n_tets}\n")
            for name, values in cell_data.items():
                fh.write(f"SCALARS {name} double\nLOOKUP_TABLE default\n")
                for v in np.asarray(values, dtype=np.float64):
                    fh.write(f"{v:.17g}\n")
        if point_data:
            fh.write(f"POINT_DATA {mesh.n_nodes}\n")
            for name, values in point_data.items():
                values = np.asarray(values, dtype=np.float64)
                if values.ndim == 2:
                    fh.write(f"VECTORS {name} double\n")
                    for v in values:
                        fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
                else:
                    fh.write(f"SCALARS {name} double\nLOOKUP_TABLE default\n")
                    for v in values:
                        fh.write(f"{v:.17g}\n")


def state_point_data(mesh: TetMesh, m: NodalField3, s: NodalField3) -> dict:
    """Standard output fields: m zero-padded outside the magnetic region,
    s everywhere, and the nodal modulus of m."""
    m_full = np.zeros((mesh.n_nodes, 3))
    m_full[mesh.omega_nodes] = m.values
    m_norm = np.zeros(mesh.n_nodes)
    m_norm[mesh.omega_nodes] = np.linalg.norm(m.values, axis=1)
    return {"m": m_full, "s": s.values, "m_norm": m_norm}


def write_ledger_csv(path: str, ledger: EnergyLedger) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LEDGER_COLUMNS)
        for row in ledger.rows():
            writer.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in row])


# -- checkpoints -------------------------------------------------------------
#
# Versioned little-endian binary layout:
#   magic "SDLLGCKP" | u32 version | u32 step | f64 k |
#   u64 n_omega | u64 n_nodes | 32-byte mesh digest |
#   m values (n_omega * 3 f64) | s values (n_nodes * 3 f64)

_MAGIC = b"SDLLGCKP"
_VERSION = 1
_HEADER = struct.Struct("<8sII d QQ 32s")


def save_checkpoint(path: str, mesh: TetMesh, m: NodalField3, s: NodalField3,
                    step: int, k: float) -> None:
    header = _HEADER.pack(_MAGIC, _VERSION, step, k, m.n, s.n, mesh.fingerprint())
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(m.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(s.values, dtype="<f8").tobytes())


def load_checkpoint(path: str, mesh: TetMesh):
    """Read a checkpoint back; returns (m, s, step, k).

    The stored mesh digest must match, so a checkpoint can only resume the
    geometry that produced it.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size or blob[:8] != _MAGIC:
        raise ConfigurationError(f"not a checkpoint file: {path}")
    magic, version, step, k, n_omega, n_nodes, digest = _HEADER.unpack_from(blob)
    if version != _VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {version}")
    if digest != mesh.fingerprint():
        raise ConfigurationError("checkpoint was written for a different mesh")
    if n_omega != len(mesh.omega_nodes) or n_nodes != mesh.n_nodes:
        raise ConfigurationError("checkpoint node counts do not match the mesh")
    off = _HEADER.size
    m_bytes = n_omega * 3 * 8
    m = np.frombuffer(blob, dtype="<f8", count=n_omega * 3, offset=off).reshape(-1, 3)
    s = np.frombuffer(blob, dtype="<f8", count=n_nodes * 3,
                      offset=off + m_bytes).reshape(-1, 3)
    return (NodalField3(m.copy(), Support.OMEGA_MAGNETIC),
            NodalField3(s.copy(), Support.OMEGA_ALL), step, k)


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
