"""Structured tetrahedral meshes for layered conductor/magnet stacks.

The generator builds a cuboid stack of material layers on a structured grid
and splits every hex cell into six tetrahedra along a globally consistent
corner-to-corner diagonal, so the mesh is conforming by construction and
layer interfaces coincide with mesh planes.  Each tetrahedron carries the
material tag of its layer; facets on the outer boundary and on the boundary
of the magnetic region are classified and stored with the mesh.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import MeshError


class Region(IntEnum):
    CONDUCTOR = 0
    MAGNETIC = 1


class FacetTag(IntEnum):
    """Classification of stored facets.

    OUTER      on the outer boundary only (conductor side).
    INTERFACE  between a magnetic and a conductor tet, interior.
    SHARED     on the outer boundary and on the magnetic-region boundary.
    """

    OUTER = 0
    INTERFACE = 1
    SHARED = 2


# Axis orders of the six path tetrahedra through a hex cell.  Odd
# permutations get their last two nodes swapped to restore positive
# orientation (the sign of the path tet equals the permutation sign).
_KUHN_PATHS = (
    (0, 1, 2), (1, 2, 0), (2, 0, 1),   # even
    (0, 2, 1), (2, 1, 0), (1, 0, 2),   # odd
)
_LOCAL_FACETS = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))


@dataclass(frozen=True)
class TetMesh:
    """Conforming tetrahedral mesh with a tagged magnetic subregion.

    ``facet_nodes``/``facet_tags`` hold every facet on the outer boundary or
    on the magnetic-region boundary; ``facet_tet`` is the incident tet
    (magnetic side for INTERFACE/SHARED facets).  ``omega_nodes`` is the
    sorted set of nodes touching at least one magnetic tet, interface nodes
    included.  ``layer_z``/``layer_tags`` are generator metadata used by the
    validator to check that the magnetic region is resolved by the grid.
    """

    node_coords: np.ndarray
    tets: np.ndarray
    tet_region: np.ndarray
    facet_nodes: np.ndarray
    facet_tags: np.ndarray
    facet_tet: np.ndarray
    omega_nodes: np.ndarray
    layer_z: np.ndarray | None = None
    layer_tags: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    def fingerprint(self) -> bytes:
        """SHA-256 digest of the geometry, used to guard checkpoint restarts."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.node_coords).tobytes())
        h.update(np.ascontiguousarray(self.tets).tobytes())
        h.update(np.ascontiguousarray(self.tet_region).tobytes())
        return h.digest()


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def signed_volumes(coords: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volume of every tet (positive for correct orientation)."""
    p = coords[tets]
    d = p[:, 1:] - p[:, :1]
    return np.linalg.det(d) / 6.0


def _facet_incidence(tets: np.ndarray):
    """All facets as sorted node triples with their incident tets."""
    n_tets = tets.shape[0]
    facets = np.sort(tets[:, _LOCAL_FACETS], axis=2).reshape(-1, 3)
    owner = np.repeat(np.arange(n_tets), 4)
    uniq, inverse, counts = np.unique(facets, axis=0,
                                      return_inverse=True, return_counts=True)
    order = np.argsort(inverse, kind="stable")
    starts = np.concatenate(([0], np.cumsum(counts)))
    return uniq, counts, owner[order], starts


def _classify_facets(tets, tet_region):
    uniq, counts, owners, starts = _facet_incidence(tets)
    nodes, tags, inc = [], [], []
    for i in range(uniq.shape[0]):
        tet_ids = owners[starts[i]:starts[i + 1]]
        regions = tet_region[tet_ids]
        if counts[i] == 1:
            tag = FacetTag.SHARED if regions[0] == Region.MAGNETIC else FacetTag.OUTER
            keep = tet_ids[0]
        elif counts[i] == 2 and regions[0] != regions[1]:
            tag = FacetTag.INTERFACE
            keep = tet_ids[0] if regions[0] == Region.MAGNETIC else tet_ids[1]
        else:
            continue
        nodes.append(uniq[i])
        tags.append(int(tag))
        inc.append(keep)
    return (np.asarray(nodes, dtype=np.int64).reshape(-1, 3),
            np.asarray(tags, dtype=np.int64),
            np.asarray(inc, dtype=np.int64))


def from_arrays(coords, tets, tet_region, layer_z=None, layer_tags=None) -> TetMesh:
    """Assemble a TetMesh from raw arrays, deriving facets and omega nodes.

    Input arrays are taken as given (no orientation fixing); run
    :func:`validate_mesh` on meshes of unknown provenance.
    """
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    tets = np.ascontiguousarray(tets, dtype=np.int64)
    tet_region = np.ascontiguousarray(tet_region, dtype=np.int64)
    if tets.ndim != 2 or tets.shape[1] != 4:
        raise MeshError("tets must have shape (n, 4)")
    if tet_region.shape[0] != tets.shape[0]:
        raise MeshError("one region tag per tet required")
    facet_nodes, facet_tags, facet_tet = _classify_facets(tets, tet_region)
    magnetic = tets[tet_region == Region.MAGNETIC]
    omega_nodes = np.unique(magnetic)
    mesh = TetMesh(
        node_coords=_freeze(coords),
        tets=_freeze(tets),
        tet_region=_freeze(tet_region),
        facet_nodes=_freeze(facet_nodes),
        facet_tags=_freeze(facet_tags),
        facet_tet=_freeze(facet_tet),
        omega_nodes=_freeze(omega_nodes),
        layer_z=None if layer_z is None else _freeze(np.asarray(layer_z, dtype=np.float64)),
        layer_tags=None if layer_tags is None else _freeze(np.asarray(layer_tags, dtype=np.int64)),
    )
    return mesh


def build_multilayer_mesh(layer_specs, cross_section, resolution) -> TetMesh:
    """Generate a structured multilayer mesh.

    Parameters
    ----------
    layer_specs : sequence of (thickness, Region)
        Stack layers, bottom to top, along the z axis.
    cross_section : (width, depth)
        Extent in x and y.
    resolution : int or (nx, ny, nz)
        Cells per axis; nz is distributed over the layers proportionally
        to their thickness (a layer that would receive zero cells is
        rejected so every interface lies on a mesh plane).
    """
    if isinstance(resolution, (int, np.integer)):
        resolution = (resolution, resolution, resolution)
    nx, ny, nz = (int(r) for r in resolution)
    if nx < 1 or ny < 1 or nz < 1:
        raise MeshError("resolution must be at least 1 cell per axis")
    width, depth = (float(c) for c in cross_section)
    if width <= 0 or depth <= 0:
        raise MeshError("cross-section dimensions must be positive")
    layers = [(float(t), Region(tag)) for t, tag in layer_specs]
    if not layers:
        raise MeshError("at least one layer required")
    if any(t <= 0 for t, _ in layers):
        raise MeshError("layer thicknesses must be positive")
    if not any(tag == Region.MAGNETIC for _, tag in layers):
        raise MeshError("at least one magnetic layer required")

    total = sum(t for t, _ in layers)
    cells_per_layer = [int(round(nz * t / total)) for t, _ in layers]
    if any(c == 0 for c in cells_per_layer):
        raise MeshError("z resolution too coarse: a layer received zero cells")

    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, depth, ny + 1)
    zs = [np.array([0.0])]
    z0 = 0.0
    for (t, _), c in zip(layers, cells_per_layer):
        zs.append(np.linspace(z0, z0 + t, c + 1)[1:])
        z0 += t
    zs = np.concatenate(zs)
    nz_actual = len(zs) - 1

    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    # node index (i, j, k) -> i + (nx+1)*(j + (ny+1)*k)
    coords = np.stack([X, Y, Z], axis=-1).transpose(2, 1, 0, 3).reshape(-1, 3)

    def node_id(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    ci, cj, ck = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz_actual),
                             indexing="ij")
    ci, cj, ck = ci.ravel(), cj.ravel(), ck.ravel()
    corner = {(dx, dy, dz): node_id(ci + dx, cj + dy, ck + dz)
              for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)}

    tet_blocks = []
    for p, path in enumerate(_KUHN_PATHS):
        offs = [np.zeros(3, dtype=int)]
        for axis in path:
            nxt = offs[-1].copy()
            nxt[axis] += 1
            offs.append(nxt)
        nodes = [corner[tuple(o)] for o in offs]
        if p >= 3:                       # odd permutation: restore orientation
            nodes[2], nodes[3] = nodes[3], nodes[2]
        tet_blocks.append(np.stack(nodes, axis=1))
    tets = np.concatenate(tet_blocks, axis=0)

    layer_of_cell = np.concatenate([np.full(c, ell) for ell, c in enumerate(cells_per_layer)])
    cell_layer = layer_of_cell[ck]
    region_of_layer = np.array([int(tag) for _, tag in layers], dtype=np.int64)
    tet_region = np.tile(region_of_layer[cell_layer], len(_KUHN_PATHS))

    layer_z = np.concatenate(([0.0], np.cumsum([t for t, _ in layers])))
    mesh = from_arrays(coords, tets, tet_region,
                       layer_z=layer_z, layer_tags=region_of_layer)
    vols = signed_volumes(mesh.node_coords, mesh.tets)
    if np.any(vols <= 0):
        raise MeshError("generator produced a non-positive tet volume")
    return mesh


def region_volumes(mesh: TetMesh) -> dict:
    """Total signed volume per region tag."""
    vols = signed_volumes(mesh.node_coords, mesh.tets)
    return {Region(tag): float(vols[mesh.tet_region == tag].sum())
            for tag in np.unique(mesh.tet_region)}


def validate_mesh(mesh: TetMesh) -> list[str]:
    """Check the mesh invariants; return one message per violation.

    Checks: finite coordinates, positive tet volumes, facet incidence
    (interior facets shared by exactly two tets, boundary facets by one),
    omega-node consistency, facet-tag consistency, and, when layer metadata
    is present, that every tet lies inside a single layer slab with the
    matching region tag (the magnetic region is resolved).
    """
    out = []
    if not np.all(np.isfinite(mesh.node_coords)):
        out.append("non-finite node coordinates")
    vols = signed_volumes(mesh.node_coords, mesh.tets)
    for t in np.nonzero(vols <= 0)[0]:
        out.append(f"negative volume: tet {t}")

    uniq, counts, owners, starts = _facet_incidence(mesh.tets)
    for i in np.nonzero(counts > 2)[0]:
        out.append(f"nonconforming: facet {tuple(uniq[i])} shared by {counts[i]} tets")

    magnetic = mesh.tets[mesh.tet_region == Region.MAGNETIC]
    expected = np.unique(magnetic)
    if not np.array_equal(expected, mesh.omega_nodes):
        out.append("omega_nodes does not match nodes incident to magnetic tets")

    # stored facet tags must match what incidence implies
    nodes, tags, _ = _classify_facets(mesh.tets, mesh.tet_region)
    stored = {tuple(f): t for f, t in zip(mesh.facet_nodes, mesh.facet_tags)}
    derived = {tuple(f): t for f, t in zip(nodes, tags)}
    if stored != derived:
        out.append("stored facet classification disagrees with tet incidence")
    for f, t in stored.items():
        if t == FacetTag.SHARED and derived.get(f) != FacetTag.SHARED:
            out.append(f"SHARED facet {f} is not on both boundaries")

    if mesh.layer_z is not None and mesh.layer_tags is not None:
        tol = 1e-9 * float(mesh.layer_z[-1] - mesh.layer_z[0])
        zmin = mesh.node_coords[mesh.tets, 2].min(axis=1)
        zmax = mesh.node_coords[mesh.tets, 2].max(axis=1)
        for t in range(mesh.n_tets):
            lo = np.searchsorted(mesh.layer_z, zmin[t] + tol) - 1
            lo = min(max(lo, 0), len(mesh.layer_tags) - 1)
            if zmax[t] > mesh.layer_z[lo + 1] + tol:
                out.append(f"omega not resolved: tet {t} crosses the interface "
                           f"at z={mesh.layer_z[lo + 1]:g}")
            elif mesh.tet_region[t] != mesh.layer_tags[lo]:
                out.append(f"omega not resolved: tet {t} region tag disagrees "
                           f"with its layer")
    return out


def mesh_size(mesh: TetMesh) -> tuple[float, float]:
    """Return (h, shape_regularity): max tet diameter and max diameter/inradius."""
    p = mesh.node_coords[mesh.tets]
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    edge = np.stack([np.linalg.norm(p[:, a] - p[:, b], axis=1) for a, b in pairs], axis=1)
    diam = edge.max(axis=1)
    vols = signed_volumes(mesh.node_coords, mesh.tets)
    area = np.zeros(mesh.n_tets)
    for f in _LOCAL_FACETS:
        u = p[:, f[1]] - p[:, f[0]]
        v = p[:, f[2]] - p[:, f[0]]
        area += 0.5 * np.linalg.norm(np.cross(u, v), axis=1)
    inradius = 3.0 * np.abs(vols) / area
    return float(diam.max()), float((diam / inradius).max())
