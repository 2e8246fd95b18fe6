"""P1 tetrahedral finite-element toolkit.

Element mass and stiffness use exact closed-form integrals.  A degree-2
quadrature rule on the reference tet is provided for terms with a P1
coefficient field (the magnetization-dependent parts of the spin-diffusion
form), together with an edge-midpoint rule on boundary triangles.  Nodal
vector fields live on one of two node sets: all mesh nodes, or the nodes of
the magnetic region.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import sparse

from .errors import ConstraintError, MeshError
from .mesh import Region, TetMesh, signed_volumes


class Support(Enum):
    """Node set a nodal field is defined on."""

    OMEGA_ALL = "omega_all"            # every mesh node
    OMEGA_MAGNETIC = "omega_magnetic"  # nodes touching magnetic tets


@dataclass(frozen=True)
class NodalField3:
    """One 3-vector per node of the declared node set."""

    values: np.ndarray
    support: Support

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("nodal field values must have shape (n, 3)")
        v.flags.writeable = False   # fields are immutable snapshots
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def flat(self) -> np.ndarray:
        """Interleaved (x0,y0,z0,x1,...) view used with kron-expanded matrices."""
        return self.values.reshape(-1)


def node_count(mesh: TetMesh, support: Support) -> int:
    return mesh.n_nodes if support is Support.OMEGA_ALL else len(mesh.omega_nodes)


def support_nodes(mesh: TetMesh, support: Support) -> np.ndarray:
    if support is Support.OMEGA_ALL:
        return np.arange(mesh.n_nodes)
    return mesh.omega_nodes


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and weights on the reference simplex.

    Weights sum to one; the reference volume is factored out, so an
    integral is ``volume * sum_q w_q f(x_q)``.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


_A4 = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
_B4 = (5.0 - np.sqrt(5.0)) / 20.0
#: 4-point rule, exact for polynomials up to total degree 2 on a tet.
TET_DEGREE2 = QuadratureRule(
    points=np.array([[_A4 if i == j else _B4 for j in range(4)] for i in range(4)]),
    weights=np.full(4, 0.25),
    degree=2,
)
#: barycenter rule, exact for affine integrands.
TET_DEGREE1 = QuadratureRule(points=np.full((1, 4), 0.25), weights=np.ones(1), degree=1)
#: edge-midpoint rule on triangles, exact up to degree 2.
TRI_MIDPOINT = QuadratureRule(
    points=np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
    weights=np.full(3, 1.0 / 3.0),
    degree=2,
)

# exact integrals of cubic barycentric monomials:
#   int_T lam_a lam_b lam_c = V * P1_CUBIC_INTEGRALS[a, b, c]
P1_CUBIC_INTEGRALS = np.empty((4, 4, 4))
for _a in range(4):
    for _b in range(4):
        for _c in range(4):
            mult = len({_a, _b, _c})
            P1_CUBIC_INTEGRALS[_a, _b, _c] = (1 / 20, 1 / 60, 1 / 120)[mult - 1]


def tet_geometry(coords: np.ndarray) -> tuple[float, np.ndarray]:
    """Volume and constant P1 basis gradients (4, 3) of one tet."""
    d = coords[1:] - coords[0]
    vol = float(np.linalg.det(d)) / 6.0
    scale = float(np.abs(d).max())
    if abs(vol) <= 1e-14 * scale**3 or vol <= 0.0:
        raise MeshError(f"degenerate or inverted tet (volume {vol:g})")
    grads = np.empty((4, 3))
    grads[1:] = np.linalg.inv(d).T
    grads[0] = -grads[1:].sum(axis=0)
    return vol, grads


def element_stiffness(coords: np.ndarray) -> np.ndarray:
    """Exact P1 stiffness 4x4: K_ab = V * grad(lam_a) . grad(lam_b)."""
    vol, grads = tet_geometry(coords)
    return vol * grads @ grads.T


def element_mass(coords: np.ndarray) -> np.ndarray:
    """Exact P1 mass 4x4: V/10 on the diagonal, V/20 off it."""
    vol, _ = tet_geometry(coords)
    return vol / 20.0 * (np.ones((4, 4)) + np.eye(4))


def assemble(mesh: TetMesh, kernel, region: Region | None = None,
             coefficient=None) -> sparse.csr_matrix:
    """Scatter coefficient-weighted element matrices into a global matrix.

    ``kernel(coords) -> (4, 4)`` produces the element matrix; ``region``
    restricts the sum to tets of that tag; ``coefficient`` is a scalar or a
    per-tet array.  The result is returned in canonical CSR form (sorted,
    duplicate-free) so assembly output is reproducible.
    """
    n = mesh.n_nodes
    if region is None:
        tet_ids = np.arange(mesh.n_tets)
    else:
        tet_ids = np.nonzero(mesh.tet_region == int(region))[0]
    if coefficient is None:
        coeff = np.ones(len(tet_ids))
    elif np.isscalar(coefficient):
        coeff = np.full(len(tet_ids), float(coefficient))
    else:
        coeff = np.asarray(coefficient, dtype=np.float64)[tet_ids]

    rows, cols, data = [], [], []
    for c, t in zip(coeff, tet_ids):
        nodes = mesh.tets[t]
        ke = kernel(mesh.node_coords[nodes]) * c
        rows.append(np.repeat(nodes, 4))
        cols.append(np.tile(nodes, 4))
        data.append(ke.reshape(-1))
    if rows:
        mat = sparse.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n)).tocsr()
    else:
        mat = sparse.csr_matrix((n, n))
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def nodal_interpolate(mesh: TetMesh, support: Support, fn) -> NodalField3:
    """Evaluate ``fn(x) -> 3-vector`` at each node of the node set."""
    nodes = support_nodes(mesh, support)
    values = np.array([fn(mesh.node_coords[z]) for z in nodes], dtype=np.float64)
    values = values.reshape(len(nodes), 3)
    if not np.all(np.isfinite(values)):
        raise ValueError("interpolated field has non-finite entries")
    return NodalField3(values, support)


def constant_field(mesh: TetMesh, support: Support, vec) -> NodalField3:
    vec = np.asarray(vec, dtype=np.float64).reshape(3)
    return NodalField3(np.tile(vec, (node_count(mesh, support), 1)), support)


def zero_field(mesh: TetMesh, support: Support) -> NodalField3:
    return NodalField3(np.zeros((node_count(mesh, support), 3)), support)


def nodal_projection(field: NodalField3, tol: float = 1e-12) -> NodalField3:
    """Normalize every nodal vector to unit modulus.

    The integrator guarantees nodal moduli >= 1, so any modulus below
    ``1 - tol`` signals a bug upstream and raises.
    """
    norms = np.linalg.norm(field.values, axis=1)
    if np.any(norms < 1.0 - tol):
        worst = float(norms.min())
        raise ConstraintError(
            f"nodal modulus {worst:.15g} < 1: field is outside the admissible set")
    # nodes already at unit modulus (within rounding) pass through untouched,
    # which makes the projection exactly idempotent
    out = field.values.copy()
    off = np.abs(norms - 1.0) > 4e-16
    out[off] = field.values[off] / norms[off, None]
    return NodalField3(out, field.support)


def _region_tets(mesh: TetMesh, support: Support) -> np.ndarray:
    if support is Support.OMEGA_ALL:
        return np.arange(mesh.n_tets)
    return np.nonzero(mesh.tet_region == Region.MAGNETIC)[0]


def discrete_norm_check(mesh: TetMesh, field: NodalField3, r: float,
                        rule: QuadratureRule = TET_DEGREE2):
    """Compare the L^r norm of a P1 field with its scaled nodal sum.

    Returns ``(lhs, nodal_sum, ratio)`` where ``lhs`` is the quadrature
    value of ``int |w|^r`` over the field's support region, ``nodal_sum``
    is ``h^3 * sum_z |w(z)|^r``, and ``ratio = lhs / nodal_sum``.  The two
    are equivalent up to mesh-family constants.
    """
    if r < 1:
        raise ValueError("exponent r must be >= 1")
    from .mesh import mesh_size

    tet_ids = _region_tets(mesh, support=field.support)
    glob = mesh.tets[tet_ids]
    if field.support is Support.OMEGA_MAGNETIC:
        index = np.full(mesh.n_nodes, -1, dtype=np.int64)
        index[mesh.omega_nodes] = np.arange(len(mesh.omega_nodes))
        loc = index[glob]
    else:
        loc = glob
    vols = signed_volumes(mesh.node_coords, mesh.tets)[tet_ids]
    vals = field.values[loc]                          # (E, 4, 3)
    at_q = np.einsum("qa,eax->eqx", rule.points, vals)
    mods = np.linalg.norm(at_q, axis=2) ** r          # (E, Q)
    lhs = float(np.einsum("e,q,eq->", vols, rule.weights, mods))
    h, _ = mesh_size(mesh)
    nodal = float(h**3 * (np.linalg.norm(field.values, axis=1) ** r).sum())
    return lhs, nodal, lhs / nodal


class FemWorkspace:
    """Per-mesh cache of assembled matrices and element data.

    Everything here is immutable after construction and safe to share
    between steps; the per-step magnetization-dependent matrices are built
    by the integrator modules from the cached element arrays.
    """

    def __init__(self, mesh: TetMesh):
        self.mesh = mesh
        self.n_nodes = mesh.n_nodes
        self.omega_nodes = mesh.omega_nodes
        self.n_omega = len(mesh.omega_nodes)
        self.omega_index = np.full(mesh.n_nodes, -1, dtype=np.int64)
        self.omega_index[mesh.omega_nodes] = np.arange(self.n_omega)

        self.mass_all = assemble(mesh, element_mass)
        self.stiff_all = assemble(mesh, element_stiffness)
        mass_mag = assemble(mesh, element_mass, region=Region.MAGNETIC)
        stiff_mag = assemble(mesh, element_stiffness, region=Region.MAGNETIC)
        ix = mesh.omega_nodes
        self.mass_omega = mass_mag[ix][:, ix].tocsr()
        self.stiff_omega = stiff_mag[ix][:, ix].tocsr()

        eye3 = sparse.identity(3, format="csr")
        self.mass_all3 = sparse.kron(self.mass_all, eye3, format="csr")
        self.stiff_all3 = sparse.kron(self.stiff_all, eye3, format="csr")
        self.mass_omega3 = sparse.kron(self.mass_omega, eye3, format="csr")
        self.stiff_omega3 = sparse.kron(self.stiff_omega, eye3, format="csr")

        # element geometry caches
        p = mesh.node_coords[mesh.tets]
        d = p[:, 1:] - p[:, :1]
        self.tet_vols = np.linalg.det(d) / 6.0
        grads = np.empty((mesh.n_tets, 4, 3))
        grads[:, 1:] = np.transpose(np.linalg.inv(d), (0, 2, 1))
        grads[:, 0] = -grads[:, 1:].sum(axis=1)
        self.tet_grads = grads

        mag = np.nonzero(mesh.tet_region == Region.MAGNETIC)[0]
        self.mag_tets = mag
        self.mag_nodes_global = mesh.tets[mag]
        self.mag_nodes_local = self.omega_index[self.mag_nodes_global]
        self.mag_vols = self.tet_vols[mag]
        self.mag_grads = self.tet_grads[mag]
        # element stiffness entries for the magnetic tets, reused by the
        # anisotropic spin term
        self.mag_ke = np.einsum("e,eak,ebk->eab", self.mag_vols,
                                self.mag_grads, self.mag_grads)

        shared = np.nonzero(mesh.facet_tags == 2)[0]   # FacetTag.SHARED
        fn = mesh.facet_nodes[shared]
        self.shared_facet_nodes = fn
        if len(shared):
            q = mesh.node_coords
            u = q[fn[:, 1]] - q[fn[:, 0]]
            v = q[fn[:, 2]] - q[fn[:, 0]]
            nrm = np.cross(u, v)
            self.shared_facet_area = 0.5 * np.linalg.norm(nrm, axis=1)
            normal = nrm / np.linalg.norm(nrm, axis=1)[:, None]
            tet_centroid = q[mesh.tets[mesh.facet_tet[shared]]].mean(axis=1)
            facet_centroid = q[fn].mean(axis=1)
            flip = np.einsum("fx,fx->f", normal, facet_centroid - tet_centroid) < 0
            normal[flip] *= -1.0
            self.shared_facet_normal = normal
        else:
            self.shared_facet_area = np.zeros(0)
            self.shared_facet_normal = np.zeros((0, 3))

    # -- field helpers ----------------------------------------------------
    def check_field(self, field: NodalField3, support: Support) -> NodalField3:
        if field.support is not support:
            raise ValueError(f"field support {field.support} != expected {support}")
        if field.n != node_count(self.mesh, support):
            raise ValueError("field length does not match its node set")
        return field

    def restrict_to_omega(self, field: NodalField3) -> NodalField3:
        """Values of an everywhere-defined field at the magnetic nodes."""
        self.check_field(field, Support.OMEGA_ALL)
        return NodalField3(field.values[self.omega_nodes], Support.OMEGA_MAGNETIC)

    def extend_by_zero(self, field: NodalField3) -> np.ndarray:
        """(n_nodes, 3) array with the magnetic-node values, zero elsewhere."""
        self.check_field(field, Support.OMEGA_MAGNETIC)
        out = np.zeros((self.n_nodes, 3))
        out[self.omega_nodes] = field.values
        return out

    # -- inner products (consistent with the assembled matrices) ----------
    def l2_sq_omega(self, a: np.ndarray, b: np.ndarray | None = None) -> float:
        b = a if b is None else b
        return float(a.reshape(-1) @ (self.mass_omega3 @ b.reshape(-1)))

    def grad_sq_omega(self, a: np.ndarray, b: np.ndarray | None = None) -> float:
        b = a if b is None else b
        return float(a.reshape(-1) @ (self.stiff_omega3 @ b.reshape(-1)))

    def l2_sq_all(self, a: np.ndarray, b: np.ndarray | None = None) -> float:
        b = a if b is None else b
        return float(a.reshape(-1) @ (self.mass_all3 @ b.reshape(-1)))

    def grad_sq_all(self, a: np.ndarray, b: np.ndarray | None = None) -> float:
        b = a if b is None else b
        return float(a.reshape(-1) @ (self.stiff_all3 @ b.reshape(-1)))

    def h1_sq_all(self, a: np.ndarray) -> float:
        return self.l2_sq_all(a) + self.grad_sq_all(a)
