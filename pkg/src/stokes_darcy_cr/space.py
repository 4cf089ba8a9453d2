"""Variant Crouzeix-Raviart velocity space and piecewise-constant pressures.

Velocities are P1 per triangle and are described by their values at the
three edge midpoints. For P1 functions the edge mean equals the midpoint
value, so the weak continuity rules of the space become identifications of
midpoint values:

* Stokes edges (interior and on Gamma_s): the full midpoint vector is shared;
  on Gamma_s it is zero.
* Darcy edges, Gamma_d and the interface: only the normal component is
  shared (fixed by the boundary datum on Gamma_d); each side keeps its own
  tangential component.

Each local midpoint value is stored as two scalars along a per-edge frame:
``(e_x, e_y)`` on Stokes edges, ``(n_E, tau_E)`` everywhere else.
"""
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .mesh import EdgeClass
from .quadrature import gauss_segment

CONSTRAINED = -1


class DofKind(IntEnum):
    SHARED_VECTOR = 0
    SHARED_NORMAL = 1
    TANGENTIAL_LOCAL = 2


@dataclass(frozen=True, eq=False)
class DofMap:
    kind: np.ndarray          # (n_velocity,) DofKind
    edge: np.ndarray          # (n_velocity,) edge id
    aux: np.ndarray           # (n_velocity,) component for SHARED_VECTOR, element for TANGENTIAL_LOCAL, else -1
    local_dofs: np.ndarray    # (T, 3, 2) global index or CONSTRAINED
    local_frame: np.ndarray   # (T, 3, 2, 2) direction of each local scalar
    flux_edges: np.ndarray    # (n_flux,) Gamma_d edges whose normal value is prescribed
    local_flux: np.ndarray    # (T, 3, 2) index into flux_edges or -1
    n_pressure: int

    @property
    def n_velocity(self):
        return len(self.kind)

    @property
    def n_flux(self):
        return len(self.flux_edges)

    def extended_local_dofs(self):
        """Local table where prescribed Gamma_d normals map to
        ``n_velocity + flux index``; Gamma_s slots stay CONSTRAINED."""
        ext = self.local_dofs.copy()
        mask = self.local_flux >= 0
        ext[mask] = self.n_velocity + self.local_flux[mask]
        return ext


def build_dof_map(mesh):
    """Number the velocity unknowns edge by edge (normal before tangential,
    component 0 before 1)."""
    if mesh.edge_class is None:
        raise ValueError("mesh edges are not classified")
    T = mesh.n_triangles
    local_dofs = np.full((T, 3, 2), CONSTRAINED, dtype=np.int64)
    local_flux = np.full((T, 3, 2), -1, dtype=np.int64)
    frame = np.zeros((T, 3, 2, 2))
    kind, edge_of, aux, flux_edges = [], [], [], []

    def add(k, e, a):
        kind.append(k)
        edge_of.append(e)
        aux.append(a)
        return len(kind) - 1

    for e, cls in enumerate(mesh.edge_class):
        sides = [(t, i) for t, i in zip(mesh.edge_elements[e], mesh.edge_local[e]) if t >= 0]
        if cls in (EdgeClass.INTERIOR_STOKES, EdgeClass.GAMMA_S):
            for t, i in sides:
                frame[t, i] = np.eye(2)
            if cls == EdgeClass.INTERIOR_STOKES:
                d0 = add(DofKind.SHARED_VECTOR, e, 0)
                d1 = add(DofKind.SHARED_VECTOR, e, 1)
                for t, i in sides:
                    local_dofs[t, i] = (d0, d1)
            continue

        for t, i in sides:
            frame[t, i, 0] = mesh.normal[e]
            frame[t, i, 1] = mesh.tangent[e]
        if cls == EdgeClass.GAMMA_D:
            (t, i), = sides
            local_flux[t, i, 0] = len(flux_edges)
            flux_edges.append(e)
            local_dofs[t, i, 1] = add(DofKind.TANGENTIAL_LOCAL, e, t)
        else:
            dn = add(DofKind.SHARED_NORMAL, e, -1)
            for t, i in sides:
                local_dofs[t, i, 0] = dn
            for t, i in sides:
                local_dofs[t, i, 1] = add(DofKind.TANGENTIAL_LOCAL, e, t)

    return DofMap(
        kind=np.array(kind, dtype=np.int8),
        edge=np.array(edge_of, dtype=np.int64),
        aux=np.array(aux, dtype=np.int64),
        local_dofs=local_dofs,
        local_frame=frame,
        flux_edges=np.array(flux_edges, dtype=np.int64),
        local_flux=local_flux,
        n_pressure=T,
    )


# ---------------------------------------------------------------------------
# local basis

def barycentric_gradients(mesh):
    """Gradients of the barycentric coordinates, shape (T, 3, 2)."""
    P = mesh.element_vertices()
    opp = np.roll(P, -1, axis=1), np.roll(P, -2, axis=1)   # vertices i+1, i+2
    d = opp[1] - opp[0]
    # grad lambda_i is the inward normal of edge i scaled by |E_i| / (2|T|)
    rot = np.stack([-d[..., 1], d[..., 0]], axis=-1)
    return rot / (2.0 * mesh.area[:, None, None])


def basis_gradients(mesh):
    """Gradients of the CR functions ``psi_i = 1 - 2 lambda_i``, (T, 3, 2)."""
    return -2.0 * barycentric_gradients(mesh)


def barycentric_coordinates(mesh, elements, points):
    """Barycentric coordinates of ``points`` (..., 2) w.r.t. ``elements`` (...)."""
    elements = np.asarray(elements)
    points = np.asarray(points, dtype=float)
    P = mesh.vertices[mesh.triangles[elements]]
    G = barycentric_gradients(mesh)[elements]
    # lambda_i(x) = 1/3 + grad lambda_i . (x - centroid)
    centroid = P.mean(axis=-2)
    return 1.0 / 3.0 + np.einsum("...ij,...j->...i", G, points - centroid)


def basis_values(lam):
    """CR basis values from barycentric coordinates."""
    return 1.0 - 2.0 * lam


def reference_basis(xr, yr):
    """Closed-form CR basis on the reference triangle, ordered as
    ``(1 - 2y, -1 + 2x + 2y, 1 - 2x)``."""
    xr = np.asarray(xr, dtype=float)
    yr = np.asarray(yr, dtype=float)
    return np.stack([1.0 - 2.0 * yr, -1.0 + 2.0 * xr + 2.0 * yr, 1.0 - 2.0 * xr], axis=-1)


# ---------------------------------------------------------------------------
# discrete fields

@dataclass(eq=False)
class DiscreteVelocity:
    """Element of the velocity space: free coefficients plus the prescribed
    normal values on Gamma_d edges."""

    dofmap: DofMap
    coefficients: np.ndarray
    flux: np.ndarray = field(default=None)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.dofmap.n_velocity,):
            raise ValueError("coefficient vector does not match the dof map")
        if self.flux is None:
            self.flux = np.zeros(self.dofmap.n_flux)
        self.flux = np.asarray(self.flux, dtype=float)

    def extended(self):
        return np.concatenate([self.coefficients, self.flux])

    def midpoint_values(self):
        """Midpoint vectors of every element, shape (T, 3, 2)."""
        ext = self.dofmap.extended_local_dofs()
        vals = np.where(ext >= 0, self.extended()[np.maximum(ext, 0)], 0.0)
        return np.einsum("tik,tikd->tid", vals, self.dofmap.local_frame)

    def gradients(self, mesh):
        """Constant gradient per element: ``G[t, a, b] = d u_a / d x_b``."""
        return np.einsum("tia,tib->tab", self.midpoint_values(), basis_gradients(mesh))

    def evaluate(self, mesh, elements, points):
        """Values at ``points`` (..., 2) inside ``elements`` (...)."""
        elements = np.asarray(elements)
        if np.any(elements < 0) or np.any(elements >= mesh.n_triangles):
            raise IndexError("element id out of range")
        lam = barycentric_coordinates(mesh, elements, points)
        return np.einsum("...i,...id->...d", basis_values(lam), self.midpoint_values()[elements])


def eval_velocity(mesh, u, element, point):
    """Velocity of ``u`` at ``point`` inside triangle ``element``."""
    return u.evaluate(mesh, element, point)


def discrete_divergence(mesh, u):
    """Elementwise divergence of a discrete velocity, shape (T,)."""
    return np.einsum("tid,tid->t", u.midpoint_values(), basis_gradients(mesh))


def _side_means(mesh, v, order):
    """Edge means of ``v`` seen from each element, shape (T, 3, 2)."""
    t, w = gauss_segment(order)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]        # (E, Q, 2)
    elem_pts = pts[mesh.element_edges]                                   # (T, 3, Q, 2)
    if isinstance(v, DiscreteVelocity):
        elems = np.broadcast_to(np.arange(mesh.n_triangles)[:, None, None], elem_pts.shape[:-1])
        vals = v.evaluate(mesh, elems, elem_pts)
    else:
        vals = np.asarray(v(elem_pts), dtype=float)
    return np.einsum("tiqd,q->tid", vals, w)


def cr_interpolate(mesh, dofmap, v, order=2):
    """Crouzeix-Raviart interpolant: every edge degree of freedom takes the
    matching component of the edge mean of ``v``.

    ``v`` is either a vectorised callable ``v(points) -> values`` with
    trailing dimension 2, or a :class:`DiscreteVelocity` (then each side uses
    its own trace). Edge means use ``order``-point Gauss quadrature.
    """
    means = _side_means(mesh, v, order)
    coeff = np.zeros(dofmap.n_velocity)
    count = np.zeros(dofmap.n_velocity)
    proj = np.einsum("tid,tikd->tik", means, dofmap.local_frame)
    mask = dofmap.local_dofs >= 0
    np.add.at(coeff, dofmap.local_dofs[mask], proj[mask])
    np.add.at(count, dofmap.local_dofs[mask], 1.0)
    coeff /= np.maximum(count, 1.0)

    flux = np.zeros(dofmap.n_flux)
    fmask = dofmap.local_flux >= 0
    flux[dofmap.local_flux[fmask]] = proj[fmask]
    return DiscreteVelocity(dofmap, coeff, flux)


def boundary_flux_values(mesh, dofmap, normal_flux, order=5):
    """Edge means of a normal-flux datum ``normal_flux(points, normals) -> u.n``
    on the Gamma_d edges, in ``dofmap.flux_edges`` order."""
    if normal_flux is None or dofmap.n_flux == 0:
        return np.zeros(dofmap.n_flux)
    t, w = gauss_segment(order)
    e = dofmap.flux_edges
    a = mesh.vertices[mesh.edges[e, 0]]
    b = mesh.vertices[mesh.edges[e, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    normals = np.broadcast_to(mesh.normal[e][:, None, :], pts.shape)
    return np.asarray(normal_flux(pts, normals), dtype=float) @ w
