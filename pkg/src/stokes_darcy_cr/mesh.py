"""Conforming triangulations of a two-region rectangle (Stokes | Darcy).

Triangles are stored CCW. Local edge ``i`` of a triangle is the edge opposite
local vertex ``i``, so the Crouzeix-Raviart function ``1 - 2 lambda_i`` has
edge mean one there.
"""
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np


class Region(IntEnum):
    STOKES = 0
    DARCY = 1


class EdgeClass(IntEnum):
    INTERIOR_STOKES = 0
    GAMMA_S = 1
    INTERIOR_DARCY = 2
    GAMMA_D = 3
    INTERFACE = 4


#: Penalty groups of the jump stabilization.
STOKES_PLUS = (EdgeClass.INTERIOR_STOKES, EdgeClass.GAMMA_S)
DARCY_INTERIOR = (EdgeClass.INTERIOR_DARCY,)
DARCY_BOUNDARY = (EdgeClass.INTERFACE, EdgeClass.GAMMA_D)


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Geometry:
    """Rectangle [x0, x1] x [y0, y1] split at ``x = interface_x``.

    The part left of the interface is the Stokes region.
    """

    x0: float = 0.0
    x1: float = 2.0
    y0: float = 0.0
    y1: float = 1.0
    interface_x: float = 1.0

    def validate(self):
        vals = np.array([self.x0, self.x1, self.y0, self.y1, self.interface_x])
        if not np.all(np.isfinite(vals)):
            raise MeshError("geometry coordinates must be finite")
        if not (self.x0 < self.interface_x < self.x1 and self.y0 < self.y1):
            raise MeshError(f"degenerate geometry: {self}")


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray        # (V, 2)
    triangles: np.ndarray       # (T, 3) CCW vertex ids
    region: np.ndarray          # (T,) Region values
    area: np.ndarray            # (T,)
    diameter: np.ndarray        # (T,) h_T
    inradius: np.ndarray        # (T,) r_T
    edges: np.ndarray           # (E, 2) vertex ids, sorted
    edge_elements: np.ndarray   # (E, 2); [0] is the element n_E points out of, [1] = -1 on the boundary
    edge_local: np.ndarray      # (E, 2) local edge index inside edge_elements, -1 if absent
    element_edges: np.ndarray   # (T, 3) edge id of local edge i (opposite vertex i)
    normal: np.ndarray          # (E, 2) n_E
    tangent: np.ndarray         # (E, 2) n_E rotated by +90 degrees
    midpoint: np.ndarray        # (E, 2)
    length: np.ndarray          # (E,) h_E
    edge_class: np.ndarray = None  # (E,) EdgeClass values, set by classify_edges
    geometry: Geometry = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def h(self):
        return float(self.diameter.max())

    @property
    def sigma_h(self):
        return float((self.diameter / (2.0 * self.inradius)).max())

    def edges_in(self, classes):
        """Edge ids whose class is in ``classes``."""
        return np.flatnonzero(np.isin(self.edge_class, np.asarray(classes, dtype=int)))

    def element_vertices(self):
        """Vertex coordinates per triangle, shape (T, 3, 2)."""
        return self.vertices[self.triangles]


def _triangle_metrics(P):
    e0 = P[:, 2] - P[:, 1]
    e1 = P[:, 0] - P[:, 2]
    e2 = P[:, 1] - P[:, 0]
    signed = 0.5 * (e2[:, 0] * (-e1[:, 1]) - e2[:, 1] * (-e1[:, 0]))
    lens = np.stack([np.hypot(*e0.T), np.hypot(*e1.T), np.hypot(*e2.T)], axis=1)
    area = np.abs(signed)
    inradius = 2.0 * area / lens.sum(axis=1)
    return signed, lens.max(axis=1), inradius


def mesh_from_triangles(vertices, triangles, region, geometry=None):
    """Build the edge structure for a given triangulation.

    Triangles are reoriented CCW if needed. Edge classes are left unset;
    call :func:`classify_edges` afterwards.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.array(triangles, dtype=np.int64)
    region = np.asarray(region, dtype=np.int8)
    if not np.all(np.isfinite(vertices)):
        raise MeshError("vertex coordinates must be finite")
    if triangles.ndim != 2 or triangles.shape[1] != 3 or len(region) != len(triangles):
        raise MeshError("triangles must be (T, 3) with one region tag each")

    signed, diameter, inradius = _triangle_metrics(vertices[triangles])
    if np.any(np.abs(signed) <= 1e-14 * diameter**2):
        raise MeshError("degenerate triangle")
    flip = signed < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    area = np.abs(signed)

    # local edge i = (v[i+1], v[i+2])
    loc = np.array([[1, 2], [2, 0], [0, 1]])
    pairs = np.sort(triangles[:, loc], axis=2).reshape(-1, 2)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    element_edges = inverse.reshape(-1, 3)

    n_edges = len(edges)
    edge_elements = np.full((n_edges, 2), -1, dtype=np.int64)
    edge_local = np.full((n_edges, 2), -1, dtype=np.int64)
    # elements visited in increasing id, so slot 0 holds the lower id
    for flat, e in enumerate(inverse):
        t, i = divmod(flat, 3)
        slot = 0 if edge_elements[e, 0] < 0 else 1
        if slot == 1 and edge_elements[e, 1] >= 0:
            raise MeshError(f"edge {e} shared by more than two triangles")
        edge_elements[e, slot] = t
        edge_local[e, slot] = i

    a = vertices[edges[:, 0]]
    b = vertices[edges[:, 1]]
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    midpoint = 0.5 * (a + b)
    # orient n_E outward from edge_elements[:, 0]
    t0 = edge_elements[:, 0]
    opposite = vertices[triangles[t0, edge_local[:, 0]]]
    flip = np.einsum("ij,ij->i", opposite - midpoint, normal) > 0
    normal[flip] *= -1.0
    tangent = np.column_stack([-normal[:, 1], normal[:, 0]])

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        region=region,
        area=area,
        diameter=diameter,
        inradius=inradius,
        edges=edges,
        edge_elements=edge_elements,
        edge_local=edge_local,
        element_edges=element_edges,
        normal=normal,
        tangent=tangent,
        midpoint=midpoint,
        length=length,
        geometry=geometry,
    )


def classify_edges(mesh, interface_x=None, tol=1e-12):
    """Assign every edge its :class:`EdgeClass`.

    An edge between a Stokes and a Darcy triangle must lie on the declared
    interface line, otherwise the mesh does not respect the partition.
    """
    if interface_x is None:
        if mesh.geometry is None:
            raise MeshError("interface position unknown")
        interface_x = mesh.geometry.interface_x
    t0, t1 = mesh.edge_elements.T
    r0 = mesh.region[t0]
    boundary = t1 < 0
    r1 = np.where(boundary, -1, mesh.region[np.maximum(t1, 0)])

    cls = np.empty(mesh.n_edges, dtype=np.int8)
    cls[boundary & (r0 == Region.STOKES)] = EdgeClass.GAMMA_S
    cls[boundary & (r0 == Region.DARCY)] = EdgeClass.GAMMA_D
    same = ~boundary & (r0 == r1)
    cls[same & (r0 == Region.STOKES)] = EdgeClass.INTERIOR_STOKES
    cls[same & (r0 == Region.DARCY)] = EdgeClass.INTERIOR_DARCY
    mixed = ~boundary & (r0 != r1)
    if np.any(mixed):
        ex = mesh.vertices[mesh.edges[mixed]][:, :, 0]
        on_line = np.all(np.abs(ex - interface_x) <= tol * max(1.0, abs(interface_x)), axis=1)
        if not np.all(on_line):
            bad = np.flatnonzero(mixed)[~on_line]
            raise MeshError(f"edges {bad.tolist()} separate regions off the interface")
        cls[mixed] = EdgeClass.INTERFACE
    return replace(mesh, edge_class=cls)


def build_structured_mesh(n, geometry=None):
    """Uniform (2n) x n grid over the rectangle, every cell cut along its
    lower-left to upper-right diagonal.

    With the default geometry the cells are squares of side ``1/n`` and the
    grid line ``x = 1`` is the interface.
    """
    geometry = geometry or Geometry()
    geometry.validate()
    if int(n) != n or n < 1:
        raise MeshError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    frac = (geometry.interface_x - geometry.x0) / (geometry.x1 - geometry.x0)
    nx_s = n
    nx = int(round(n / frac)) if frac > 0 else 0
    if nx <= nx_s or abs(nx * frac - nx_s) > 1e-9:
        raise MeshError("interface does not fall on a grid line for this n")
    ny = n

    xs = np.concatenate([
        np.linspace(geometry.x0, geometry.interface_x, nx_s + 1),
        np.linspace(geometry.interface_x, geometry.x1, nx - nx_s + 1)[1:],
    ])
    ys = np.linspace(geometry.y0, geometry.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    vid = lambda i, j: j * (nx + 1) + i  # noqa: E731
    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    I, J = I.ravel(), J.ravel()
    v00, v10, v11, v01 = vid(I, J), vid(I + 1, J), vid(I + 1, J + 1), vid(I, J + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    cell_region = np.where(I < nx_s, Region.STOKES, Region.DARCY)
    region = np.repeat(cell_region, 2)

    mesh = mesh_from_triangles(vertices, triangles, region, geometry)
    return classify_edges(mesh)


def mesh_statistics(mesh):
    """``(h, sigma_h)``: largest diameter and largest h_T / (2 r_T)."""
    return mesh.h, mesh.sigma_h
