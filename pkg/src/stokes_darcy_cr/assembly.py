"""Sparse assembly of the Stokes-Darcy saddle-point blocks.

All element and edge kernels work on the six local scalar basis functions
``phi_(i,k) = psi_i * d_(i,k)`` of a triangle, where ``psi_i = 1 - 2 lambda_i``
and ``d_(i,k)`` is the frame direction stored in the dof map. Flattened local
index is ``2 * i + k``.

Matrices are first assembled on the extended index set (free unknowns
followed by the prescribed Gamma_d normal values) and then split; the
prescribed part is lifted to the right-hand side.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import DARCY_BOUNDARY, DARCY_INTERIOR, STOKES_PLUS, EdgeClass, Region
from .quadrature import gauss_segment, triangle_rule
from .space import barycentric_coordinates, basis_gradients, boundary_flux_values


class AssemblyError(ValueError):
    pass


@dataclass
class MaterialParams:
    mu: float = 1.0
    K: np.ndarray = field(default_factory=lambda: np.eye(2))
    alpha1: float = 1.0
    penalty_stokes_weight: float = None   # defaults to 1 + 2 mu

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float).reshape(2, 2)
        if not self.mu > 0:
            raise AssemblyError(f"viscosity must be positive, got {self.mu}")
        if not self.alpha1 > 0:
            raise AssemblyError(f"alpha1 must be positive, got {self.alpha1}")
        if not np.allclose(self.K, self.K.T, rtol=0, atol=1e-14 * np.abs(self.K).max()):
            raise AssemblyError("permeability tensor is not symmetric")
        if np.linalg.eigvalsh(self.K).min() <= 0:
            raise AssemblyError("permeability tensor is not positive definite")
        if self.penalty_stokes_weight is None:
            self.penalty_stokes_weight = 1.0 + 2.0 * self.mu

    @property
    def K_inv(self):
        return np.linalg.inv(self.K)

    def kappa(self, tangent):
        """``tau . K . tau`` for unit tangents of shape (..., 2)."""
        return np.einsum("...i,ij,...j->...", tangent, self.K, tangent)


@dataclass
class SourceData:
    """Volume force per region, mass source ``g`` and an optional normal
    flux datum ``normal_flux(points, normals) -> u.n`` on Gamma_d (``None``
    means homogeneous)."""

    f_stokes: callable
    f_darcy: callable = None
    g: callable = None
    normal_flux: callable = None

    def force(self, region):
        if region == Region.DARCY and self.f_darcy is not None:
            return self.f_darcy
        return self.f_stokes


@dataclass(eq=False)
class SystemBlocks:
    A: sp.csr_matrix          # n_v x n_v, stiffness + jump penalty
    B: sp.csr_matrix          # n_p x n_v
    F: np.ndarray
    G: np.ndarray
    cell_areas: np.ndarray    # pressure mass matrix diagonal
    flux: np.ndarray = None   # prescribed Gamma_d normal values
    dofmap: object = None

    @property
    def n_velocity(self):
        return self.A.shape[0]

    @property
    def n_pressure(self):
        return self.B.shape[0]


# ---------------------------------------------------------------------------
# local kernels

def _local_gradients(mesh, dofmap):
    """``grad phi_a`` with ``[t, a, c, b] = d (phi_a)_c / d x_b``, (T, 6, 2, 2)."""
    gpsi = basis_gradients(mesh)
    G = np.einsum("tikc,tib->tikcb", dofmap.local_frame, gpsi)
    return G.reshape(mesh.n_triangles, 6, 2, 2)


def _local_values(dofmap, elements, lam):
    """Basis vectors at points given by barycentric coords ``lam`` (..., 3)
    inside ``elements`` (...); returns (..., 6, 2)."""
    psi = 1.0 - 2.0 * lam
    frame = dofmap.local_frame[elements]
    vals = np.einsum("...i,...ikd->...ikd", psi, frame)
    return vals.reshape(vals.shape[:-3] + (6, 2))


def _scatter(index, local, size):
    """Sum local matrices ``local[n, a, b]`` into a (size x size) matrix,
    dropping constrained slots (index < 0)."""
    m = index.shape[1]
    rows = np.repeat(index, m, axis=1).ravel()
    cols = np.tile(index, (1, m)).ravel()
    vals = local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    mat = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(size, size))
    return mat.tocsr()


def _n_ext(dofmap):
    return dofmap.n_velocity + dofmap.n_flux


def _ext_index(dofmap):
    return dofmap.extended_local_dofs().reshape(-1, 6)


def _edge_points(mesh, edges, order):
    t, w = gauss_segment(order)
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    return a[:, None, :] + t[None, :, None] * (b - a)[:, None, :], w


def _edge_side(mesh, dofmap, edges, side, pts):
    """Basis traces of side ``side`` (0 or 1) of ``edges`` at ``pts`` (E, Q, 2).

    Returns values (E, Q, 6, 2) and extended dof indices (E, 6); absent
    sides give zeros and index -1.
    """
    elem = mesh.edge_elements[edges, side]
    present = elem >= 0
    e_safe = np.where(present, elem, 0)
    lam = barycentric_coordinates(mesh, np.broadcast_to(e_safe[:, None], pts.shape[:-1]), pts)
    vals = _local_values(dofmap, np.broadcast_to(e_safe[:, None], pts.shape[:-1]), lam)
    vals = vals * present[:, None, None, None]
    idx = _ext_index(dofmap)[e_safe]
    idx = np.where(present[:, None], idx, -1)
    return vals, idx


# ---------------------------------------------------------------------------
# extended-space operators

def _stokes_element_matrices(mesh, dofmap, symmetric):
    G = _local_gradients(mesh, dofmap)
    if symmetric:
        G = 0.5 * (G + np.swapaxes(G, -1, -2))
    return np.einsum("t,tacb,tdcb->tad", mesh.area, G, G)


def _darcy_mass_matrices(mesh, dofmap, K_inv):
    bary, w = triangle_rule(2)
    T = mesh.n_triangles
    elems = np.broadcast_to(np.arange(T)[:, None], (T, len(w)))
    vals = _local_values(dofmap, elems, np.broadcast_to(bary, (T,) + bary.shape))
    return np.einsum("t,q,tqac,cd,tqbd->tab", mesh.area, w, vals, K_inv, vals)


def _local_divergence(mesh, dofmap):
    G = _local_gradients(mesh, dofmap)
    return np.einsum("tacc->ta", G)


def _divdiv_matrices(mesh, dofmap):
    div = _local_divergence(mesh, dofmap)
    return np.einsum("t,ta,tb->tab", mesh.area, div, div)


def _bjs_matrices(mesh, dofmap, coef_of_tangent, order=2):
    """Tangential trace mass on the Stokes side of each interface edge."""
    edges = mesh.edges_in([EdgeClass.INTERFACE])
    if len(edges) == 0:
        return np.zeros((0, 6), dtype=np.int64), np.zeros((0, 6, 6))
    pts, w = _edge_points(mesh, edges, order)
    stokes_side = np.where(mesh.region[mesh.edge_elements[edges, 0]] == Region.STOKES, 0, 1)
    vals = np.empty(pts.shape[:2] + (6, 2))
    idx = np.empty((len(edges), 6), dtype=np.int64)
    for side in (0, 1):
        sel = stokes_side == side
        if np.any(sel):
            v, i = _edge_side(mesh, dofmap, edges[sel], side, pts[sel])
            vals[sel], idx[sel] = v, i
    tau = mesh.tangent[edges]
    vt = np.einsum("eqad,ed->eqa", vals, tau)
    coef = coef_of_tangent(tau) * mesh.length[edges]
    return idx, np.einsum("e,q,eqa,eqb->eab", coef, w, vt, vt)


def _jump_matrices(mesh, dofmap, edges, weight, normal_only, order=2):
    pts, w = _edge_points(mesh, edges, order)
    v0, i0 = _edge_side(mesh, dofmap, edges, 0, pts)
    v1, i1 = _edge_side(mesh, dofmap, edges, 1, pts)
    # [v] = v|_1 - v|_0 on interior edges, -v|_0 on boundary edges
    jump = np.concatenate([-v0, v1], axis=2)
    idx = np.concatenate([i0, i1], axis=1)
    if normal_only:
        jump = np.einsum("eqad,ed->eqa", jump, mesh.normal[edges])[..., None]
    # h_E^{-1} * int_E = sum_q w_q (unit-sum weights)
    return idx, np.einsum("e,q,eqad,eqbd->eab", weight, w, jump, jump)


def _jump_pieces(mesh, dofmap, params):
    pieces = []
    groups = (
        (STOKES_PLUS, params.penalty_stokes_weight, False),
        (DARCY_INTERIOR, 1.0, False),
        (DARCY_BOUNDARY, 1.0, True),
    )
    for classes, wgt, normal_only in groups:
        edges = mesh.edges_in(classes)
        if len(edges):
            pieces.append(_jump_matrices(mesh, dofmap, edges, np.full(len(edges), wgt), normal_only))
    return pieces


def _element_mask(mesh, region):
    return (mesh.region == region).astype(float)[:, None, None]


def _stiffness_ext(mesh, dofmap, params):
    n = _n_ext(dofmap)
    idx = _ext_index(dofmap)
    stokes = 2.0 * params.mu * _stokes_element_matrices(mesh, dofmap, symmetric=True)
    darcy = params.mu * _darcy_mass_matrices(mesh, dofmap, params.K_inv) + _divdiv_matrices(mesh, dofmap)
    local = stokes * _element_mask(mesh, Region.STOKES) + darcy * _element_mask(mesh, Region.DARCY)
    mat = _scatter(idx, local, n)
    coef = lambda tau: params.mu * params.alpha1 / np.sqrt(params.kappa(tau))  # noqa: E731
    bidx, blocal = _bjs_matrices(mesh, dofmap, coef)
    return mat + _scatter(bidx, blocal, n)


def _jump_ext(mesh, dofmap, params):
    n = _n_ext(dofmap)
    mat = sp.csr_matrix((n, n))
    for idx, local in _jump_pieces(mesh, dofmap, params):
        mat = mat + _scatter(idx, local, n)
    return mat


def _divergence_ext(mesh, dofmap):
    idx = _ext_index(dofmap)
    vals = -mesh.area[:, None] * _local_divergence(mesh, dofmap)
    rows = np.repeat(np.arange(mesh.n_triangles), 6)
    cols = idx.ravel()
    keep = cols >= 0
    return sp.coo_matrix((vals.ravel()[keep], (rows[keep], cols[keep])),
                         shape=(mesh.n_triangles, _n_ext(dofmap))).tocsr()


def _free(mat, dofmap):
    n = dofmap.n_velocity
    return mat[:n, :n].tocsr()


def _symmetrized(mat, name, tol=1e-12):
    """Check symmetry up to ``tol`` (relative) and remove the round-off defect."""
    diff = abs(mat - mat.T)
    scale = max(abs(mat).max(), 1.0)
    if diff.nnz and diff.max() > tol * scale:
        raise AssemblyError(f"{name} is not symmetric (max defect {diff.max():.3e})")
    return (0.5 * (mat + mat.T)).tocsr()


# ---------------------------------------------------------------------------
# public operators

def assemble_stiffness(mesh, dofmap, params):
    """Stokes symmetric gradient, BJS slip, Darcy K^-1 mass and div-div terms."""
    mat = _free(_stiffness_ext(mesh, dofmap, params), dofmap)
    return _symmetrized(mat, "stiffness")


def assemble_jump_penalty(mesh, dofmap, params):
    """Jump stabilization: full vector jumps on Stokes (weight 1 + 2 mu) and
    interior Darcy edges, normal jumps on the interface and Gamma_d."""
    mat = _free(_jump_ext(mesh, dofmap, params), dofmap)
    return _symmetrized(mat, "jump penalty")


def assemble_divergence(mesh, dofmap):
    """``B[k, a] = -|T_k| div(phi_a)|_{T_k}``."""
    return _divergence_ext(mesh, dofmap)[:, :dofmap.n_velocity].tocsr()


def _volume_points(mesh, degree):
    bary, w = triangle_rule(degree)
    P = mesh.element_vertices()
    pts = np.einsum("qi,tid->tqd", bary, P)
    return bary, w, pts


def _load_ext(mesh, dofmap, source, degree):
    bary, w, pts = _volume_points(mesh, degree)
    T = mesh.n_triangles
    f = np.zeros((T, len(w), 2))
    for region in (Region.STOKES, Region.DARCY):
        sel = mesh.region == region
        if np.any(sel):
            f[sel] = source.force(region)(pts[sel])
    elems = np.broadcast_to(np.arange(T)[:, None], (T, len(w)))
    vals = _local_values(dofmap, elems, np.broadcast_to(bary, (T,) + bary.shape))
    local = np.einsum("t,q,tqd,tqad->ta", mesh.area, w, f, vals)

    G = np.zeros(T)
    if source.g is not None:
        g = np.asarray(source.g(pts), dtype=float)
        cell_g = mesh.area * (g @ w)
        G = -cell_g
        total = cell_g.sum()
        if abs(total) > 1e-10 * max(1.0, np.abs(cell_g).sum()):
            warnings.warn(f"mass source is not mean-free: integral = {total:.3e}", stacklevel=3)
        darcy = (mesh.region == Region.DARCY).astype(float)
        local += np.einsum("t,q,tq,ta->ta", mesh.area * darcy, w, g, _local_divergence(mesh, dofmap))

    F = np.zeros(_n_ext(dofmap))
    idx = _ext_index(dofmap)
    keep = idx >= 0
    np.add.at(F, idx[keep], local[keep])
    return F, G


def _flux_data(mesh, edges, pts, normal_flux):
    normals = np.broadcast_to(mesh.normal[edges][:, None, :], pts.shape)
    return np.asarray(normal_flux(pts, normals), dtype=float)


def _flux_penalty_load(mesh, dofmap, normal_flux, order=5):
    """``h_E^{-1} int_E (u.n datum) (v.n)`` over Gamma_d edges."""
    F = np.zeros(_n_ext(dofmap))
    if normal_flux is None or dofmap.n_flux == 0:
        return F
    edges = dofmap.flux_edges
    pts, w = _edge_points(mesh, edges, order)
    vals, idx = _edge_side(mesh, dofmap, edges, 0, pts)
    vn = np.einsum("eqad,ed->eqa", vals, mesh.normal[edges])
    data = _flux_data(mesh, edges, pts, normal_flux)
    local = np.einsum("q,eq,eqa->ea", w, data, vn)
    keep = idx >= 0
    np.add.at(F, idx[keep], local[keep])
    return F


def assemble_rhs(mesh, dofmap, source, params=None, quad_degree=10):
    """Load vectors ``(F, G)`` of the free unknowns.

    ``F`` collects ``(f, v)`` and ``(g, div_h v)`` over the Darcy region;
    ``G_k = -int_{T_k} g``. A non-homogeneous Gamma_d flux is lifted: its
    prescribed normal values enter through the full operator, and the jump
    penalty measures the deviation from the datum.
    """
    params = params or MaterialParams()
    F, G = _load_ext(mesh, dofmap, source, quad_degree)
    n = dofmap.n_velocity
    flux = boundary_flux_values(mesh, dofmap, source.normal_flux)
    if source.normal_flux is not None and dofmap.n_flux:
        F += _flux_penalty_load(mesh, dofmap, source.normal_flux)
        A = _stiffness_ext(mesh, dofmap, params) + _jump_ext(mesh, dofmap, params)
        F[:n] -= A[:n, n:] @ flux
        G = G - _divergence_ext(mesh, dofmap)[:, n:] @ flux
    return F[:n], G


def assemble_system(mesh, dofmap, params, source, quad_degree=10):
    """All blocks of the discrete problem."""
    A = assemble_stiffness(mesh, dofmap, params) + assemble_jump_penalty(mesh, dofmap, params)
    B = assemble_divergence(mesh, dofmap)
    F, G = assemble_rhs(mesh, dofmap, source, params, quad_degree)
    flux = boundary_flux_values(mesh, dofmap, source.normal_flux)
    return SystemBlocks(A=A.tocsr(), B=B, F=F, G=G, cell_areas=mesh.area.copy(),
                        flux=flux, dofmap=dofmap)


def assemble_norm_gram(mesh, dofmap, params):
    """Gram matrix of the broken norm: Stokes H1 seminorm, interface
    tangential trace, Darcy L2 and divergence, and the jump penalty."""
    n = _n_ext(dofmap)
    idx = _ext_index(dofmap)
    stokes = _stokes_element_matrices(mesh, dofmap, symmetric=False)
    darcy = _darcy_mass_matrices(mesh, dofmap, np.eye(2)) + _divdiv_matrices(mesh, dofmap)
    local = stokes * _element_mask(mesh, Region.STOKES) + darcy * _element_mask(mesh, Region.DARCY)
    mat = _scatter(idx, local, n)
    bidx, blocal = _bjs_matrices(mesh, dofmap, lambda tau: np.ones(len(tau)))
    mat = mat + _scatter(bidx, blocal, n) + _jump_ext(mesh, dofmap, params)
    mat = _free(mat, dofmap)
    return _symmetrized(mat, "norm Gram matrix")


def jump_energy(mesh, dofmap, u, params, normal_flux=None, order=2):
    """``J(u, u)`` for a discrete velocity; on Gamma_d the normal jump is
    taken against the flux datum when one is given."""
    ext = u.extended()
    total = 0.0
    for idx, local in _jump_pieces(mesh, dofmap, params):
        c = np.where(idx >= 0, ext[np.maximum(idx, 0)], 0.0)
        total += np.einsum("ea,eab,eb->", c, local, c)
    if normal_flux is not None and dofmap.n_flux:
        # cross and datum terms of h^-1 int (g - u.n)^2 on Gamma_d
        Fp = _flux_penalty_load(mesh, dofmap, normal_flux, order=5)
        pts, w = _edge_points(mesh, dofmap.flux_edges, 5)
        data = _flux_data(mesh, dofmap.flux_edges, pts, normal_flux)
        total += -2.0 * Fp @ ext + np.einsum("q,eq->", w, data**2)
    return float(total)
