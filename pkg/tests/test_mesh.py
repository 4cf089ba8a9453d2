import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokes_darcy_cr.mesh import (DARCY_BOUNDARY, DARCY_INTERIOR, STOKES_PLUS, EdgeClass, Geometry, MeshError,
                                  Region, build_structured_mesh, classify_edges, mesh_from_triangles,
                                  mesh_statistics)


def test_n1_counts():
    mesh = build_structured_mesh(1)
    assert (mesh.n_vertices, mesh.n_triangles, mesh.n_edges) == (6, 4, 9)
    assert np.count_nonzero(mesh.region == Region.STOKES) == 2
    assert np.count_nonzero(mesh.region == Region.DARCY) == 2


def test_n1_edge_groups():
    mesh = build_structured_mesh(1)
    assert len(mesh.edges_in(STOKES_PLUS)) == 4
    assert len(mesh.edges_in([EdgeClass.INTERIOR_STOKES])) == 1
    assert len(mesh.edges_in(DARCY_INTERIOR)) == 1
    assert len(mesh.edges_in(DARCY_BOUNDARY)) == 4
    assert len(mesh.edges_in([EdgeClass.INTERFACE])) == 1


def test_bottom_stokes_edge_is_gamma_s():
    mesh = build_structured_mesh(2)
    mid = mesh.midpoint
    e = np.flatnonzero((np.abs(mid[:, 1]) < 1e-14) & (mid[:, 0] < 1))
    assert len(e) == 2
    assert np.all(mesh.edge_class[e] == EdgeClass.GAMMA_S)


def test_h_values():
    assert mesh_statistics(build_structured_mesh(1))[0] == pytest.approx(np.sqrt(2))
    assert build_structured_mesh(2).h == pytest.approx(np.sqrt(0.5**2 + 0.5**2))


def test_equilateral_sigma():
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    mesh = mesh_from_triangles(P, [[0, 1, 2]], [Region.STOKES])
    assert mesh.sigma_h == pytest.approx(np.sqrt(3), rel=1e-14)


def test_rejects_bad_input():
    with pytest.raises(MeshError):
        build_structured_mesh(0)
    with pytest.raises(MeshError):
        build_structured_mesh(1, Geometry(x0=0, x1=1, interface_x=1))
    with pytest.raises(MeshError):
        mesh_from_triangles([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]], [0])


def test_reorients_clockwise_triangles():
    P = [[0, 0], [1, 0], [0, 1]]
    mesh = mesh_from_triangles(P, [[0, 2, 1]], [Region.DARCY])
    a, b, c = mesh.vertices[mesh.triangles[0]]
    u, v = b - a, c - a
    assert u[0] * v[1] - u[1] * v[0] > 0


def test_mixed_edge_off_interface_is_rejected():
    P = [[0, 0], [1, 0], [1, 1], [0, 1]]
    mesh = mesh_from_triangles(P, [[0, 1, 2], [0, 2, 3]], [Region.STOKES, Region.DARCY])
    with pytest.raises(MeshError):
        classify_edges(mesh, interface_x=1.0)


def _outward_normal(mesh, t, local):
    P = mesh.vertices[mesh.triangles[t]]
    e = mesh.element_edges[t, local]
    return np.sign((mesh.midpoint[e] - P[local]) @ mesh.normal[e])


@given(n=st.integers(1, 8))
@settings(max_examples=15, deadline=None)
def test_structural_invariants(n):
    mesh = build_structured_mesh(n)
    # Euler relation for a simply connected domain
    assert mesh.n_vertices - mesh.n_edges + mesh.n_triangles + 1 == 2
    # the three penalty groups partition the edges
    groups = [set(mesh.edges_in(g)) for g in (STOKES_PLUS, DARCY_INTERIOR, DARCY_BOUNDARY)]
    assert sum(len(g) for g in groups) == mesh.n_edges
    assert set.union(*groups) == set(range(mesh.n_edges))
    assert len(mesh.edges_in([EdgeClass.INTERFACE])) == n
    # unit normals, outward from the first neighbour, inward for the second
    assert np.allclose(np.linalg.norm(mesh.normal, axis=1), 1.0)
    assert np.allclose(np.einsum("ij,ij->i", mesh.normal, mesh.tangent), 0.0)
    for e in range(mesh.n_edges):
        t0, t1 = mesh.edge_elements[e]
        assert _outward_normal(mesh, t0, mesh.edge_local[e, 0]) > 0
        if t1 >= 0:
            assert t0 < t1
            assert _outward_normal(mesh, t1, mesh.edge_local[e, 1]) < 0
    # no triangle straddles the interface
    x = mesh.element_vertices()[..., 0]
    stokes = mesh.region == Region.STOKES
    assert np.all(x[stokes] <= 1 + 1e-14) and np.all(x[~stokes] >= 1 - 1e-14)
    assert np.all(mesh.area > 0)


@given(n=st.integers(1, 16))
@settings(max_examples=10, deadline=None)
def test_refinement_nesting_and_regularity(n):
    a, b = build_structured_mesh(n), build_structured_mesh(2 * n)
    assert b.h == pytest.approx(a.h / 2, rel=1e-14)
    assert b.sigma_h == pytest.approx(a.sigma_h, rel=1e-12)


def test_boundary_normals_are_exterior():
    mesh = build_structured_mesh(3)
    boundary = mesh.edge_elements[:, 1] < 0
    centre = np.array([1.0, 0.5])
    out = np.einsum("ij,ij->i", mesh.midpoint[boundary] - centre, mesh.normal[boundary])
    assert np.all(out > 0)
