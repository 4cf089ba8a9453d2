import functools

import numpy as np
import pytest

from stokes_darcy_cr import MaterialParams, build_dof_map, build_structured_mesh

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def mesh_and_dofs(n):
    mesh = build_structured_mesh(n)
    return mesh, build_dof_map(mesh)


@pytest.fixture
def n1():
    return mesh_and_dofs(1)


@pytest.fixture
def default_params():
    return MaterialParams()


def linear_field(c0, c1, c2):
    """Vectorised affine field ``c0 + c1 x + c2 y``."""
    c0, c1, c2 = map(np.asarray, (c0, c1, c2))

    def v(pts):
        return c0 + pts[..., :1] * c1 + pts[..., 1:2] * c2

    return v


@functools.lru_cache(maxsize=None)
def convergence_study(levels=(4, 8, 16, 32), spectral_max_n=0):
    from stokes_darcy_cr.verification import run_convergence_study
    return run_convergence_study(list(levels), spectral_max_n=spectral_max_n)


def fd_gradient(f, pts, step=1e-5):
    """Central differences of a vectorised field; returns (..., comps, 2)."""
    ex, ey = np.array([step, 0.0]), np.array([0.0, step])
    return np.stack([(f(pts + ex) - f(pts - ex)) / (2 * step),
                     (f(pts + ey) - f(pts - ey)) / (2 * step)], axis=-1)


def fd_second(f, pts, step=1e-5):
    """Second partials ``(f_xx, f_xy, f_yy)`` by central differences."""
    ex, ey = np.array([step, 0.0]), np.array([0.0, step])
    fxx = (f(pts + ex) - 2 * f(pts) + f(pts - ex)) / step**2
    fyy = (f(pts + ey) - 2 * f(pts) + f(pts - ey)) / step**2
    fxy = (f(pts + ex + ey) - f(pts + ex - ey) - f(pts - ex + ey) + f(pts - ex - ey)) / (4 * step**2)
    return fxx, fxy, fyy


def closed_form_u(pts):
    """Velocity of the reference case typed directly from its factored form."""
    x, y = pts[..., 0], pts[..., 1]
    u1 = -2 * (-1 + x) ** 3 * x**2 * (-1 + y) * y * (-1 + 2 * y)
    u2 = (-1 + x) ** 2 * x * (-2 + 5 * x) * (-1 + y) ** 2 * y**2
    return np.stack([u1, u2], axis=-1)


def closed_form_p(pts):
    x, y = pts[..., 0], pts[..., 1]
    return x**2 - 2 * x * y + y**2 / 2 - 1


def fd_sources(pts, mu=1.0, K_inv=np.eye(2), step=1e-5):
    """``-2 mu div D(u) + grad p`` and ``mu K^-1 u + grad p`` by finite differences."""
    uxx, uxy, uyy = fd_second(closed_form_u, pts, step)
    lap = uxx + uyy
    # grad div u = (u1_xx + u2_xy, u1_xy + u2_yy)
    grad_div = np.stack([uxx[..., 0] + uxy[..., 1], uxy[..., 0] + uyy[..., 1]], axis=-1)
    grad_p = fd_gradient(lambda q: closed_form_p(q)[..., None], pts, step)[..., 0, :]
    f_s = -mu * (lap + grad_div) + grad_p
    f_d = mu * closed_form_u(pts) @ K_inv.T + grad_p
    return f_s, f_d
