"""Manufactured solution, broken-norm errors and convergence studies.

The reference case is the divergence-free field ``u = curl phi`` with
``phi = X(x) Y(y)``, ``X = x^2 (x-1)^3``, ``Y = y^2 (y-1)^2``, together with a
quadratic pressure, on the default two-square geometry. All derivatives are
taken exactly on the one-dimensional polynomial factors.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .assembly import MaterialParams, SourceData, assemble_norm_gram, assemble_system
from .mesh import DARCY_BOUNDARY, DARCY_INTERIOR, STOKES_PLUS, EdgeClass, Region, build_structured_mesh
from .quadrature import gauss_segment, triangle_rule
from .solver import SolverError, estimate_coercivity, estimate_inf_sup, solve_saddle
from .space import DiscreteVelocity, build_dof_map, cr_interpolate, discrete_divergence

# X(x) = x^2 (x - 1)^3 and Y(y) = y^2 (y - 1)^2
_X = Polynomial([0, 0, 1]) * Polynomial([-1, 1]) ** 3
_Y = Polynomial([0, 0, 1]) * Polynomial([-1, 1]) ** 2


def _derivs(poly, k=3):
    out = [poly]
    for _ in range(k):
        out.append(out[-1].deriv())
    return out


_XD = _derivs(_X)
_YD = _derivs(_Y)


def _xy(points):
    points = np.asarray(points, dtype=float)
    return points[..., 0], points[..., 1]


def stream_function(points):
    x, y = _xy(points)
    return _X(x) * _Y(y)


def printed_pressure(points):
    """Quadratic pressure ``x^2 - 2xy + y^2/2 - 1`` as tabulated for the case
    (its integral over the two squares is -1, not 0)."""
    x, y = _xy(points)
    return x**2 - 2 * x * y + 0.5 * y**2 - 1.0


def _pressure_gradient(points):
    x, y = _xy(points)
    return np.stack([2 * x - 2 * y, -2 * x + y], axis=-1)


# ---------------------------------------------------------------------------
# tabulated source polynomials (for the default parameters mu = alpha1 = 1, K = I)

def tabulated_f1(x, y):
    return (4 * (-1 + x) * (-1 + 2 * y)
            * (-6 * x**3 + 3 * x**4 + (-1 + y) * y - 8 * x * (-1 + y) * y
               + x**2 * (3 + 10 * (-1 + y) * y))
            + 2 * x - 2 * y)


def tabulated_f2(x, y):
    s = (-1 + y) * y
    return (-2 * (9 * (-1 + y)**2 * y**2 - 12 * x**3 * (1 + 6 * s) + 5 * x**4 * (1 + 6 * s)
                  - 2 * x * (1 + 6 * s * (1 + 3 * s)) + x**2 * (9 + 6 * s * (9 + 5 * s)))
            - 2 * x + y)


def tabulated_k1(x, y):
    return (-1 + x)**2 * x * (-2 + 5 * x) * (-1 + y)**2 * y**2 + 2 * x - 2 * y


def tabulated_k2(x, y):
    return (-1 + x)**2 * x * (-2 + 5 * x) * (-1 + y)**2 * y**2 - 2 * x + y


TABULATED_SOURCES = {"f1": tabulated_f1, "f2": tabulated_f2, "k1": tabulated_k1, "k2": tabulated_k2}


# ---------------------------------------------------------------------------
# exact case

@dataclass
class ExactCase:
    """Closed-form velocity, pressure and matching source terms.

    Evaluators take points of shape (..., 2); the optional ``cells`` argument
    (same leading shape) is accepted for interface compatibility with
    :class:`DiscreteAsExact` and ignored.
    """

    params: MaterialParams = field(default_factory=MaterialParams)
    pressure_shift: float = 0.5   # makes the tabulated pressure mean-free on (0,2)x(0,1)

    def u(self, points, cells=None):
        x, y = _xy(points)
        return np.stack([-_XD[0](x) * _YD[1](y), _XD[1](x) * _YD[0](y)], axis=-1)

    def grad_u(self, points, cells=None):
        """``G[..., a, b] = d u_a / d x_b``."""
        x, y = _xy(points)
        X0, X1, X2 = _XD[0](x), _XD[1](x), _XD[2](x)
        Y0, Y1, Y2 = _YD[0](y), _YD[1](y), _YD[2](y)
        row0 = np.stack([-X1 * Y1, -X0 * Y2], axis=-1)
        row1 = np.stack([X2 * Y0, X1 * Y1], axis=-1)
        return np.stack([row0, row1], axis=-2)

    def div_u(self, points, cells=None):
        G = self.grad_u(points)
        return G[..., 0, 0] + G[..., 1, 1]

    def p(self, points, cells=None):
        return printed_pressure(points) + self.pressure_shift

    def grad_p(self, points):
        return _pressure_gradient(points)

    def laplacian_u(self, points):
        x, y = _xy(points)
        lap1 = -(_XD[2](x) * _YD[1](y) + _XD[0](x) * _YD[3](y))
        lap2 = _XD[3](x) * _YD[0](y) + _XD[1](x) * _YD[2](y)
        return np.stack([lap1, lap2], axis=-1)

    def grad_div_u(self, points):
        x, y = _xy(points)
        # div u = -X' Y' + X' Y' vanishes identically; kept for the general formula
        return np.zeros(np.shape(x) + (2,))

    def f_s(self, points):
        """``-2 mu div D(u) + grad p`` with ``2 div D(u) = lap u + grad div u``."""
        mu = self.params.mu
        return -mu * (self.laplacian_u(points) + self.grad_div_u(points)) + self.grad_p(points)

    def f_d(self, points):
        """``mu K^-1 u + grad p``."""
        u = self.u(points)
        return self.params.mu * u @ self.params.K_inv.T + self.grad_p(points)

    def g(self, points):
        return self.div_u(points)

    def normal_flux(self, points, normals):
        return np.einsum("...d,...d->...", self.u(points), normals)

    def source(self, prescribe_flux=True):
        """Load data for the solver; ``prescribe_flux=False`` imposes
        ``u.n = 0`` on Gamma_d instead of the exact boundary flux."""
        return SourceData(f_stokes=self.f_s, f_darcy=self.f_d, g=self.g,
                          normal_flux=self.normal_flux if prescribe_flux else None)


def manufactured_case(params=None):
    return ExactCase(params=params or MaterialParams())


@dataclass
class DiscreteAsExact:
    """Treat a discrete pair ``(u_h, p_h)`` as an exact solution; evaluators
    need the containing element of every point."""

    mesh: object
    velocity: DiscreteVelocity
    pressure: np.ndarray
    params: MaterialParams = field(default_factory=MaterialParams)

    def u(self, points, cells):
        return self.velocity.evaluate(self.mesh, cells, points)

    def grad_u(self, points, cells):
        return self.velocity.gradients(self.mesh)[cells]

    def div_u(self, points, cells):
        return discrete_divergence(self.mesh, self.velocity)[cells]

    def p(self, points, cells):
        return np.asarray(self.pressure)[cells]


# ---------------------------------------------------------------------------
# error norms

@dataclass
class ErrorReport:
    n: int
    h: float
    err_u_h: float
    components: dict
    err_p: float

    @property
    def jump_J(self):
        """``J(u_h, u_h)`` (squared quantity)."""
        return self.components["jump_J"] ** 2


def _volume_data(mesh, degree):
    bary, w = triangle_rule(degree)
    pts = np.einsum("qi,tid->tqd", bary, mesh.element_vertices())
    cells = np.broadcast_to(np.arange(mesh.n_triangles)[:, None], pts.shape[:-1])
    return pts, cells, w


def _edge_data(mesh, edges, order):
    t, w = gauss_segment(order)
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    return a[:, None, :] + t[None, :, None] * (b - a)[:, None, :], w


def _side_error(mesh, u_h, exact, edges, side, pts):
    """``u - u_h`` traced from side ``side`` of ``edges``; zero if absent."""
    elem = mesh.edge_elements[edges, side]
    present = elem >= 0
    cells = np.broadcast_to(np.where(present, elem, 0)[:, None], pts.shape[:-1])
    err = exact.u(pts, cells) - u_h.evaluate(mesh, cells, pts)
    return err * present[:, None, None]


def _jump_error(mesh, u_h, exact, params, order):
    total = 0.0
    groups = ((STOKES_PLUS, params.penalty_stokes_weight, False),
              (DARCY_INTERIOR, 1.0, False),
              (DARCY_BOUNDARY, 1.0, True))
    for classes, weight, normal_only in groups:
        edges = mesh.edges_in(classes)
        if len(edges) == 0:
            continue
        pts, w = _edge_data(mesh, edges, order)
        jump = (_side_error(mesh, u_h, exact, edges, 1, pts)
                - _side_error(mesh, u_h, exact, edges, 0, pts))
        if normal_only:
            jump = np.einsum("eqd,ed->eq", jump, mesh.normal[edges])[..., None]
        # h_E^-1 int_E |.|^2 = sum_q w_q |.|^2 with unit-sum weights
        total += weight * np.einsum("q,eqd,eqd->", w, jump, jump)
    return total


def compute_error_norms(mesh, dofmap, solution, exact, params=None, n=None,
                        volume_degree=10, edge_order=5):
    """Broken-norm error ``||u - u_h||_h`` by component and ``||p - p_h||``.

    ``solution`` is a :class:`SaddleSolution` (or anything with ``u`` and
    ``p``). Jumps of the error include boundary edges, where the outer trace
    is zero; on Gamma_s and Gamma_d this measures the boundary mismatch.
    """
    params = params or getattr(exact, "params", None) or MaterialParams()
    u_h, p_h = solution.u, np.asarray(solution.p, dtype=float)
    pts, cells, w = _volume_data(mesh, volume_degree)
    area = mesh.area
    stokes = mesh.region == Region.STOKES
    darcy = ~stokes

    G_err = exact.grad_u(pts, cells) - u_h.gradients(mesh)[cells]
    h1 = np.einsum("t,q,tqab,tqab->t", area, w, G_err, G_err)
    e = exact.u(pts, cells) - u_h.evaluate(mesh, cells, pts)
    l2 = np.einsum("t,q,tqd,tqd->t", area, w, e, e)
    d_err = exact.div_u(pts, cells) - discrete_divergence(mesh, u_h)[cells]
    div = np.einsum("t,q,tq->t", area, w, d_err**2)
    p_err = exact.p(pts, cells) - p_h[cells]
    pl2 = np.einsum("t,q,tq->t", area, w, p_err**2)

    iface = mesh.edges_in([EdgeClass.INTERFACE])
    tang = 0.0
    if len(iface):
        epts, ew = _edge_data(mesh, iface, edge_order)
        side = np.where(mesh.region[mesh.edge_elements[iface, 0]] == Region.STOKES, 0, 1)
        err = np.where(side[:, None, None] == 0,
                       _side_error(mesh, u_h, exact, iface, 0, epts),
                       _side_error(mesh, u_h, exact, iface, 1, epts))
        et = np.einsum("eqd,ed->eq", err, mesh.tangent[iface])
        tang = np.einsum("e,q,eq->", mesh.length[iface], ew, et**2)

    jump = _jump_error(mesh, u_h, exact, params, edge_order)
    sq = {
        "broken_H1_stokes": h1[stokes].sum(),
        "interface_tangential": tang,
        "L2_darcy": l2[darcy].sum(),
        "div_darcy": div[darcy].sum(),
        "jump_J": jump,
    }
    components = {k: math.sqrt(max(v, 0.0)) for k, v in sq.items()}
    err_u = math.sqrt(sum(max(v, 0.0) for v in sq.values()))
    if n is None:
        n = int(round(1.0 / mesh.length.min()))
    return ErrorReport(n=n, h=mesh.h, err_u_h=err_u, components=components,
                       err_p=math.sqrt(pl2.sum()))


def cell_average(mesh, f, degree=10):
    """Piecewise-constant L2 projection of a scalar field."""
    bary, w = triangle_rule(degree)
    pts = np.einsum("qi,tid->tqd", bary, mesh.element_vertices())
    return np.asarray(f(pts), dtype=float) @ w


@dataclass
class _Interpolant:
    u: DiscreteVelocity
    p: np.ndarray


def interpolation_error(mesh, dofmap, exact, params=None):
    """``||u - r_h u||_h`` together with the best piecewise-constant pressure
    error ``||p - Pi_0 p||``, as an :class:`ErrorReport`."""
    r_u = cr_interpolate(mesh, dofmap, exact.u)
    return compute_error_norms(mesh, dofmap, _Interpolant(r_u, cell_average(mesh, exact.p)),
                               exact, params)


# ---------------------------------------------------------------------------
# convergence study

def eoc(errors, hs):
    """Observed orders between consecutive levels."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])


@dataclass
class LevelResult:
    report: ErrorReport
    interpolation: ErrorReport
    mass_residual: float
    residuals: dict
    alpha_h: float = None
    beta_h: float = None


@dataclass
class ConvergenceTable:
    levels: list
    rows: list          # LevelResult per level

    @property
    def h(self):
        return np.array([r.report.h for r in self.rows])

    def column(self, name):
        get = {
            "err_u_h": lambda r: r.report.err_u_h,
            "err_p": lambda r: r.report.err_p,
            "jump_J": lambda r: r.report.jump_J,
            "interp_u": lambda r: r.interpolation.err_u_h,
            "best_p": lambda r: r.interpolation.err_p,
            "mass_residual": lambda r: r.mass_residual,
        }[name]
        return np.array([get(r) for r in self.rows])

    def eoc(self, name):
        return eoc(self.column(name), self.h)

    def finest_eoc(self, name):
        return float(self.eoc(name)[-1])

    CSV_HEADER = "n,h,err_u_h,eoc_u,err_p,eoc_p,jump_J,eoc_J,alpha_h,beta_h"

    def csv_rows(self):
        """Rows of the CSV table as lists of strings (12 significant digits,
        empty cells for missing values)."""
        fmt = lambda v: "" if v is None or not np.isfinite(v) else f"{v:.12g}"  # noqa: E731
        orders = {k: np.concatenate([[np.nan], self.eoc(k)]) for k in ("err_u_h", "err_p", "jump_J")}
        out = []
        for i, r in enumerate(self.rows):
            out.append([str(r.report.n), fmt(r.report.h),
                        fmt(r.report.err_u_h), fmt(orders["err_u_h"][i]),
                        fmt(r.report.err_p), fmt(orders["err_p"][i]),
                        fmt(r.report.jump_J), fmt(orders["jump_J"][i]),
                        fmt(r.alpha_h), fmt(r.beta_h)])
        return out


class StudyError(RuntimeError):
    pass


def validate_levels(levels):
    levels = [int(n) for n in levels]
    if not levels:
        raise ValueError("at least one level is required")
    if any(n < 1 for n in levels):
        raise ValueError(f"levels must be positive: {levels}")
    if any(b != 2 * a for a, b in zip(levels, levels[1:])):
        raise ValueError(f"levels must double from one to the next: {levels}")
    return levels


def solve_level(n, params, exact, quad_degree=10, prescribe_flux=True, method="direct"):
    mesh = build_structured_mesh(n)
    dofmap = build_dof_map(mesh)
    blocks = assemble_system(mesh, dofmap, params, exact.source(prescribe_flux), quad_degree)
    sol = solve_saddle(blocks, method=method)
    return mesh, dofmap, blocks, sol


def run_convergence_study(levels, params=None, spectral_max_n=8, quad_degree=10,
                          prescribe_flux=True):
    """Solve the manufactured case on every level and collect errors.

    Coercivity and inf-sup estimates are added for levels up to
    ``spectral_max_n`` (dense eigensolves); pass 0 to skip them.
    """
    levels = validate_levels(levels)
    params = params or MaterialParams()
    exact = manufactured_case(params)
    rows = []
    for n in levels:
        try:
            mesh, dofmap, blocks, sol = solve_level(n, params, exact, quad_degree, prescribe_flux)
        except SolverError as exc:
            raise StudyError(f"level n={n}: {exc}") from exc
        report = compute_error_norms(mesh, dofmap, sol, exact, params, n=n)
        interp = interpolation_error(mesh, dofmap, exact, params)
        interp.n = n
        mass = float(np.linalg.norm(blocks.B @ sol.u.coefficients - blocks.G))
        row = LevelResult(report=report, interpolation=interp, mass_residual=mass,
                          residuals=sol.residuals)
        if n <= spectral_max_n:
            N = assemble_norm_gram(mesh, dofmap, params)
            row.alpha_h = estimate_coercivity(blocks, N)
            row.beta_h = estimate_inf_sup(blocks, N)
        rows.append(row)
    return ConvergenceTable(levels=levels, rows=rows)
