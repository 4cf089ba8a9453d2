"""Saddle-point solve with a zero-mean pressure gauge, and spectral
estimates of the discrete coercivity and inf-sup constants."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .space import DiscreteVelocity

DENSE_LIMIT = 6000


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    def __init__(self, message, pivot=None):
        super().__init__(message if pivot is None else f"{message} (pivot index {pivot})")
        self.pivot = pivot


class ConvergenceFailure(SolverError):
    def __init__(self, iterations, residual):
        super().__init__(f"MINRES did not converge after {iterations} iterations "
                         f"(relative residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class InfSupError(SolverError):
    pass


@dataclass
class SaddleSolution:
    u: object               # DiscreteVelocity, or raw coefficients without a dof map
    p: np.ndarray
    residuals: dict
    multiplier: float = 0.0


def augmented_matrix(blocks):
    """``[[A, B^T, 0], [B, 0, w], [0, w^T, 0]]`` with ``w`` the cell areas."""
    w = sp.csr_matrix(blocks.cell_areas.reshape(-1, 1))
    return sp.bmat([[blocks.A, blocks.B.T, None],
                    [blocks.B, None, w],
                    [None, w.T, None]], format="csc")


def _dependent_column(K):
    """Index of the first linearly dependent column (dense QR with pivoting)."""
    if K.shape[0] > DENSE_LIMIT:
        return None
    _, R, perm = la.qr(K.toarray(), pivoting=True, mode="economic")
    d = np.abs(np.diag(R))
    bad = np.flatnonzero(d <= 1e-12 * d[0])
    return int(perm[bad[0]]) if len(bad) else None


def _direct(K, rhs):
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise SingularSystemError(f"factorization failed: {exc}", _dependent_column(K)) from None
    diag = np.abs(lu.U.diagonal())
    small = np.flatnonzero(diag <= 1e-13 * diag.max())
    if len(small):
        col = int(np.argsort(lu.perm_c)[small[0]])
        raise SingularSystemError("system is singular beyond the pressure constant", col)
    return lu.solve(rhs)


def _minres(K, rhs, blocks, tol=1e-12, maxiter=None):
    n_v, n_p = blocks.n_velocity, blocks.n_pressure
    d = np.concatenate([np.abs(blocks.A.diagonal()), blocks.cell_areas, [1.0]])
    d[d == 0] = 1.0
    M = sp.diags(1.0 / d)
    maxiter = maxiter or 20 * (n_v + n_p)
    its = [0]

    def count(_):
        its[0] += 1

    x, info = spla.minres(K, rhs, rtol=tol, maxiter=maxiter, M=M, callback=count)
    res = np.linalg.norm(K @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if info != 0 and res > 1e-8:
        raise ConvergenceFailure(its[0], res)
    return x


def solve_saddle(blocks, method="direct", maxiter=None):
    """Solve ``A u + B^T p = F``, ``B u = G`` with ``sum |T_k| p_k = 0``.

    The gauge is imposed through one extra multiplier row, which keeps the
    system symmetric. ``method`` is ``"direct"`` (sparse LU) or ``"minres"``;
    ``maxiter`` caps the MINRES iterations (default ``20 (n_v + n_p)``).
    """
    n_v, n_p = blocks.n_velocity, blocks.n_pressure
    K = augmented_matrix(blocks)
    rhs = np.concatenate([blocks.F, blocks.G, [0.0]])
    if method == "direct":
        x = _direct(K, rhs)
    elif method == "minres":
        x = _minres(K, rhs, blocks, maxiter=maxiter)
    else:
        raise ValueError(f"unknown method {method!r}")
    u, p, lam = x[:n_v], x[n_v:n_v + n_p], x[-1]

    momentum = np.linalg.norm(blocks.A @ u + blocks.B.T @ p - blocks.F) / max(1.0, np.linalg.norm(blocks.F))
    mass = np.linalg.norm(blocks.B @ u - blocks.G) / max(1.0, np.linalg.norm(blocks.G))
    mean_p = float(blocks.cell_areas @ p / blocks.cell_areas.sum())
    residuals = {"momentum": float(momentum), "mass": float(mass), "mean_pressure": mean_p}
    if blocks.dofmap is not None:
        u = DiscreteVelocity(blocks.dofmap, u, blocks.flux)
    return SaddleSolution(u=u, p=p, residuals=residuals, multiplier=float(lam))


# ---------------------------------------------------------------------------
# spectral estimates

def _cholesky(N):
    try:
        return la.cho_factor(N.toarray() if sp.issparse(N) else np.asarray(N))
    except la.LinAlgError:
        raise SolverError("norm Gram matrix is not positive definite") from None


def estimate_coercivity(blocks, norm_gram, dense=None):
    """Smallest generalized eigenvalue of ``A v = lambda N v``."""
    A = blocks.A
    n = A.shape[0]
    dense = n <= DENSE_LIMIT if dense is None else dense
    if dense:
        _cholesky(norm_gram)
        lam = la.eigh(A.toarray(), norm_gram.toarray(), eigvals_only=True, subset_by_index=[0, 0])
        return float(lam[0])
    try:
        spla.splu(sp.csc_matrix(norm_gram))
    except RuntimeError:
        raise SolverError("norm Gram matrix is not positive definite") from None
    lam = spla.eigsh(sp.csc_matrix(A), k=1, M=sp.csc_matrix(norm_gram), sigma=0.0,
                     which="LM", return_eigenvectors=False)
    return float(lam.min())


def schur_operator(blocks, norm_gram):
    """Dense ``B N^-1 B^T``."""
    c = _cholesky(norm_gram)
    X = la.cho_solve(c, blocks.B.T.toarray())
    return blocks.B @ X


def estimate_inf_sup(blocks, norm_gram, dense=None, tol=1e-10):
    """Discrete inf-sup constant ``sqrt(lambda_min)`` of
    ``B N^-1 B^T q = lambda M_p q`` over mean-free pressures."""
    areas = blocks.cell_areas
    s = 1.0 / np.sqrt(areas)
    z = np.sqrt(areas) / np.linalg.norm(np.sqrt(areas))
    n = blocks.n_velocity
    dense = n <= DENSE_LIMIT if dense is None else dense
    if dense:
        S = schur_operator(blocks, norm_gram)
        S = s[:, None] * S * s[None, :]
        Q = la.null_space(z[None, :])
        lam = la.eigvalsh(Q.T @ S @ Q)
        lam_min = float(lam[0])
    else:
        lu = spla.splu(sp.csc_matrix(norm_gram))
        B, BT = blocks.B, blocks.B.T.tocsr()

        def schur(q):
            return s * (B @ lu.solve(BT @ (s * q)))

        shape = (len(areas),) * 2
        top = spla.eigsh(spla.LinearOperator(shape, matvec=schur, dtype=float), k=1,
                         which="LA", tol=1e-6, return_eigenvectors=False)[0]

        def apply(q):
            # constant mode moved above the spectrum
            r = schur(q - z * (z @ q))
            return r - z * (z @ r) + 2.0 * top * z * (z @ q)

        op = spla.LinearOperator(shape, matvec=apply, dtype=float)
        lam_min = float(spla.eigsh(op, k=1, which="SA", tol=1e-10, return_eigenvectors=False)[0])
    if lam_min < tol:
        raise InfSupError(f"inf-sup estimate collapsed: lambda_min = {lam_min:.3e}")
    return float(np.sqrt(lam_min))
