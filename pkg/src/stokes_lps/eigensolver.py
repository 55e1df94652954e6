"""Smallest eigenpairs of the stabilized Stokes pencil.

The pencil is ``K x = lam Mb x`` with

    K  = [[A, -B^T, 0], [B, S, c], [0, c^T, 0]],   Mb = diag(M, 0, 0)

acting on ``x = (u, p, mu)``, where the multiplier ``mu`` enforces a
zero-mean pressure. ``K`` is nonsingular, so we iterate with ``K^-1 Mb``
(shift-invert at zero). Restricted to the velocity block this operator is
self-adjoint in the ``M`` inner product, which is what the Rayleigh-Ritz
step relies on. Infinite eigenvalues coming from the zero mass blocks are
mapped to zero and never enter the subspace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import linsolve
from .assembly import BlockSystem, form_eval
from .errors import ConvergenceError, DimensionMismatchError, InvalidArgumentError
from .spaces import FeFunction

START_SEED = 20100511


@dataclass(frozen=True, eq=False)
class EigenPair:
    lam: float
    u: FeFunction
    p: FeFunction
    residual: float
    index: int
    iterations: int = 0


def augmented_matrices(sys: BlockSystem):
    """Bordered stiffness ``K`` and singular mass ``Mb`` in CSR format."""
    n_u, n_p = sys.n_u, sys.n_p
    c = sp.csr_matrix(sys.c[:, None])
    K = sp.bmat([[sys.A, -sys.B.T, None],
                 [sys.B, sys.S, c],
                 [None, c.T, sp.csr_matrix((1, 1))]], format="csr")
    Mb = sp.block_diag([sys.M, sp.csr_matrix((n_p + 1, n_p + 1))], format="csr")
    return K, Mb


def _pack(sys, pair):
    if pair.u.dofmap is not sys.space or pair.p.dofmap is not sys.space:
        raise DimensionMismatchError("eigenpair does not belong to this block system")
    return np.concatenate([sys.restrict_velocity(pair.u), pair.p.coefficients, [0.0]])


def eig_residual(sys: BlockSystem, pair: EigenPair, K=None, Mb=None) -> float:
    """||K x - lam Mb x|| / ||Mb x|| for x = (u, p, 0)."""
    if K is None:
        K, Mb = augmented_matrices(sys)
    x = _pack(sys, pair)
    mx = Mb @ x
    denom = np.linalg.norm(mx)
    if denom == 0.0:
        raise InvalidArgumentError("zero velocity: residual normalization impossible")
    return float(np.linalg.norm(K @ x - pair.lam * mx) / denom)


def rayleigh_quotient(sys: BlockSystem, u: FeFunction) -> float:
    """a(u, u) / r(u, u)."""
    den = form_eval(sys, "r", u, u)
    if den <= 0.0:
        raise InvalidArgumentError("Rayleigh quotient of the zero function")
    return form_eval(sys, "a", u, u) / den


def _m_orthonormalize(X, M):
    for _ in range(2):
        G = X.T @ (M @ X)
        G = 0.5 * (G + G.T)
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(G)
            keep = w > w.max() * 1e-13
            X = X @ (V[:, keep] / np.sqrt(w[keep]))
            continue
        X = sla.solve_triangular(L, X.T, lower=True).T
    return X


def _finish(sys, x, lam, index, iterations, K, Mb):
    n_u, n_p = sys.n_u, sys.n_p
    u = x[:n_u]
    scale = np.sqrt(u @ (sys.M @ u))
    x = x / scale
    u = x[:n_u]
    if u[np.argmax(np.abs(u))] < 0:
        x = -x
    pair = EigenPair(float(lam), sys.velocity_function(x[:n_u]), sys.pressure_function(x[n_u:n_u + n_p]),
                     0.0, index, iterations)
    res = eig_residual(sys, pair, K, Mb)
    return EigenPair(pair.lam, pair.u, pair.p, res, index, iterations)


def solve_smallest(sys: BlockSystem, count: int = 1, tol: float = 1e-10, max_iterations: int = 500,
                   block_size: int | None = None, factorization: linsolve.Factorization | None = None
                   ) -> list[EigenPair]:
    """The ``count`` smallest eigenpairs, ascending, each with residual <= ``tol``.

    Uses block subspace iteration with Rayleigh-Ritz on ``K^-1 Mb``.
    Pairs are normalized to r(u, u) = 1 with the largest-magnitude velocity
    coefficient positive.
    """
    n_u, n_p = sys.n_u, sys.n_p
    if count < 1:
        raise InvalidArgumentError(f"need at least one eigenpair, got count={count}")
    if count > n_u:
        raise InvalidArgumentError(f"only {n_u} finite eigenvalues exist, requested {count}")
    K, Mb = augmented_matrices(sys)
    fac = factorization or linsolve.factorize(K)
    bs = block_size or max(2 * count, count + 8)
    bs = min(max(bs, count), n_u)
    M = sys.M

    rng = np.random.default_rng(START_SEED)
    X = _m_orthonormalize(rng.standard_normal((n_u, bs)), M)
    rhs = np.zeros((K.shape[0], bs))
    best = np.inf
    for it in range(1, max_iterations + 1):
        MX = M @ X
        rhs[:n_u] = MX
        W = linsolve.solve(fac, rhs)
        Y = W[:n_u]
        H = X.T @ (M @ Y)
        theta, C = np.linalg.eigh(0.5 * (H + H.T))
        order = np.argsort(-theta)
        theta, C = theta[order], C[:, order]
        if theta[count - 1] <= 0:
            raise ConvergenceError("non-positive Ritz value: pencil is not definite", best, it)
        lam = 1.0 / theta[:count]
        XC, YC = X @ C[:, :count], Y @ C[:, :count]
        MYC = M @ YC
        est = np.linalg.norm(M @ XC - lam * MYC, axis=0) / np.linalg.norm(MYC, axis=0)
        best = min(best, float(est.max()))
        if est.max() <= tol:
            pairs = [_finish(sys, W @ C[:, j], lam[j], j, it, K, Mb) for j in range(count)]
            worst = max(pr.residual for pr in pairs)
            best = min(best, worst)
            if worst <= tol:
                return pairs
        X = _m_orthonormalize(Y @ C, M)
    raise ConvergenceError(
        f"subspace iteration did not reach residual {tol:g} in {max_iterations} iterations "
        f"(best {best:.3e})", best, max_iterations)


def discrete_equation_residuals(sys: BlockSystem, pair: EigenPair) -> tuple[float, float]:
    """Relative residuals of both discrete equations tested against every basis function.

    Each is the norm of the residual vector divided by the largest norm of
    its individual terms.
    """
    u = sys.restrict_velocity(pair.u)
    p = pair.p.coefficients
    t1 = [sys.A @ u, -(sys.B.T @ p), -pair.lam * (sys.M @ u)]
    t2 = [sys.B @ u, sys.S @ p]
    rel = []
    for terms in (t1, t2):
        scale = max(np.linalg.norm(t) for t in terms)
        rel.append(float(np.linalg.norm(sum(terms)) / scale) if scale > 0 else 0.0)
    return rel[0], rel[1]


def dense_pencil_eigenvalues(sys: BlockSystem) -> np.ndarray:
    """All finite eigenvalues of the bordered pencil by dense QZ, ascending (small systems)."""
    K, Mb = augmented_matrices(sys)
    w = sla.eigvals(K.toarray(), Mb.toarray(), homogeneous_eigvals=True)
    alpha, beta = w
    finite = np.abs(beta) > 1e-10 * np.abs(alpha)
    vals = alpha[finite] / beta[finite]
    return np.sort(vals.real)


DENSE_INFSUP_LIMIT = 8000


def infsup_global(sys: BlockSystem) -> float:
    """Discrete inf-sup constant of A_h in the triple norm on V_h x Q_h.

    Smallest singular value of ``L^-1 K L^-T`` where ``L L^T`` is the Gram
    matrix of the triple norm, both restricted to zero-mean pressures.
    Dense; intended for diagnostic meshes.
    """
    n_u, n_p = sys.n_u, sys.n_p
    if n_u + n_p - 1 > DENSE_INFSUP_LIMIT:
        raise InvalidArgumentError(
            f"dense inf-sup estimate limited to {DENSE_INFSUP_LIMIT} unknowns, system has {n_u + n_p - 1}")
    K = sp.bmat([[sys.A, -sys.B.T], [sys.B, sys.S]]).toarray()
    N = sp.block_diag([sys.A, sys.mass_scalar + sys.S]).toarray()
    # zero-mean pressures: the last pressure coefficient is eliminated
    c = sys.c
    Z = np.zeros((n_u + n_p, n_u + n_p - 1))
    Z[:n_u, :n_u] = np.eye(n_u)
    Z[n_u:n_u + n_p - 1, n_u:] = np.eye(n_p - 1)
    Z[n_u + n_p - 1, n_u:] = -c[:-1] / c[-1]
    Kz = Z.T @ K @ Z
    L = np.linalg.cholesky(Z.T @ N @ Z)
    T = sla.solve_triangular(L, sla.solve_triangular(L, Kz.T, lower=True).T, lower=True)
    return float(sla.svdvals(T).min())
