"""Dense linear algebra and iterative solvers used throughout the workbench.

Matrices are plain two-dimensional float64 ``numpy`` arrays in row-major
order. The SVD front end switches between a direct bidiagonalization path
(LAPACK) and a Gram-matrix path for strongly rectangular inputs, which is
the cheaper route for snapshot matrices with many more columns than rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import GmresError, NewtonError, RankDeficiencyError

# Ratio of min(m, n) to max(m, n) below which the Gram-matrix SVD is used.
GRAM_PATH_RATIO = 0.25


@dataclass
class SvdResult:
    """Thin SVD ``A = U @ diag(s) @ V.T`` with ``k = min(m, n)`` triplets.

    ``singular_values`` are nonincreasing and nonnegative; the columns of
    ``left_vectors`` (m, k) and ``right_vectors`` (n, k) are orthonormal.
    """

    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray

    def truncate(self, r: int) -> "SvdResult":
        return SvdResult(
            self.left_vectors[:, :r].copy(),
            self.singular_values[:r].copy(),
            self.right_vectors[:, :r].copy(),
        )

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def gmres(
    apply_operator: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    tol: float = 1e-10,
    restart: int = 30,
    max_iter: int = 500,
    x0: np.ndarray | None = None,
    residual_log: list | None = None,
) -> np.ndarray:
    """Restarted GMRES for ``A x = rhs`` with a matrix-free operator.

    Converges when ``||A x - rhs||_2 <= tol * ||rhs||_2`` (absolute ``tol``
    for a zero right-hand side). ``max_iter`` counts inner Arnoldi steps
    across restarts. True residual norms at every restart boundary are
    appended to ``residual_log`` when given. Raises :class:`GmresError` on
    stagnation or exhaustion.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.size
    b_norm = np.linalg.norm(rhs)
    target = tol * b_norm if b_norm > 0 else tol
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    r = rhs - apply_operator(x) if x.any() else rhs.copy()
    res_norm = np.linalg.norm(r)
    if residual_log is not None:
        residual_log.append(res_norm)
    if res_norm <= target:
        return x

    total_iters = 0
    while total_iters < max_iter:
        m = min(restart, max_iter - total_iters)
        # Arnoldi with modified Gram-Schmidt; Givens rotations keep a running
        # residual estimate so convergence is detected without extra applies.
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        V[0] = r / res_norm
        g[0] = res_norm
        k_used = 0
        for k in range(m):
            # copy: the operator may return its input (e.g. the identity)
            w = np.array(apply_operator(V[k]), dtype=float)
            for i in range(k + 1):
                H[i, k] = V[i] @ w
                w -= H[i, k] * V[i]
            h_next = np.linalg.norm(w)
            breakdown = h_next == 0.0
            if not breakdown:
                V[k + 1] = w / h_next
            H[k + 1, k] = h_next
            for i in range(k):
                hik = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = hik
            denom = np.hypot(H[k, k], H[k + 1, k])
            if denom == 0.0:
                cs[k], sn[k] = 1.0, 0.0
            else:
                cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k_used = k + 1
            total_iters += 1
            # breakdown means an invariant subspace: the LS solve is exact
            if abs(g[k + 1]) <= target or breakdown:
                break
        y = sla.solve_triangular(H[:k_used, :k_used], g[:k_used], check_finite=False)
        x = x + V[:k_used].T @ y
        r = rhs - apply_operator(x)
        res_norm = np.linalg.norm(r)
        if residual_log is not None:
            residual_log.append(res_norm)
        if res_norm <= target:
            return x
    raise GmresError("GMRES did not converge", res_norm, total_iters)


def newton_solve(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian_apply: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x0: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 50,
    gmres_tol: float = 1e-4,
    gmres_restart: int = 30,
    gmres_max_iter: int = 500,
) -> np.ndarray:
    """Newton iteration with matrix-free GMRES linear solves and full steps.

    Terminates when ``||residual(x)||_2 <= tol``; raises :class:`NewtonError`
    with the residual history when ``max_iter`` is exhausted.
    """
    x = np.array(x0, dtype=float)
    history = []
    for _ in range(max_iter):
        r = residual(x)
        r_norm = np.linalg.norm(r)
        history.append(r_norm)
        if r_norm <= tol:
            return x
        point = x.copy()
        delta = gmres(
            lambda v: jacobian_apply(point, v),
            -r,
            tol=gmres_tol,
            restart=gmres_restart,
            max_iter=gmres_max_iter,
        )
        x = x + delta
    r_norm = np.linalg.norm(residual(x))
    history.append(r_norm)
    if r_norm <= tol:
        return x
    raise NewtonError("Newton iteration did not converge", history)


def thin_svd(A: np.ndarray) -> SvdResult:
    """Thin SVD with an automatic Gram-matrix path for very wide/tall inputs.

    For ``min(m, n) < 0.25 * max(m, n)`` the decomposition is computed from
    the eigendecomposition of the small Gram matrix (method of snapshots);
    otherwise LAPACK's Golub-Kahan bidiagonalization routine is used.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("thin_svd expects a 2-d array")
    m, n = A.shape
    if min(m, n) < GRAM_PATH_RATIO * max(m, n):
        return _svd_gram(A)
    U, s, Vt = sla.svd(A, full_matrices=False, lapack_driver="gesvd", check_finite=False)
    return SvdResult(U, s, Vt.T)


def _svd_gram(A: np.ndarray) -> SvdResult:
    """Method-of-snapshots SVD via the Gram matrix of the smaller dimension.

    Squaring limits resolution: singular values below about
    ``sqrt(max_dim * eps) * s_max`` are indistinguishable from zero and are
    reported as zero, with their vectors filled by orthonormal completion.
    That keeps reconstruction and orthogonality exact for (numerically)
    rank-deficient inputs instead of returning noise directions.
    """
    m, n = A.shape
    transposed = m > n
    B = A.T if transposed else A  # B has shape (small, large)
    k = B.shape[0]
    w, Us = sla.eigh(B @ B.T, check_finite=False)
    order = np.argsort(w)[::-1]
    w = w[order]
    Us = Us[:, order]
    s = np.sqrt(np.clip(w, 0.0, None))
    cutoff = s[0] * np.sqrt(max(m, n) * np.finfo(float).eps) if s[0] > 0 else 0.0
    good = s > cutoff
    Vl = np.empty((B.shape[1], k))
    if good.any():
        Vl[:, good] = (B.T @ Us[:, good]) / s[good]
        # One QR pass removes the O(eps * s_max / s_i) orthogonality loss of
        # the derived vectors; R ~ I so column pairing survives.
        Q, R = np.linalg.qr(Vl[:, good])
        Q *= np.sign(np.diag(R))
        Vl[:, good] = Q
    n_bad = int(np.count_nonzero(~good))
    if n_bad:
        Vl[:, ~good] = _orthonormal_completion(Vl[:, good], B.shape[1], n_bad)
        s[~good] = 0.0
    if transposed:
        return SvdResult(Vl, s, Us)
    return SvdResult(Us, s, Vl)


def _orthonormal_completion(Q: np.ndarray, dim: int, count: int) -> np.ndarray:
    """Deterministically extend orthonormal columns ``Q`` by ``count`` more."""
    cols = []
    have = Q
    e = np.zeros(dim)
    for idx in range(dim):
        if len(cols) == count:
            break
        e[:] = 0.0
        e[idx] = 1.0
        v = e - have @ (have.T @ e)
        for c in cols:
            v -= (c @ v) * c
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            v = v / norm
            # second orthogonalization pass for numerical safety
            v -= have @ (have.T @ v)
            for c in cols:
                v -= (c @ v) * c
            cols.append(v / np.linalg.norm(v))
    if len(cols) != count:
        raise np.linalg.LinAlgError("failed to complete an orthonormal basis")
    return np.column_stack(cols)


def least_squares(Phi: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimize ``||Phi @ alpha - y||_2`` via QR (no normal equations).

    ``y`` may be a vector or a matrix of stacked right-hand-side columns.
    Raises :class:`RankDeficiencyError` naming the first numerically
    dependent column when ``|R_ii|`` falls below ``1e-12 * max_j |R_jj|``.
    """
    Phi = np.asarray(Phi, dtype=float)
    Q, R = np.linalg.qr(Phi)
    diag = np.abs(np.diag(R))
    dmax = diag.max() if diag.size else 0.0
    if dmax == 0.0:
        raise RankDeficiencyError(0, 0.0)
    bad = np.nonzero(diag < 1e-12 * dmax)[0]
    if bad.size:
        raise RankDeficiencyError(int(bad[0]), float(diag[bad[0]] / dmax))
    return sla.solve_triangular(R, Q.T @ y, check_finite=False)
