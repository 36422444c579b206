"""Static-basis baseline: snapshot matrices and truncated-SVD bases.

Snapshot columns pool every (t, mu) sample available on one common mesh;
the basis is the leading left singular vectors. The same machinery builds
the slow-decay demonstration matrices for pure advection of a profile and
their transformed, time-aligned counterparts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import thin_svd
from .online import BasisMatrix, online_step_galerkin
from .snapshots import SnapshotSet


@dataclass
class SnapshotMatrix:
    """Columns are snapshots; rows follow the mesh nodes.

    Column layout is parameter-major, time-minor: column index
    ``k * n_times + j`` holds the sample at (mu_k, t_j).
    """

    matrix: np.ndarray
    nodes: np.ndarray
    times: np.ndarray
    parameters: np.ndarray

    @property
    def column_index(self):
        n_t = self.times.size
        return [(k, j) for k in range(self.parameters.shape[0]) for j in range(n_t)]


@dataclass
class PodBasis:
    """Orthonormal basis columns with the retained singular values."""

    Phi: np.ndarray
    singular_values: np.ndarray
    nodes: np.ndarray

    @property
    def r(self) -> int:
        return self.Phi.shape[1]


def assemble_snapshot_matrix(snapshots: SnapshotSet) -> SnapshotMatrix:
    """Pool all (t, mu) samples as columns; requires one common mesh."""
    if snapshots.per_time_meshes:
        raise ValueError(
            "snapshots live on per-time meshes; a pooled snapshot matrix needs a "
            "common mesh (the adaptive-basis route has no such restriction)"
        )
    n_mu, n_t, n_x = snapshots.values.shape
    matrix = np.ascontiguousarray(
        np.transpose(snapshots.values, (2, 0, 1)).reshape(n_x, n_mu * n_t)
    )
    return SnapshotMatrix(matrix, snapshots.nodes.copy(), snapshots.times.copy(), snapshots.parameters.copy())


def transformed_snapshot_matrix(u0, mesh_nodes, times) -> SnapshotMatrix:
    """Time-aligned advection snapshots: every column is the initial profile.

    For unit-speed advection the shift x -> x - t undoes the transport, so
    the sample at (x_i, t_j) becomes u0(x_i) and the matrix has rank one.
    """
    mesh_nodes = np.asarray(mesh_nodes, dtype=float)
    times = np.asarray(times, dtype=float)
    column = np.asarray(u0(mesh_nodes), dtype=float)
    matrix = np.tile(column[:, None], (1, times.size))
    return SnapshotMatrix(matrix, mesh_nodes, times, np.zeros((1, 0)))


def pod_basis(S: SnapshotMatrix, r: int) -> PodBasis:
    """Leading r left singular vectors of the snapshot matrix."""
    if r < 1 or r > min(S.matrix.shape):
        raise ValueError(f"r={r} outside 1..{min(S.matrix.shape)}")
    svd = thin_svd(S.matrix)
    return PodBasis(svd.left_vectors[:, :r].copy(), svd.singular_values[:r].copy(), S.nodes.copy())


def pod_online_step(F_mu, b_n, basis: PodBasis, alpha_guess, linear=False, jacobian_apply=None, tol=1e-10):
    """Galerkin step with the static basis (same contract as the adaptive step)."""
    Phi = BasisMatrix(basis.Phi, 0.0, ())
    return online_step_galerkin(
        F_mu, b_n, Phi, alpha_guess, linear=linear, jacobian_apply=jacobian_apply, tol=tol
    )
