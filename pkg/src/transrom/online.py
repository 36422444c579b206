"""Online stage: project the full-order one-step operator onto a basis.

At each step the (t, mu)-dependent basis matrix is evaluated from the
trained basis network (mesh free: any node set works) and the reduced
coordinates advance by requiring the projected one-step equation

    Phi^T F(Phi a) = Phi^T b        (Galerkin)

or its residual-minimizing variant Phi^T J^T (F(Phi a) - b) = 0. Explicit
steppers are handled by projecting the completed full update onto the new
basis span. The learned basis is generally not orthonormal, so projections
that need a factorization go through QR with condition monitoring.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NewtonError, ProjectionConditionError, SolverError, TransromError
from .linalg import least_squares
from .model import LpModel, basis_values, coeff_values, predict_values
from .snapshots import SnapshotSet

CONDITION_LIMIT = 1e10


@dataclass
class BasisMatrix:
    """Nodal values of the reduced basis at one (t, mu): Phi[i, j] = phi_j(x_i)."""

    Phi: np.ndarray
    time: float
    mu: tuple

    @property
    def r(self) -> int:
        return self.Phi.shape[1]


def evaluate_basis(model: LpModel, nodes, t: float, mu=()) -> BasisMatrix:
    """Evaluate the basis network at arbitrary nodes (independent of training mesh)."""
    Phi = basis_values(model, nodes, t, mu)
    return BasisMatrix(Phi, float(t), tuple(np.atleast_1d(np.asarray(mu, dtype=float)).tolist()))


def predict_learning(model: LpModel, nodes, t: float, mu=()) -> np.ndarray:
    """Pure network prediction at the nodes (no projection)."""
    return predict_values(model, nodes, t, mu)


def _qr_with_condition(P: np.ndarray, step=None, time=None, limit: float = CONDITION_LIMIT, log=None):
    """Economic QR of the basis with a 1-norm condition estimate of R.

    The learned basis is not orthonormal; nonlinear projected iterations
    run through Q with the reduced coordinates mapped back through R.
    Steps abort when the condition estimate exceeds ``limit``.
    """
    Q, R = np.linalg.qr(P)
    try:
        R_inv = sla.solve_triangular(R, np.eye(R.shape[0]), check_finite=False)
        cond = float(np.linalg.norm(R, 1) * np.linalg.norm(R_inv, 1))
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > limit:
        raise ProjectionConditionError(cond, limit, step=step, time=time)
    if log is not None:
        log.append(cond)
    return Q, R


def _gram_condition_check(P: np.ndarray, step=None, time=None, limit: float = CONDITION_LIMIT, log=None):
    """Condition estimate of the basis via its Cholesky-QR triangular factor.

    Phi^T Phi = R^T R gives an R with exactly the basis' singular values at
    one dgemm plus r-by-r work, far cheaper per step than a tall-skinny
    Householder QR. The Cholesky breaks down once cond(Phi) nears 1e8; in
    that (rare) regime the Householder factorization supplies the
    authoritative estimate for the abort decision.
    """
    G = P.T @ P
    try:
        L = np.linalg.cholesky(G)
        L_inv = sla.solve_triangular(L, np.eye(L.shape[0]), lower=True, check_finite=False)
        cond = float(np.linalg.norm(L, 1) * np.linalg.norm(L_inv, 1))
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > limit:
        # fall back to the exact factorization before giving up
        _qr_with_condition(P, step=step, time=time, limit=limit, log=log)
        return float(np.linalg.cond(P, 2)) if log is None else log[-1]
    if log is not None:
        log.append(cond)
    return cond


def online_step_galerkin(
    F_mu,
    b_n: np.ndarray,
    Phi: BasisMatrix | np.ndarray,
    alpha_guess: np.ndarray,
    linear: bool = False,
    jacobian_apply=None,
    tol: float = 1e-10,
    max_iter: int = 50,
    step=None,
    time=None,
    cond_log=None,
    u_guess=None,
):
    """Solve the r-dimensional projected system Phi^T F(Phi a) = Phi^T b.

    Linear operators reduce to one dense r-by-r solve; nonlinear laws run
    Newton on the projected residual with the projected analytic Jacobian
    Phi^T J Phi. ``F_mu`` (and ``jacobian_apply``) must accept matrices of
    stacked columns as well as vectors.

    ``u_guess`` (a full state, typically the previous reduced state) is the
    preferred Newton start: coefficients are not comparable across steps
    when the basis changes and may carry huge cancelling components, while
    projecting a state onto the new span is always well scaled.
    """
    P = Phi.Phi if isinstance(Phi, BasisMatrix) else np.asarray(Phi, dtype=float)
    if linear:
        # one dense r-by-r solve; errors forced along near-dependent basis
        # directions by the raw assembly barely move the reconstruction
        _gram_condition_check(P, step=step, time=time, log=cond_log)
        F0 = F_mu(np.zeros(P.shape[0]))
        W = F_mu(P)
        if np.any(F0):
            W = W - F0[:, None]
        M = P.T @ W
        return sla.solve(M, P.T @ (b_n - F0), check_finite=False)
    Q, R = _qr_with_condition(P, step=step, time=time, log=cond_log)
    if jacobian_apply is None:
        raise ValueError("nonlinear Galerkin steps need jacobian_apply")
    # iterate in the orthonormal factor (beta = R alpha), map back at the end
    if u_guess is not None:
        beta = Q.T @ np.asarray(u_guess, dtype=float)
    else:
        beta = R @ np.asarray(alpha_guess, dtype=float)
    for _ in range(max_iter):
        u = Q @ beta
        rho = Q.T @ (F_mu(u) - b_n)
        if np.linalg.norm(rho) <= tol:
            return sla.solve_triangular(R, beta, check_finite=False)
        M = Q.T @ jacobian_apply(u, Q)
        beta = beta - sla.solve(M, rho, check_finite=False)
    rho = Q.T @ (F_mu(Q @ beta) - b_n)
    if np.linalg.norm(rho) <= tol:
        return sla.solve_triangular(R, beta, check_finite=False)
    raise NewtonError("projected Newton did not converge", [float(np.linalg.norm(rho))])


def online_step_minres(
    F_mu,
    b_n: np.ndarray,
    Phi: BasisMatrix | np.ndarray,
    alpha_guess: np.ndarray,
    jacobian_apply,
    linear: bool = False,
    tol: float = 1e-10,
    max_iter: int = 50,
    step=None,
    time=None,
    u_guess=None,
):
    """Residual-minimizing step: argmin_a ||F(Phi a) - b||_2 by Gauss-Newton.

    Stationarity is the Jacobian-weighted projection
    Phi^T J^T (F(Phi a) - b) = 0; for linear F a single QR least-squares
    solve is exact. ``u_guess`` seeds the iteration as a full state (see
    online_step_galerkin).
    """
    P = Phi.Phi if isinstance(Phi, BasisMatrix) else np.asarray(Phi, dtype=float)
    alpha = np.asarray(alpha_guess, dtype=float).copy()
    if u_guess is not None:
        alpha = least_squares(P, np.asarray(u_guess, dtype=float))
    if linear:
        F0 = F_mu(np.zeros(P.shape[0]))
        W = F_mu(P)
        if np.any(F0):
            W = W - F0[:, None]
        return least_squares(W, b_n - F0)
    for _ in range(max_iter):
        u = P @ alpha
        res = F_mu(u) - b_n
        J_P = jacobian_apply(u, P)
        grad = J_P.T @ res  # = Phi^T J^T (F(Phi a) - b)
        if np.linalg.norm(grad) <= tol:
            return alpha
        delta = least_squares(J_P, -res)
        alpha = alpha + delta
    u = P @ alpha
    grad = jacobian_apply(u, P).T @ (F_mu(u) - b_n)
    if np.linalg.norm(grad) <= tol:
        return alpha
    raise NewtonError("Gauss-Newton residual minimization did not converge", [float(np.linalg.norm(grad))])


def online_step_explicit(G, u_r_n: np.ndarray, Phi_next: BasisMatrix | np.ndarray):
    """Project the completed explicit full update onto the next basis span."""
    P = Phi_next.Phi if isinstance(Phi_next, BasisMatrix) else np.asarray(Phi_next, dtype=float)
    return least_squares(P, G(u_r_n))


def project_full_solution(u_full: np.ndarray, Phi: BasisMatrix | np.ndarray) -> np.ndarray:
    """L2 projection of a full-order state onto the basis span."""
    P = Phi.Phi if isinstance(Phi, BasisMatrix) else np.asarray(Phi, dtype=float)
    return P @ least_squares(P, u_full)


def basis_shift_deviation(model: LpModel, wave_speed: float, t: float, nodes) -> np.ndarray:
    """Per-basis L2 norm of phi_i(x, t) - phi_i(x - c t, 0) over the nodes.

    Shifted arguments may leave the node range; the network is mesh free so
    they are evaluated directly. A zero vector at t = 0 is exact.
    """
    nodes = np.asarray(nodes, dtype=float)
    Phi_t = basis_values(model, nodes, t)
    Phi_0 = basis_values(model, nodes - wave_speed * t, 0.0)
    diff = Phi_t - Phi_0
    w = np.gradient(nodes)
    return np.sqrt(np.sum(diff * diff * w[:, None], axis=0))


# ---------------------------------------------------------------------------
# trajectory driver


@dataclass
class RomRunResult:
    """Reduced trajectory, reconstructions, errors, and the wall-time split.

    ``timing`` holds seconds spent evaluating the basis network versus
    assembling/solving the projected step equations (reduced right-hand
    side assembly included); ``total_s`` covers the whole online loop.
    """

    times: np.ndarray
    alphas: np.ndarray
    reconstructions: np.ndarray
    l2_errors: np.ndarray
    relative_errors: np.ndarray
    timing: dict
    metadata: dict = field(default_factory=dict)
    condition_log: list = field(default_factory=list)


class StaticBasisSource:
    """Adapter giving a fixed matrix the same interface as a trained model."""

    def __init__(self, Phi: np.ndarray, nodes: np.ndarray):
        self.Phi = np.asarray(Phi, dtype=float)
        self.nodes = np.asarray(nodes, dtype=float)

    def basis_at(self, nodes, t, mu):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.shape != self.nodes.shape or not np.allclose(nodes, self.nodes, atol=1e-12):
            raise SolverError("a static basis cannot be evaluated on a different mesh")
        return BasisMatrix(self.Phi, float(t), tuple(np.atleast_1d(mu).tolist()) if np.size(mu) else ())


class ModelBasisSource:
    def __init__(self, model: LpModel):
        self.model = model

    def basis_at(self, nodes, t, mu):
        return evaluate_basis(self.model, nodes, t, mu)


def _weights_for(nodes: np.ndarray) -> np.ndarray:
    d = np.diff(nodes)
    if np.all(np.abs(d - d[0]) <= 1e-12 * abs(d[0])):
        return np.full(nodes.size, d[0])
    w = np.empty(nodes.size)
    w[0] = 0.5 * d[0]
    w[-1] = 0.5 * d[-1]
    w[1:-1] = 0.5 * (d[:-1] + d[1:])
    return w


def _errors_against(u, ref, w):
    diff = u - ref
    l2 = float(np.sqrt(np.sum(diff * diff * w)))
    ref_norm = float(np.sqrt(np.sum(ref * ref * w)))
    rel = l2 / ref_norm if ref_norm > 0 else np.nan
    return l2, rel


def run_rom(
    operator_factory,
    source,
    reference: SnapshotSet,
    mu,
    t_start: float,
    t_end: float,
    mode: str = "lp-galerkin",
    solver_tol: float = 1e-10,
) -> RomRunResult:
    """March the reduced solution along the reference time grid.

    ``operator_factory(dt)`` returns the one-step operator for the law on
    the reference mesh (None for mode "learning"). ``source`` is a
    ModelBasisSource or StaticBasisSource. The initial reduced state is the
    least-squares projection of the reference state at ``t_start``; errors
    are recorded against the reference trajectory at every step.
    """
    k = reference.parameter_index(mu)
    j0 = reference.time_index(t_start)
    times = reference.times
    j_end = reference.time_index(t_end)
    if j_end <= j0 and mode != "learning":
        raise ValueError("empty time window")
    nodes = reference.nodes_at(j0)
    w = _weights_for(nodes)
    mu_t = np.atleast_1d(np.asarray(mu, dtype=float)) if np.size(mu) else np.zeros(0)

    t_total0 = _time.perf_counter()
    basis_s = 0.0
    proj_s = 0.0
    cond_log = []

    tic = _time.perf_counter()
    Phi0 = source.basis_at(nodes, times[j0], mu_t)
    basis_s += _time.perf_counter() - tic
    tic = _time.perf_counter()
    alpha = least_squares(Phi0.Phi, reference.values[k, j0])
    proj_s += _time.perf_counter() - tic

    n_rec = j_end - j0 + 1
    alphas = np.empty((n_rec, Phi0.r))
    recons = np.empty((n_rec, nodes.size))
    l2s = np.empty(n_rec)
    rels = np.empty(n_rec)
    alphas[0] = alpha
    recons[0] = Phi0.Phi @ alpha
    l2s[0], rels[0] = _errors_against(recons[0], reference.values[k, j0], w)

    if mode == "learning":
        for out, j in enumerate(range(j0 + 1, j_end + 1)):
            tic = _time.perf_counter()
            Phi = source.basis_at(nodes, times[j], mu_t)
            a = coeff_values(source.model, times[j], mu_t)
            basis_s += _time.perf_counter() - tic
            alphas[out + 1] = a
            recons[out + 1] = Phi.Phi @ a
            l2s[out + 1], rels[out + 1] = _errors_against(recons[out + 1], reference.values[k, j], w)
        # the projected start is replaced by the pure prediction at t_start
        tic = _time.perf_counter()
        alphas[0] = coeff_values(source.model, times[j0], mu_t)
        recons[0] = Phi0.Phi @ alphas[0]
        basis_s += _time.perf_counter() - tic
        l2s[0], rels[0] = _errors_against(recons[0], reference.values[k, j0], w)
    else:
        u_r = recons[0].copy()
        Phi = Phi0
        for out, j in enumerate(range(j0 + 1, j_end + 1)):
            dt = float(times[j] - times[j - 1])
            op = operator_factory(dt)
            tic = _time.perf_counter()
            Phi_next = source.basis_at(nodes, times[j], mu_t)
            basis_s += _time.perf_counter() - tic
            tic = _time.perf_counter()
            try:
                b = op.rhs(u_r)
                if mode == "lp-galerkin" or mode == "pod":
                    alpha = online_step_galerkin(
                        op.apply_F, b, Phi_next, alpha,
                        linear=op.is_linear, jacobian_apply=op.jacobian_apply,
                        tol=solver_tol, step=j, time=times[j], cond_log=cond_log,
                        u_guess=u_r,
                    )
                elif mode == "lp-minres":
                    alpha = online_step_minres(
                        op.apply_F, b, Phi_next, alpha, op.jacobian_apply,
                        linear=op.is_linear, tol=solver_tol, step=j, time=times[j],
                        u_guess=u_r,
                    )
                else:
                    raise ValueError(f"unknown mode {mode!r}")
                u_r = Phi_next.Phi @ alpha
            except TransromError as exc:
                if isinstance(exc, SolverError):
                    raise
                raise SolverError(f"reduced step failed: {exc}", step=j, time=times[j]) from exc
            proj_s += _time.perf_counter() - tic
            Phi = Phi_next
            alphas[out + 1] = alpha
            recons[out + 1] = u_r
            l2s[out + 1], rels[out + 1] = _errors_against(u_r, reference.values[k, j], w)

    total = _time.perf_counter() - t_total0
    t_hi = None
    if isinstance(source, ModelBasisSource):
        t_hi = source.model.meta.get("t_train_range", [None, None])[1]
    return RomRunResult(
        times[j0 : j_end + 1].copy(),
        alphas,
        recons,
        l2s,
        rels,
        {"basis_eval_s": basis_s, "projection_solve_s": proj_s, "total_s": total},
        metadata={
            "mode": mode,
            "r": int(alphas.shape[1]),
            "mu": mu_t.tolist(),
            "t_start": float(times[j0]),
            "t_end": float(times[j_end]),
            "n_nodes": int(nodes.size),
            "extrapolated": bool(t_hi is not None and times[j_end] > t_hi + 1e-12),
        },
        condition_log=cond_log,
    )


def run_rom_moving_mesh(
    problem,
    source,
    reference: SnapshotSet,
    t_start: float,
    t_end: float,
    mode: str = "lp-galerkin",
    solver_tol: float = 1e-10,
) -> RomRunResult:
    """Reduced run coupled to a moving mesh (one mesh per reference time).

    Each step interpolates the reduced reconstruction from the previous
    mesh to the next one (the same subroutine the full-order run uses),
    rebuilds the upwind backward-Euler operator there, and projects onto
    the basis evaluated at the new nodes. Mesh-free basis evaluation makes
    this possible without any basis interpolation.
    """
    from .fom import Mesh1D, build_step_operator  # local import avoids a cycle

    if not reference.per_time_meshes:
        raise ValueError("moving-mesh runs need a per-time-mesh reference")
    j0 = reference.time_index(t_start)
    j_end = reference.time_index(t_end)
    times = reference.times
    n_rec = j_end - j0 + 1

    t_total0 = _time.perf_counter()
    basis_s = proj_s = 0.0
    cond_log = []
    nodes = reference.nodes[j0]
    tic = _time.perf_counter()
    Phi = source.basis_at(nodes, times[j0], ())
    basis_s += _time.perf_counter() - tic
    tic = _time.perf_counter()
    alpha = least_squares(Phi.Phi, reference.values[0, j0])
    proj_s += _time.perf_counter() - tic

    alphas = np.empty((n_rec, Phi.r))
    recons = np.empty((n_rec, nodes.size))
    l2s = np.empty(n_rec)
    rels = np.empty(n_rec)
    alphas[0] = alpha
    recons[0] = Phi.Phi @ alpha
    l2s[0], rels[0] = _errors_against(recons[0], reference.values[0, j0], _weights_for(nodes))

    u_r = recons[0].copy()
    for out, j in enumerate(range(j0 + 1, j_end + 1)):
        new_nodes = reference.nodes[j]
        dt = float(times[j] - times[j - 1])
        tic = _time.perf_counter()
        Phi_next = source.basis_at(new_nodes, times[j], ())
        basis_s += _time.perf_counter() - tic
        if mode == "learning":
            tic = _time.perf_counter()
            a = coeff_values(source.model, times[j], ())
            basis_s += _time.perf_counter() - tic
            alpha = a
            u_r = Phi_next.Phi @ alpha
        else:
            tic = _time.perf_counter()
            b = np.interp(new_nodes, nodes, u_r)  # same remap as the full-order run
            op = build_step_operator(problem, Mesh1D(new_nodes, kind="moving"), dt, (), "backward_euler")
            alpha = online_step_galerkin(
                op.apply_F, op.rhs(b), Phi_next, alpha,
                linear=op.is_linear, jacobian_apply=op.jacobian_apply,
                tol=solver_tol, step=j, time=times[j], cond_log=cond_log,
                u_guess=b,
            )
            u_r = Phi_next.Phi @ alpha
            proj_s += _time.perf_counter() - tic
        nodes = new_nodes
        alphas[out + 1] = alpha
        recons[out + 1] = u_r
        l2s[out + 1], rels[out + 1] = _errors_against(u_r, reference.values[0, j], _weights_for(new_nodes))

    total = _time.perf_counter() - t_total0
    return RomRunResult(
        times[j0 : j_end + 1].copy(),
        alphas,
        recons,
        l2s,
        rels,
        {"basis_eval_s": basis_s, "projection_solve_s": proj_s, "total_s": total},
        metadata={"mode": mode, "r": int(alphas.shape[1]), "moving_mesh": True,
                  "t_start": float(times[j0]), "t_end": float(times[j_end])},
        condition_log=cond_log,
    )


def run_rom_euler(
    problem,
    mesh,
    sources: dict,
    references: dict,
    t_start: float,
    t_end: float,
    mode: str = "lp-explicit",
    stage_projection: bool = False,
) -> dict:
    """Explicit (SSP-RK3 + WENO5) reduced run for the gas-dynamics system.

    One basis source and one reference trajectory per conserved variable;
    the full explicit update of the reconstructed state is projected onto
    each variable's next basis (block-diagonal least squares). With
    ``stage_projection`` (experimental) the projection is applied after
    every RK stage instead of once per step.
    """
    from .euler import EULER_VARIABLES, ssp_rk3_step, weno5_euler_rhs

    names = list(EULER_VARIABLES)
    ref0 = references[names[0]]
    times = ref0.times
    j0 = ref0.time_index(t_start)
    j_end = ref0.time_index(t_end)
    nodes = ref0.nodes
    dx = float(nodes[1] - nodes[0])
    w = _weights_for(nodes)
    gamma = problem.gamma
    boundary = problem.boundary

    t_total0 = _time.perf_counter()
    basis_s = proj_s = 0.0

    def bases_at(t):
        nonlocal basis_s
        tic = _time.perf_counter()
        out = {c: sources[c].basis_at(nodes, t, ()) for c in names}
        basis_s += _time.perf_counter() - tic
        return out

    n_rec = j_end - j0 + 1
    Phis = bases_at(times[j0])
    alphas = {}
    recons = {c: np.empty((n_rec, nodes.size)) for c in names}
    l2s = {c: np.empty(n_rec) for c in names}
    rels = {c: np.empty(n_rec) for c in names}
    alpha_hist = {}
    for c in names:
        tic = _time.perf_counter()
        alphas[c] = least_squares(Phis[c].Phi, references[c].values[0, j0])
        proj_s += _time.perf_counter() - tic
        alpha_hist[c] = np.empty((n_rec, Phis[c].r))
        alpha_hist[c][0] = alphas[c]
        recons[c][0] = Phis[c].Phi @ alphas[c]
        l2s[c][0], rels[c][0] = _errors_against(recons[c][0], references[c].values[0, j0], w)

    U = np.stack([recons[c][0] for c in names])
    for out, j in enumerate(range(j0 + 1, j_end + 1)):
        dt = float(times[j] - times[j - 1])
        rhs = lambda V: weno5_euler_rhs(V, dx, gamma, boundary)
        if mode == "learning":
            tic = _time.perf_counter()
            for c in names:
                Phi_c = sources[c].basis_at(nodes, times[j], ())
                alphas[c] = coeff_values(sources[c].model, times[j], ())
                recons[c][out + 1] = Phi_c.Phi @ alphas[c]
            basis_s += _time.perf_counter() - tic
        elif stage_projection:
            # project after each RK stage with the basis at the stage time
            stage_states = [(times[j - 1] + dt, None), (times[j - 1] + 0.5 * dt, None), (times[j], None)]
            u0 = U
            u1 = u0 + dt * rhs(u0)
            u1 = _project_system(u1, bases_at(stage_states[0][0]), names, alphas)
            u2 = 0.75 * u0 + 0.25 * (u1 + dt * rhs(u1))
            u2 = _project_system(u2, bases_at(stage_states[1][0]), names, alphas)
            u3 = u0 / 3.0 + 2.0 / 3.0 * (u2 + dt * rhs(u2))
            Phis = bases_at(times[j])
            tic = _time.perf_counter()
            for c_idx, c in enumerate(names):
                alphas[c] = least_squares(Phis[c].Phi, u3[c_idx])
                recons[c][out + 1] = Phis[c].Phi @ alphas[c]
            proj_s += _time.perf_counter() - tic
            U = np.stack([recons[c][out + 1] for c in names])
        else:
            Phis = bases_at(times[j])
            tic = _time.perf_counter()
            U_full = ssp_rk3_step(rhs, U, dt)
            for c_idx, c in enumerate(names):
                alphas[c] = least_squares(Phis[c].Phi, U_full[c_idx])
                recons[c][out + 1] = Phis[c].Phi @ alphas[c]
            proj_s += _time.perf_counter() - tic
            U = np.stack([recons[c][out + 1] for c in names])
        for c in names:
            alpha_hist[c][out + 1] = alphas[c]
            l2s[c][out + 1], rels[c][out + 1] = _errors_against(
                recons[c][out + 1], references[c].values[0, j], w
            )

    total = _time.perf_counter() - t_total0
    timing = {"basis_eval_s": basis_s, "projection_solve_s": proj_s, "total_s": total}
    results = {}
    for c in names:
        results[c] = RomRunResult(
            times[j0 : j_end + 1].copy(),
            alpha_hist[c],
            recons[c],
            l2s[c],
            rels[c],
            timing,
            metadata={"mode": mode, "variable": c, "r": int(alpha_hist[c].shape[1]),
                      "t_start": float(times[j0]), "t_end": float(times[j_end]),
                      "stage_projection": stage_projection},
        )
    return results


def _project_system(U, Phis, names, alphas):
    out = np.empty_like(U)
    for c_idx, c in enumerate(names):
        a = least_squares(Phis[c].Phi, U[c_idx])
        alphas[c] = a
        out[c_idx] = Phis[c].Phi @ a
    return out
