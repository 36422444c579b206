"""1D compressible Euler solver: WENO5 finite differences + SSP-RK3.

Componentwise fifth-order WENO reconstruction of globally Lax-Friedrichs
split fluxes, f(+/-) = (f +/- alpha_max u)/2 with alpha_max the largest
|u| + sqrt(gamma p / rho) on the grid. Ghost nodes copy the edge state
(outflow) or wrap (periodic). Time stepping is the three-stage SSP-RK3.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import PositivityError
from .fom import FomProblem, Mesh1D
from .snapshots import SnapshotSet

WENO_EPS = 1e-6
WENO_LINEAR_WEIGHTS = (0.1, 0.6, 0.3)

EULER_VARIABLES = ("density", "momentum", "energy")


@dataclass
class EulerState:
    """Conserved nodal triple (rho, rho*u, E) with positivity accessors."""

    conserved: np.ndarray  # (3, n_nodes)
    gamma: float

    @property
    def density(self) -> np.ndarray:
        return self.conserved[0]

    @property
    def velocity(self) -> np.ndarray:
        return self.conserved[1] / self.conserved[0]

    @property
    def pressure(self) -> np.ndarray:
        rho, m, E = self.conserved
        return (self.gamma - 1.0) * (E - 0.5 * m * m / rho)

    @property
    def sound_speed(self) -> np.ndarray:
        return np.sqrt(self.gamma * self.pressure / self.density)


def conserved_from_primitive(rho, u, p, gamma):
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    E = p / (gamma - 1.0) + 0.5 * rho * u * u
    return np.stack([rho, rho * u, E])


def _check_positivity(U, gamma, step=None, time=None):
    rho = U[0]
    if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        node = int(np.argmin(np.where(np.isfinite(rho), rho, -np.inf)))
        raise PositivityError("density", node, float(rho[node]), step=step, time=time)
    p = (gamma - 1.0) * (U[2] - 0.5 * U[1] * U[1] / rho)
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        node = int(np.argmin(np.where(np.isfinite(p), p, -np.inf)))
        raise PositivityError("pressure", node, float(p[node]), step=step, time=time)
    return p


def _physical_flux(U, p):
    rho, m, E = U
    u = m / rho
    return np.stack([m, m * u + p, u * (E + p)])


def _extend3(U, boundary):
    """Three ghost nodes per side along the last axis."""
    if boundary == "periodic":
        core = U[..., :-1]
        return np.concatenate([core[..., -3:], U, core[..., 1:4]], axis=-1)
    left = np.repeat(U[..., :1], 3, axis=-1)
    right = np.repeat(U[..., -1:], 3, axis=-1)
    return np.concatenate([left, U, right], axis=-1)


def _weno5_plus(v):
    """Upwind-biased WENO5 interface values from sliding 5-node windows.

    For input windows (i-2..i+2) the output is the reconstruction at the
    right interface i+1/2 of the window center.
    """
    vm2 = v[..., :-4]
    vm1 = v[..., 1:-3]
    v0 = v[..., 2:-2]
    vp1 = v[..., 3:-1]
    vp2 = v[..., 4:]
    p0 = (2.0 * vm2 - 7.0 * vm1 + 11.0 * v0) / 6.0
    p1 = (-vm1 + 5.0 * v0 + 2.0 * vp1) / 6.0
    p2 = (2.0 * v0 + 5.0 * vp1 - vp2) / 6.0
    b0 = 13.0 / 12.0 * (vm2 - 2.0 * vm1 + v0) ** 2 + 0.25 * (vm2 - 4.0 * vm1 + 3.0 * v0) ** 2
    b1 = 13.0 / 12.0 * (vm1 - 2.0 * v0 + vp1) ** 2 + 0.25 * (vm1 - vp1) ** 2
    b2 = 13.0 / 12.0 * (v0 - 2.0 * vp1 + vp2) ** 2 + 0.25 * (3.0 * v0 - 4.0 * vp1 + vp2) ** 2
    d0, d1, d2 = WENO_LINEAR_WEIGHTS
    a0 = d0 / (WENO_EPS + b0) ** 2
    a1 = d1 / (WENO_EPS + b1) ** 2
    a2 = d2 / (WENO_EPS + b2) ** 2
    return (a0 * p0 + a1 * p1 + a2 * p2) / (a0 + a1 + a2)


def weno5_smoothness_indicators(v):
    """The three Jiang-Shu indicators for a single 5-node stencil."""
    vm2, vm1, v0, vp1, vp2 = (float(x) for x in v)
    b0 = 13.0 / 12.0 * (vm2 - 2.0 * vm1 + v0) ** 2 + 0.25 * (vm2 - 4.0 * vm1 + 3.0 * v0) ** 2
    b1 = 13.0 / 12.0 * (vm1 - 2.0 * v0 + vp1) ** 2 + 0.25 * (vm1 - vp1) ** 2
    b2 = 13.0 / 12.0 * (v0 - 2.0 * vp1 + vp2) ** 2 + 0.25 * (3.0 * v0 - 4.0 * vp1 + vp2) ** 2
    return b0, b1, b2


def max_wave_speed(U, gamma) -> float:
    rho, m, _ = U
    p = _check_positivity(U, gamma)
    return float(np.max(np.abs(m / rho) + np.sqrt(gamma * p / rho)))


def weno5_euler_rhs(U: np.ndarray, dx: float, gamma: float, boundary: str = "outflow") -> np.ndarray:
    """Semi-discrete tendency -(f_hat_{j+1/2} - f_hat_{j-1/2}) / dx."""
    U = np.asarray(U, dtype=float)
    p = _check_positivity(U, gamma)
    F = _physical_flux(U, p)
    alpha = float(np.max(np.abs(U[1] / U[0]) + np.sqrt(gamma * p / U[0])))
    fp = 0.5 * (F + alpha * U)
    fm = 0.5 * (F - alpha * U)
    fpe = _extend3(fp, boundary)
    fme = _extend3(fm, boundary)
    n = U.shape[1]
    # interfaces -1/2 .. N+1/2: n+1 values
    fhat_p = _weno5_plus(fpe)[..., 0 : n + 1]
    fhat_m = _weno5_plus(fme[..., ::-1])[..., ::-1][..., 1 : n + 2]
    fhat = fhat_p + fhat_m
    rhs = -(fhat[..., 1:] - fhat[..., :-1]) / dx
    if boundary == "periodic":
        rhs[..., -1] = rhs[..., 0]
    return rhs


def ssp_rk3_step(rhs: Callable, u_n: np.ndarray, dt: float) -> np.ndarray:
    """Third-order strong-stability-preserving Runge-Kutta step."""
    u1 = u_n + dt * rhs(u_n)
    u2 = 0.75 * u_n + 0.25 * (u1 + dt * rhs(u1))
    return u_n / 3.0 + 2.0 / 3.0 * (u2 + dt * rhs(u2))


def sod_problem(gamma: float = 3.0, interface: float = 0.0) -> FomProblem:
    """Shock-tube initial data (1, 0, 1) | (0.125, 0, 0.1) split at x=0."""

    def initial(x, _mu=()):
        x = np.asarray(x, dtype=float)
        rho = np.where(x < interface, 1.0, 0.125)
        u = np.zeros_like(x)
        p = np.where(x < interface, 1.0, 0.1)
        return conserved_from_primitive(rho, u, p, gamma)

    return FomProblem(
        law="euler",
        initial_condition=initial,
        boundary="outflow",
        gamma=gamma,
        descriptor={"name": "sod", "gamma": gamma},
    )


def run_fom_euler(
    problem: FomProblem,
    mesh: Mesh1D,
    t_end: float,
    cfl: float = 0.6,
    record_stride: int = 1,
) -> dict:
    """March the Euler system to t_end; returns one SnapshotSet per variable.

    The time step follows dt = cfl*dx/alpha_max recomputed every step (the
    final step is clipped to land exactly on t_end), so the recorded times
    are non-uniform.
    """
    dx = mesh.spacing
    U = np.asarray(problem.initial_condition(mesh.nodes, ()), dtype=float)
    gamma = problem.gamma
    boundary = problem.boundary
    times = [0.0]
    history = [U.copy()]
    t = 0.0
    step = 0
    while t < t_end - 1e-12:
        step += 1
        alpha = max_wave_speed(U, gamma)
        dt = min(cfl * dx / alpha, t_end - t)
        try:
            U = ssp_rk3_step(lambda V: weno5_euler_rhs(V, dx, gamma, boundary), U, dt)
            _check_positivity(U, gamma, step=step, time=t + dt)
        except PositivityError:
            raise
        t += dt
        if step % record_stride == 0 or t >= t_end - 1e-12:
            times.append(t)
            history.append(U.copy())
    stacked = np.stack(history)  # (n_rec, 3, n_nodes)
    out = {}
    for c, name in enumerate(EULER_VARIABLES):
        out[name] = SnapshotSet(
            mesh.nodes.copy(),
            np.asarray(times),
            np.zeros((1, 0)),
            stacked[None, :, c, :].copy(),
            dict(problem.descriptor, law="euler", variable=name, cfl=cfl),
        )
    return out
