"""Full-order 1D solvers for scalar conservation laws.

The implicit stepper advances ``u_t + (f(u))_x = 0`` with a conservative
flux-difference operator D and a theta scheme,

    F(u^{n+1}) = b^n,   F(u) = u + dt*theta*D(u),
    b^n = u^n - dt*(1-theta)*D(u^n),

so one step is a single operator equation (theta=1 backward Euler,
theta=1/2 Crank-Nicolson). Boundary conditions enter through the numerical
fluxes via ghost states: zero-inflow uses a zero ghost, outflow copies the
edge value, periodic wraps (node N duplicates node 0).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SolverError, TransromError
from .linalg import gmres, newton_solve
from .snapshots import SnapshotSet

# ---------------------------------------------------------------------------
# meshes


@dataclass
class Mesh1D:
    nodes: np.ndarray
    kind: str = "uniform"

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim != 1 or self.nodes.size < 2:
            raise ValueError("a mesh needs at least two nodes")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")

    @classmethod
    def uniform(cls, lo: float, hi: float, n_cells: int) -> "Mesh1D":
        return cls(np.linspace(lo, hi, n_cells + 1))

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def is_uniform(self) -> bool:
        d = np.diff(self.nodes)
        # absolute floor covers linspace ulp jitter on fine meshes
        tol = max(1e-12 * abs(d[0]), 8 * np.finfo(float).eps * np.abs(self.nodes).max())
        return bool(np.all(np.abs(d - d[0]) <= tol))

    @property
    def spacing(self) -> float:
        if not self.is_uniform:
            raise ValueError("spacing is only defined for uniform meshes")
        return float(self.nodes[1] - self.nodes[0])

    def node_weights(self) -> np.ndarray:
        """Per-node quadrature/flux-difference weights.

        Uniform meshes weight every node by dx (the scheme and the error
        norms both sum j=0..N with weight dx); nonuniform meshes use dual
        cell widths with half cells at the two boundary nodes.
        """
        if self.is_uniform:
            return np.full(self.n_nodes, self.spacing)
        w = np.empty(self.n_nodes)
        d = np.diff(self.nodes)
        w[0] = 0.5 * d[0]
        w[-1] = 0.5 * d[-1]
        w[1:-1] = 0.5 * (d[:-1] + d[1:])
        return w


MOVING_MESH_DOMAIN = (0.0, 5.0)
MOVING_MESH_H_REFINE = 1.0 / 500.0
MOVING_MESH_H_COARSE = 1.0 / 125.0
MOVING_MESH_BAND = (0.5, 1.5)


def moving_mesh_nodes(
    t: float,
    h_refine: float = MOVING_MESH_H_REFINE,
    h_coarse: float = MOVING_MESH_H_COARSE,
    domain: tuple = MOVING_MESH_DOMAIN,
    band: tuple = MOVING_MESH_BAND,
) -> Mesh1D:
    """Mesh tracking a band around the advected discontinuity.

    The refined band [band_lo + t, band_hi + t] keeps spacing ``h_refine``
    and the complement keeps ``h_coarse``; the band start is snapped to the
    coarse lattice so the node count stays fixed as the band moves. Any
    residual misfit at the right endpoint is absorbed in the final cell.
    """
    lo, hi = domain
    band_len = band[1] - band[0]
    n_band = round(band_len / h_refine)
    n_coarse = round((hi - lo - band_len) / h_coarse)
    n_left = int(math.floor((band[0] + t - lo) / h_coarse + 1e-9))
    n_left = min(max(n_left, 0), n_coarse)
    n_right = n_coarse - n_left
    left_end = lo + n_left * h_coarse
    nodes = np.concatenate(
        [
            lo + np.arange(n_left + 1) * h_coarse,
            left_end + np.arange(1, n_band + 1) * h_refine,
            left_end + band_len + np.arange(1, n_right + 1) * h_coarse,
        ]
    )
    nodes[-1] = hi
    return Mesh1D(nodes, kind="moving")


def remap_solution(old_mesh: Mesh1D, new_mesh: Mesh1D, u: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation of nodal values onto a new mesh.

    Not conservative; the conservation drift it introduces is measured by
    the callers rather than hidden.
    """
    span = old_mesh.nodes[-1] - old_mesh.nodes[0]
    if (
        abs(old_mesh.nodes[0] - new_mesh.nodes[0]) > 1e-9 * span
        or abs(old_mesh.nodes[-1] - new_mesh.nodes[-1]) > 1e-9 * span
    ):
        raise ValueError("meshes do not span the same interval")
    return np.interp(new_mesh.nodes, old_mesh.nodes, u)


# ---------------------------------------------------------------------------
# problems


LAWS = ("linear_advection", "variable_advection", "burgers", "euler")
BOUNDARIES = ("zero_inflow", "periodic", "outflow")


@dataclass
class FomProblem:
    """PDE descriptor: flux law, speed field, initial/boundary data.

    ``initial_condition(x, mu)`` returns nodal values (for the Euler system
    it returns a (3, n) conserved state). ``speed_field(x, mu)`` supplies
    c(x; mu) for the variable-coefficient law and must stay positive for
    the upwind-biased flux.
    """

    law: str
    initial_condition: Callable
    boundary: str = "zero_inflow"
    parameter_domain: np.ndarray | None = None
    advection_speed: float = 1.0
    speed_field: Callable | None = None
    gamma: float = 3.0
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.law not in LAWS:
            raise ValueError(f"unknown law {self.law!r}; expected one of {LAWS}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}; expected one of {BOUNDARIES}")
        if self.law == "euler" and self.gamma <= 1.0:
            raise ValueError("gamma must exceed 1 for the gas-dynamics law")
        if self.law == "variable_advection" and self.speed_field is None:
            raise ValueError("variable_advection requires a speed_field")

    @property
    def mu_dim(self) -> int:
        if self.parameter_domain is None:
            return 0
        return np.asarray(self.parameter_domain).shape[0]


# ---------------------------------------------------------------------------
# numerical fluxes (interface values from left/right states)


def flux_upwind_biased(c_j, c_j1, u_j, u_j1):
    """Upwind-biased interface flux 3/4 c_j u_j + 1/4 c_{j+1} u_{j+1}."""
    return 0.75 * c_j * u_j + 0.25 * c_j1 * u_j1


def flux_lf_burgers(u_j, u_j1, dx, dt):
    """Lax-Friedrichs-type flux for f(u)=u^2/2 with viscosity dx/(2 dt)."""
    return 0.5 * (0.5 * u_j * u_j + 0.5 * u_j1 * u_j1) - (dx / (2.0 * dt)) * (u_j1 - u_j)


def _extend(u: np.ndarray, boundary: str) -> np.ndarray:
    """Add one ghost entry per side along axis 0.

    The same extension linearizes correctly: the inflow ghost is constant
    (derivative zero) and the outflow ghost copies the edge value.
    """
    if boundary == "periodic":
        core = u[:-1]
        return np.concatenate([core[-1:], u, core[1:2]], axis=0)
    left = np.zeros_like(u[:1]) if boundary == "zero_inflow" else u[:1]
    right = u[-1:]
    return np.concatenate([left, u, right], axis=0)


def _column_shape(arr: np.ndarray, like: np.ndarray) -> np.ndarray:
    return arr[:, None] if like.ndim == 2 else arr


@dataclass
class OneStepOperator:
    """One implicit step F(u^{n+1}) = b^n in operator form.

    ``apply_F`` and ``jacobian_apply`` accept a vector or a matrix of
    stacked column vectors, which is what the projection stage needs to
    form reduced operators cheaply.
    """

    apply_F: Callable
    rhs: Callable
    jacobian_apply: Callable
    is_linear: bool
    n_nodes: int
    dt: float
    scheme: str


def build_step_operator(
    problem: FomProblem,
    mesh: Mesh1D,
    dt: float,
    mu=(),
    scheme: str = "backward_euler",
) -> OneStepOperator:
    if scheme == "backward_euler":
        theta = 1.0
    elif scheme == "crank_nicolson":
        theta = 0.5
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    w = mesh.node_weights()
    boundary = problem.boundary
    mu = np.atleast_1d(np.asarray(mu, dtype=float)) if np.ndim(mu) else np.asarray(mu, dtype=float)

    if problem.law in ("linear_advection", "variable_advection"):
        if problem.law == "linear_advection":
            c_nodes = np.full(mesh.n_nodes, problem.advection_speed)
            ghost_left = problem.advection_speed
            ghost_right = problem.advection_speed
            upwind_only = True
        else:
            c_nodes = np.asarray(problem.speed_field(mesh.nodes, mu), dtype=float)
            x_l = mesh.nodes[0] - (mesh.nodes[1] - mesh.nodes[0])
            x_r = mesh.nodes[-1] + (mesh.nodes[-1] - mesh.nodes[-2])
            ghost_left = float(problem.speed_field(np.array([x_l]), mu)[0])
            ghost_right = float(problem.speed_field(np.array([x_r]), mu)[0])
            upwind_only = False
        if np.any(c_nodes <= 0):
            raise SolverError("the upwind-biased flux requires a positive speed field")
        if boundary == "periodic":
            ce = np.concatenate([c_nodes[-2:-1], c_nodes, c_nodes[1:2]])
        else:
            ce = np.concatenate([[ghost_left], c_nodes, [ghost_right]])

        def apply_D(u):
            ue = _extend(np.asarray(u, dtype=float), boundary)
            cl = _column_shape(ce[:-1], ue)
            cr = _column_shape(ce[1:], ue)
            if upwind_only:
                f = cl * ue[:-1]  # pure upwind: interface takes the left state
            else:
                f = flux_upwind_biased(cl, cr, ue[:-1], ue[1:])
            d = (f[1:] - f[:-1]) / _column_shape(w, f)
            if boundary == "periodic":
                d[-1] = d[0]
            return d

        def apply_F(u):
            return u + (dt * theta) * apply_D(u)

        def rhs(u_n):
            if theta == 1.0:
                return np.asarray(u_n, dtype=float).copy()
            return u_n - (dt * (1.0 - theta)) * apply_D(u_n)

        def jacobian_apply(_point, v):
            return apply_F(v)  # F is linear here

        return OneStepOperator(apply_F, rhs, jacobian_apply, True, mesh.n_nodes, dt, scheme)

    if problem.law == "burgers":
        dx = mesh.spacing  # the LF-type flux uses the uniform spacing
        lam = dx / (2.0 * dt)

        def apply_D(u):
            ue = _extend(np.asarray(u, dtype=float), boundary)
            f = flux_lf_burgers(ue[:-1], ue[1:], dx, dt)
            d = (f[1:] - f[:-1]) / _column_shape(w, f)
            if boundary == "periodic":
                d[-1] = d[0]
            return d

        def apply_F(u):
            return u + (dt * theta) * apply_D(u)

        def rhs(u_n):
            if theta == 1.0:
                return np.asarray(u_n, dtype=float).copy()
            return u_n - (dt * (1.0 - theta)) * apply_D(u_n)

        def jacobian_apply(point, v):
            # d f_{j+1/2} = (u_j/2 + lam) v_j + (u_{j+1}/2 - lam) v_{j+1}
            pe = _extend(np.asarray(point, dtype=float), boundary)
            ve = _extend(np.asarray(v, dtype=float), boundary)
            al = _column_shape(0.5 * pe[:-1] + lam, ve)
            ar = _column_shape(0.5 * pe[1:] - lam, ve)
            df = al * ve[:-1] + ar * ve[1:]
            d = (df[1:] - df[:-1]) / _column_shape(w, df)
            if boundary == "periodic":
                d[-1] = d[0]
            return v + (dt * theta) * d

        return OneStepOperator(apply_F, rhs, jacobian_apply, False, mesh.n_nodes, dt, scheme)

    raise ValueError(f"no implicit operator for law {problem.law!r}")


@dataclass
class SolverOptions:
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    gmres_tol: float = 1e-10
    gmres_restart: int = 30
    gmres_max_iter: int = 500


def implicit_step(
    problem: FomProblem,
    mesh: Mesh1D,
    u_n: np.ndarray,
    dt: float,
    mu=(),
    scheme: str = "backward_euler",
    options: SolverOptions | None = None,
    operator: OneStepOperator | None = None,
) -> np.ndarray:
    """Advance one implicit step; builds the operator unless one is passed."""
    op = operator if operator is not None else build_step_operator(problem, mesh, dt, mu, scheme)
    opts = options or SolverOptions()
    b = op.rhs(u_n)
    if op.is_linear:
        return gmres(
            op.apply_F,
            b,
            tol=opts.gmres_tol,
            restart=opts.gmres_restart,
            max_iter=opts.gmres_max_iter,
            x0=np.asarray(u_n, dtype=float),
        )
    return newton_solve(
        lambda u: op.apply_F(u) - b,
        op.jacobian_apply,
        np.asarray(u_n, dtype=float),
        tol=opts.newton_tol,
        max_iter=opts.newton_max_iter,
        gmres_restart=opts.gmres_restart,
        gmres_max_iter=opts.gmres_max_iter,
    )


# ---------------------------------------------------------------------------
# trajectory drivers


def exact_advection(u0: Callable, x, t: float, speed: float = 1.0):
    """Exact constant-speed advection: u(x, t) = u0(x - speed*t)."""
    return u0(np.asarray(x, dtype=float) - speed * t)


def exact_advection_snapshots(
    u0: Callable,
    mesh: Mesh1D,
    times,
    speed: float = 1.0,
    problem_descriptor: dict | None = None,
) -> SnapshotSet:
    """Sample the exact advection solution on a fixed mesh (one trajectory)."""
    times = np.asarray(times, dtype=float)
    values = np.empty((1, times.size, mesh.n_nodes))
    for j, t in enumerate(times):
        values[0, j] = exact_advection(u0, mesh.nodes, t, speed)
    return SnapshotSet(
        mesh.nodes.copy(),
        times,
        np.zeros((1, 0)),
        values,
        problem_descriptor or {"law": "linear_advection", "generator": "exact"},
    )


def run_fom(
    problem: FomProblem,
    mesh: Mesh1D,
    mu_values,
    dt: float,
    t_end: float,
    scheme: str = "backward_euler",
    record_stride: int = 1,
    options: SolverOptions | None = None,
    threads: int = 1,
) -> SnapshotSet:
    """Advance every parameter from t=0 to t_end, recording nodal values.

    ``mu_values`` is an (n_mu, mu_dim) table (mu_dim may be 0: one run).
    Solver failures are re-raised annotated with the failing step/time.
    """
    mu_values = np.asarray(mu_values, dtype=float)
    if mu_values.ndim == 1:
        mu_values = mu_values[:, None]
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(t_end, dt):
        n_steps = int(math.ceil(t_end / dt - 1e-12))
    record = list(range(0, n_steps + 1, record_stride))
    if record[-1] != n_steps:
        record.append(n_steps)
    times = np.array([k * dt for k in record])

    def one_trajectory(mu):
        op = build_step_operator(problem, mesh, dt, mu, scheme)
        u = np.asarray(problem.initial_condition(mesh.nodes, mu), dtype=float)
        out = np.empty((len(record), mesh.n_nodes))
        pos = 0
        if record[0] == 0:
            out[0] = u
            pos = 1
        for step in range(1, n_steps + 1):
            try:
                u = implicit_step(problem, mesh, u, dt, mu, scheme, options, operator=op)
            except TransromError as exc:
                raise SolverError(f"full-order step failed: {exc}", step=step, time=step * dt) from exc
            if pos < len(record) and record[pos] == step:
                out[pos] = u
                pos += 1
        return out

    if threads > 1 and mu_values.shape[0] > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            stacked = list(pool.map(one_trajectory, mu_values))
    else:
        stacked = [one_trajectory(mu) for mu in mu_values]
    values = np.stack(stacked, axis=0)
    return SnapshotSet(
        mesh.nodes.copy(),
        times,
        mu_values,
        values,
        dict(problem.descriptor, law=problem.law, scheme=scheme, dt=dt),
    )


def run_fom_moving_mesh(
    problem: FomProblem,
    dt: float,
    t_end: float,
    mesh_rule: Callable[[float], Mesh1D] = moving_mesh_nodes,
    options: SolverOptions | None = None,
) -> SnapshotSet:
    """Backward-Euler upwind run on a mesh rebuilt (and remapped) per step."""
    n_steps = int(round(t_end / dt))
    mesh = mesh_rule(0.0)
    u = np.asarray(problem.initial_condition(mesh.nodes, ()), dtype=float)
    nodes_hist = [mesh.nodes.copy()]
    values = [u.copy()]
    for step in range(1, n_steps + 1):
        t_next = step * dt
        new_mesh = mesh_rule(t_next)
        u = remap_solution(mesh, new_mesh, u)
        try:
            u = implicit_step(problem, new_mesh, u, dt, (), "backward_euler", options)
        except TransromError as exc:
            raise SolverError(f"moving-mesh step failed: {exc}", step=step, time=t_next) from exc
        mesh = new_mesh
        nodes_hist.append(mesh.nodes.copy())
        values.append(u.copy())
    times = np.arange(n_steps + 1) * dt
    return SnapshotSet(
        np.stack(nodes_hist),
        times,
        np.zeros((1, 0)),
        np.stack(values)[None, :, :],
        dict(problem.descriptor, law=problem.law, scheme="backward_euler", dt=dt, moving_mesh=True),
        per_time_meshes=True,
    )
